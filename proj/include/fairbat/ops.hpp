#pragma once

#include <vector>

#include "fairbat/tensor.hpp"

namespace fairbat {

// Elementwise; b may also be a suffix-shaped tensor (e.g. a [n] bias added to
// [m,n]), in which case it broadcasts over the leading dims.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, float c);
Tensor scalar_add(const Tensor& a, float c);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // domain error on non-positive entries
Tensor clamp_min(const Tensor& a, float c);

// x: [B,C,H,W], w: [F,C,kh,kw], bias: [F]; stride 1, zero padding `pad`.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int pad);
// Window k, stride k; H and W must be divisible by k. Ties go to the first
// max in scan order so backward is deterministic.
Tensor max_pool2d(const Tensor& x, int k);
Tensor flatten(const Tensor& x);  // [B, ...] -> [B, rest]

// Row-wise over the last dim, max-subtracted for stability.
Tensor log_softmax(const Tensor& x);
Tensor softmax(const Tensor& x);  // exp(log_softmax(x))

Tensor sum(const Tensor& x);   // scalar, 64-bit accumulator
Tensor mean(const Tensor& x);  // scalar, 64-bit accumulator

// x: [b,K], idx: b labels in [0,K) -> [b] picking x[i, idx[i]].
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);

}  // namespace fairbat
