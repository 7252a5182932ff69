#include "fairbat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fairbat {
namespace {

using Parents = std::vector<std::shared_ptr<TensorImpl>>;

bool any_needs_grad(const Parents& parents) {
  for (const auto& p : parents)
    if (p->needs_grad()) return true;
  return false;
}

Tensor make_node(std::vector<int> shape, const char* op, Parents parents,
                 std::function<void(TensorImpl&)> backprop) {
  auto impl = std::make_shared<TensorImpl>();
  int64_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data = std::make_shared<std::vector<float>>(n, 0.0f);
  impl->op = op;
  if (any_needs_grad(parents)) {
    impl->parents = std::move(parents);
    impl->backprop = std::move(backprop);
  }
  return Tensor(std::move(impl));
}

// Adds `g` into the parent's grad buffer; skipped for constants.
void accum(TensorImpl* p, const float* g, int64_t n) {
  if (!p->needs_grad()) return;
  auto& buf = p->ensure_grad();
  for (int64_t i = 0; i < n; ++i) buf[i] += g[i];
}

void accum_scaled(TensorImpl* p, const float* g, int64_t n, float s) {
  if (!p->needs_grad()) return;
  auto& buf = p->ensure_grad();
  for (int64_t i = 0; i < n; ++i) buf[i] += g[i] * s;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

bool is_suffix(const std::vector<int>& small, const std::vector<int>& big) {
  if (small.size() >= big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const bool bcast = is_suffix(b.shape(), a.shape());
  if (!bcast) check_same_shape("add", a, b);
  int64_t n = a.numel(), bn = b.numel();
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  Tensor out = make_node(a.shape(), "add", {ai, bi}, [=](TensorImpl& self) {
    accum(ai.get(), self.grad.data(), n);
    if (!bi->needs_grad()) return;
    auto& gb = bi->ensure_grad();
    for (int64_t i = 0; i < n; ++i) gb[i % bn] += self.grad[i];
  });
  auto& o = *out.impl()->data;
  const auto& av = *ai->data;
  const auto& bv = *bi->data;
  for (int64_t i = 0; i < n; ++i) o[i] = av[i] + bv[i % bn];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  int64_t n = a.numel();
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  Tensor out = make_node(a.shape(), "sub", {ai, bi}, [=](TensorImpl& self) {
    accum(ai.get(), self.grad.data(), n);
    accum_scaled(bi.get(), self.grad.data(), n, -1.0f);
  });
  auto& o = *out.impl()->data;
  for (int64_t i = 0; i < n; ++i) o[i] = (*ai->data)[i] - (*bi->data)[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  int64_t n = a.numel();
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  Tensor out = make_node(a.shape(), "mul", {ai, bi}, [=](TensorImpl& self) {
    if (ai->needs_grad()) {
      auto& ga = ai->ensure_grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] * (*bi->data)[i];
    }
    if (bi->needs_grad()) {
      auto& gb = bi->ensure_grad();
      for (int64_t i = 0; i < n; ++i) gb[i] += self.grad[i] * (*ai->data)[i];
    }
  });
  auto& o = *out.impl()->data;
  for (int64_t i = 0; i < n; ++i) o[i] = (*ai->data)[i] * (*bi->data)[i];
  return out;
}

Tensor scalar_mul(const Tensor& a, float c) {
  int64_t n = a.numel();
  auto ai = a.impl_ptr();
  Tensor out = make_node(a.shape(), "scalar_mul", {ai}, [=](TensorImpl& self) {
    accum_scaled(ai.get(), self.grad.data(), n, c);
  });
  auto& o = *out.impl()->data;
  for (int64_t i = 0; i < n; ++i) o[i] = (*ai->data)[i] * c;
  return out;
}

Tensor scalar_add(const Tensor& a, float c) {
  int64_t n = a.numel();
  auto ai = a.impl_ptr();
  Tensor out = make_node(a.shape(), "scalar_add", {ai}, [=](TensorImpl& self) {
    accum(ai.get(), self.grad.data(), n);
  });
  auto& o = *out.impl()->data;
  for (int64_t i = 0; i < n; ++i) o[i] = (*ai->data)[i] + c;
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw TensorError("matmul: incompatible shapes " + shape_str(a.shape()) +
                      " x " + shape_str(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto ai = a.impl_ptr(), bi = b.impl_ptr();
  Tensor out = make_node({m, n}, "matmul", {ai, bi}, [=](TensorImpl& self) {
    const auto& av = *ai->data;
    const auto& bv = *bi->data;
    if (ai->needs_grad()) {
      auto& ga = ai->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) {
          double acc = 0.0;
          for (int t = 0; t < n; ++t) acc += self.grad[i * n + t] * bv[j * n + t];
          ga[i * k + j] += static_cast<float>(acc);
        }
    }
    if (bi->needs_grad()) {
      auto& gb = bi->ensure_grad();
      for (int j = 0; j < k; ++j)
        for (int t = 0; t < n; ++t) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += av[i * k + j] * self.grad[i * n + t];
          gb[j * n + t] += static_cast<float>(acc);
        }
    }
  });
  auto& o = *out.impl()->data;
  const auto& av = *ai->data;
  const auto& bv = *bi->data;
  for (int i = 0; i < m; ++i)
    for (int t = 0; t < n; ++t) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += static_cast<double>(av[i * k + j]) * bv[j * n + t];
      o[i * n + t] = static_cast<float>(acc);
    }
  return out;
}

Tensor relu(const Tensor& a) {
  int64_t n = a.numel();
  auto ai = a.impl_ptr();
  Tensor out = make_node(a.shape(), "relu", {ai}, [=](TensorImpl& self) {
    if (!ai->needs_grad()) return;
    auto& ga = ai->ensure_grad();
    for (int64_t i = 0; i < n; ++i)
      if ((*ai->data)[i] > 0.0f) ga[i] += self.grad[i];
  });
  auto& o = *out.impl()->data;
  for (int64_t i = 0; i < n; ++i) o[i] = std::max(0.0f, (*ai->data)[i]);
  return out;
}

Tensor exp(const Tensor& a) {
  int64_t n = a.numel();
  auto ai = a.impl_ptr();
  Tensor out = make_node(a.shape(), "exp", {ai}, nullptr);
  auto oi = out.impl_ptr();
  auto& o = *oi->data;
  for (int64_t i = 0; i < n; ++i) o[i] = std::exp((*ai->data)[i]);
  if (ai->needs_grad()) {
    oi->parents = {ai};
    auto odata = oi->data;
    oi->backprop = [=](TensorImpl& self) {
      auto& ga = ai->ensure_grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] * (*odata)[i];
    };
  }
  return out;
}

Tensor log(const Tensor& a) {
  int64_t n = a.numel();
  auto ai = a.impl_ptr();
  for (int64_t i = 0; i < n; ++i)
    if (!((*ai->data)[i] > 0.0f))
      throw TensorError("log: non-positive input " + std::to_string((*ai->data)[i]));
  Tensor out = make_node(a.shape(), "log", {ai}, [=](TensorImpl& self) {
    if (!ai->needs_grad()) return;
    auto& ga = ai->ensure_grad();
    for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] / (*ai->data)[i];
  });
  auto& o = *out.impl()->data;
  for (int64_t i = 0; i < n; ++i) o[i] = std::log((*ai->data)[i]);
  return out;
}

Tensor clamp_min(const Tensor& a, float c) {
  int64_t n = a.numel();
  auto ai = a.impl_ptr();
  Tensor out = make_node(a.shape(), "clamp_min", {ai}, [=](TensorImpl& self) {
    if (!ai->needs_grad()) return;
    auto& ga = ai->ensure_grad();
    for (int64_t i = 0; i < n; ++i)
      if ((*ai->data)[i] > c) ga[i] += self.grad[i];
  });
  auto& o = *out.impl()->data;
  for (int64_t i = 0; i < n; ++i) o[i] = std::max(c, (*ai->data)[i]);
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
    throw TensorError("conv2d: expected x [B,C,H,W], w [F,C,kh,kw], got " +
                      shape_str(xs) + " and " + shape_str(ws));
  const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int F = ws[0], kh = ws[2], kw = ws[3];
  if (bias.shape() != std::vector<int>{F})
    throw TensorError("conv2d: bias shape " + shape_str(bias.shape()) +
                      " does not match filter count " + std::to_string(F));
  const int Ho = H + 2 * pad - kh + 1;
  const int Wo = W + 2 * pad - kw + 1;
  if (Ho <= 0 || Wo <= 0)
    throw TensorError("conv2d: kernel larger than padded input");

  auto xi = x.impl_ptr(), wi = w.impl_ptr(), bi = bias.impl_ptr();
  auto back = [=](TensorImpl& self) {
    const auto& xv = *xi->data;
    const auto& wv = *wi->data;
    const float* g = self.grad.data();
    if (xi->needs_grad()) {
      auto& gx = xi->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
          for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j) {
              float gv = g[((b * F + f) * Ho + i) * Wo + j];
              if (gv == 0.0f) continue;
              for (int c = 0; c < C; ++c)
                for (int u = 0; u < kh; ++u) {
                  int y = i + u - pad;
                  if (y < 0 || y >= H) continue;
                  for (int v = 0; v < kw; ++v) {
                    int z = j + v - pad;
                    if (z < 0 || z >= W) continue;
                    gx[((b * C + c) * H + y) * W + z] +=
                        gv * wv[((f * C + c) * kh + u) * kw + v];
                  }
                }
            }
    }
    if (wi->needs_grad()) {
      auto& gw = wi->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
          for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j) {
              float gv = g[((b * F + f) * Ho + i) * Wo + j];
              if (gv == 0.0f) continue;
              for (int c = 0; c < C; ++c)
                for (int u = 0; u < kh; ++u) {
                  int y = i + u - pad;
                  if (y < 0 || y >= H) continue;
                  for (int v = 0; v < kw; ++v) {
                    int z = j + v - pad;
                    if (z < 0 || z >= W) continue;
                    gw[((f * C + c) * kh + u) * kw + v] +=
                        gv * xv[((b * C + c) * H + y) * W + z];
                  }
                }
            }
    }
    if (bi->needs_grad()) {
      auto& gb = bi->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
          for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j)
              gb[f] += g[((b * F + f) * Ho + i) * Wo + j];
    }
  };
  Tensor out = make_node({B, F, Ho, Wo}, "conv2d", {xi, wi, bi}, back);
  auto& o = *out.impl()->data;
  const auto& xv = *xi->data;
  const auto& wv = *wi->data;
  const auto& bv = *bi->data;
  for (int b = 0; b < B; ++b)
    for (int f = 0; f < F; ++f)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          double acc = bv[f];
          for (int c = 0; c < C; ++c)
            for (int u = 0; u < kh; ++u) {
              int y = i + u - pad;
              if (y < 0 || y >= H) continue;
              for (int v = 0; v < kw; ++v) {
                int z = j + v - pad;
                if (z < 0 || z >= W) continue;
                acc += static_cast<double>(xv[((b * C + c) * H + y) * W + z]) *
                       wv[((f * C + c) * kh + u) * kw + v];
              }
            }
          o[((b * F + f) * Ho + i) * Wo + j] = static_cast<float>(acc);
        }
  return out;
}

Tensor max_pool2d(const Tensor& x, int k) {
  const auto& xs = x.shape();
  if (xs.size() != 4)
    throw TensorError("max_pool2d: expected [B,C,H,W], got " + shape_str(xs));
  const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  if (k < 1 || H % k != 0 || W % k != 0)
    throw TensorError("max_pool2d: window " + std::to_string(k) +
                      " does not divide " + shape_str(xs));
  const int Ho = H / k, Wo = W / k;
  auto xi = x.impl_ptr();
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(B) * C * Ho * Wo);
  Tensor out = make_node({B, C, Ho, Wo}, "max_pool2d", {xi}, [=](TensorImpl& self) {
    if (!xi->needs_grad()) return;
    auto& gx = xi->ensure_grad();
    for (size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += self.grad[i];
  });
  auto& o = *out.impl()->data;
  const auto& xv = *xi->data;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          float best = -std::numeric_limits<float>::infinity();
          int64_t best_idx = 0;
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
              int64_t idx = ((static_cast<int64_t>(b) * C + c) * H + i * k + u) * W +
                            j * k + v;
              if (xv[idx] > best) {
                best = xv[idx];
                best_idx = idx;
              }
            }
          int64_t oi = ((static_cast<int64_t>(b) * C + c) * Ho + i) * Wo + j;
          o[oi] = best;
          (*argmax)[oi] = best_idx;
        }
  return out;
}

Tensor flatten(const Tensor& x) {
  const auto& xs = x.shape();
  if (xs.size() < 2) throw TensorError("flatten: rank must be >= 2, got " + shape_str(xs));
  int rest = 1;
  for (size_t i = 1; i < xs.size(); ++i) rest *= xs[i];
  int64_t n = x.numel();
  auto xi = x.impl_ptr();
  Tensor out = make_node({xs[0], rest}, "flatten", {xi}, [=](TensorImpl& self) {
    accum(xi.get(), self.grad.data(), n);
  });
  *out.impl()->data = *xi->data;
  return out;
}

Tensor log_softmax(const Tensor& x) {
  const auto& xs = x.shape();
  if (xs.size() < 1 || xs.back() < 2)
    throw TensorError("log_softmax: last dim must be >= 2, got " + shape_str(xs));
  const int K = xs.back();
  const int64_t rows = x.numel() / K;
  auto xi = x.impl_ptr();
  Tensor out = make_node(xs, "log_softmax", {xi}, nullptr);
  auto oi = out.impl_ptr();
  auto& o = *oi->data;
  const auto& xv = *xi->data;
  for (int64_t r = 0; r < rows; ++r) {
    const float* row = xv.data() + r * K;
    float mx = row[0];
    for (int kk = 1; kk < K; ++kk) mx = std::max(mx, row[kk]);
    double lse = 0.0;
    for (int kk = 0; kk < K; ++kk) lse += std::exp(static_cast<double>(row[kk]) - mx);
    float log_lse = static_cast<float>(std::log(lse));
    for (int kk = 0; kk < K; ++kk) o[r * K + kk] = (row[kk] - mx) - log_lse;
  }
  if (xi->needs_grad()) {
    oi->parents = {xi};
    auto odata = oi->data;
    oi->backprop = [=](TensorImpl& self) {
      auto& gx = xi->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (int kk = 0; kk < K; ++kk) gsum += self.grad[r * K + kk];
        for (int kk = 0; kk < K; ++kk)
          gx[r * K + kk] += self.grad[r * K + kk] -
                            std::exp((*odata)[r * K + kk]) * static_cast<float>(gsum);
      }
    };
  }
  return out;
}

Tensor softmax(const Tensor& x) { return exp(log_softmax(x)); }

Tensor sum(const Tensor& x) {
  int64_t n = x.numel();
  auto xi = x.impl_ptr();
  Tensor out = make_node({1}, "sum", {xi}, [=](TensorImpl& self) {
    if (!xi->needs_grad()) return;
    auto& gx = xi->ensure_grad();
    for (int64_t i = 0; i < n; ++i) gx[i] += self.grad[0];
  });
  double acc = 0.0;
  for (float v : *xi->data) acc += v;
  (*out.impl()->data)[0] = static_cast<float>(acc);
  return out;
}

Tensor mean(const Tensor& x) {
  int64_t n = x.numel();
  auto xi = x.impl_ptr();
  const float inv = 1.0f / static_cast<float>(n);
  Tensor out = make_node({1}, "mean", {xi}, [=](TensorImpl& self) {
    if (!xi->needs_grad()) return;
    auto& gx = xi->ensure_grad();
    for (int64_t i = 0; i < n; ++i) gx[i] += self.grad[0] * inv;
  });
  double acc = 0.0;
  for (float v : *xi->data) acc += v;
  (*out.impl()->data)[0] = static_cast<float>(acc / static_cast<double>(n));
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  const auto& xs = x.shape();
  if (xs.size() != 2)
    throw TensorError("gather_rows: expected [b,K], got " + shape_str(xs));
  const int b = xs[0], K = xs[1];
  if (static_cast<int>(idx.size()) != b)
    throw TensorError("gather_rows: " + std::to_string(idx.size()) +
                      " indices for batch " + std::to_string(b));
  for (int i = 0; i < b; ++i)
    if (idx[i] < 0 || idx[i] >= K)
      throw TensorError("gather_rows: index " + std::to_string(idx[i]) +
                        " out of range [0," + std::to_string(K) + ")");
  auto xi = x.impl_ptr();
  auto indices = std::make_shared<std::vector<int>>(idx);
  Tensor out = make_node({b}, "gather_rows", {xi}, [=](TensorImpl& self) {
    if (!xi->needs_grad()) return;
    auto& gx = xi->ensure_grad();
    for (int i = 0; i < b; ++i) gx[i * K + (*indices)[i]] += self.grad[i];
  });
  auto& o = *out.impl()->data;
  for (int i = 0; i < b; ++i) o[i] = (*xi->data)[i * K + idx[i]];
  return out;
}

}  // namespace fairbat
