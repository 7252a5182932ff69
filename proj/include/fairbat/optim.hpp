#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fairbat/tensor.hpp"

namespace fairbat {

struct SgdOptions {
  float lr = 0.1f;
  float momentum = 0.0f;      // in [0,1)
  float weight_decay = 0.0f;  // >= 0
};

// Momentum SGD with L2 weight decay:
//   v <- momentum * v + (grad + wd * theta);  theta <- theta - lr * v
// Grads are zeroed after the step.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdOptions opts);

  void step(std::vector<std::pair<std::string, Tensor>>& params);

  void set_lr(float lr) { opts_.lr = lr; }
  float lr() const { return opts_.lr; }
  const SgdOptions& options() const { return opts_; }

 private:
  SgdOptions opts_;
  std::vector<std::vector<float>> velocity_;
};

}  // namespace fairbat
