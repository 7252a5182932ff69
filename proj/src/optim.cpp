#include "fairbat/optim.hpp"

namespace fairbat {

SgdOptimizer::SgdOptimizer(SgdOptions opts) : opts_(opts) {
  if (opts_.lr <= 0.0f) throw Error("sgd: learning rate must be positive");
  if (opts_.momentum < 0.0f || opts_.momentum >= 1.0f)
    throw Error("sgd: momentum must be in [0,1)");
  if (opts_.weight_decay < 0.0f) throw Error("sgd: weight decay must be >= 0");
}

void SgdOptimizer::step(std::vector<std::pair<std::string, Tensor>>& params) {
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i)
      velocity_[i].assign(params[i].second.numel(), 0.0f);
  }
  if (velocity_.size() != params.size())
    throw Error("sgd: parameter list changed size between steps");

  for (size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    if (!p.has_grad()) throw Error("sgd: parameter '" + name + "' has no grad");
    auto theta = p.mutable_data();
    auto g = p.grad();
    auto& v = velocity_[i];
    for (size_t j = 0; j < v.size(); ++j) {
      float grad = g[j] + opts_.weight_decay * theta[j];
      v[j] = opts_.momentum * v[j] + grad;
      theta[j] -= opts_.lr * v[j];
    }
    p.zero_grad();
  }
}

}  // namespace fairbat
