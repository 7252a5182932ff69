#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fairbat/util.hpp"

namespace fairbat {

class TensorError : public Error {
 public:
  using Error::Error;
};

// One node of the define-by-run graph. The graph exists only as the chain of
// parent links hanging off the loss tensor; it is rebuilt on every forward
// pass and freed when the last tensor referencing it goes away.
struct TensorImpl {
  std::vector<int> shape;
  std::shared_ptr<std::vector<float>> data;
  bool requires_grad = false;
  std::vector<float> grad;  // empty until backward reaches this node
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backprop;  // pushes this->grad into parents
  const char* op = "leaf";
  bool backward_done = false;

  bool needs_grad() const { return requires_grad || !parents.empty(); }
  std::vector<float>& ensure_grad() {
    if (grad.size() != data->size()) grad.assign(data->size(), 0.0f);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<float> values,
                          bool requires_grad = false);
  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data->size()); }
  std::span<const float> data() const { return *impl_->data; }
  std::span<float> mutable_data() { return *impl_->data; }
  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const;
  void zero_grad() { impl_->grad.assign(impl_->data->size(), 0.0f); }

  // Shares storage, drops graph history and the grad buffer.
  Tensor detached(bool requires_grad = false) const;
  // Deep copy of the values only.
  Tensor clone(bool requires_grad = false) const;

  float item() const;

  TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Reverse-mode sweep from a scalar loss. Visits each node exactly once in
// reverse topological order and accumulates grads additively. A second call
// on the same loss is an error (higher-order gradients are unsupported).
void backward(const Tensor& loss);

}  // namespace fairbat
