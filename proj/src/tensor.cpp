#include "fairbat/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace fairbat {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw TensorError("shape has non-positive dim " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  int64_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data = std::make_shared<std::vector<float>>(n, 0.0f);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> values,
                         bool requires_grad) {
  int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size()))
    throw TensorError("from_data: " + std::to_string(values.size()) +
                      " values for shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::make_shared<std::vector<float>>(std::move(values));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value) { return from_data({1}, {value}); }

std::span<const float> Tensor::grad() const {
  if (impl_->grad.empty())
    throw TensorError("grad requested but not populated (op " +
                      std::string(impl_->op) + ")");
  return impl_->grad;
}

Tensor Tensor::detached(bool requires_grad) const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;  // shared storage
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone(bool requires_grad) const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = std::make_shared<std::vector<float>>(*impl_->data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

float Tensor::item() const {
  if (numel() != 1) throw TensorError("item() on non-scalar tensor " + shape_str(shape()));
  return (*impl_->data)[0];
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw TensorError("backward: undefined tensor");
  TensorImpl* root = loss.impl();
  if (loss.numel() != 1)
    throw TensorError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (root->backward_done)
    throw TensorError("backward: already called on this loss (double backward unsupported)");
  if (root->parents.empty() && !root->requires_grad)
    throw TensorError("backward: loss is not connected to a graph");

  // Iterative post-order DFS; reversing the finish order gives a reverse
  // topological order (every consumer before its inputs).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
  root->backward_done = true;
}

}  // namespace fairbat
