#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tkp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// One vertex of the autodiff graph. Values are row-major. `grad` stays
/// empty until something accumulates into it.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<T>>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(Node<T>&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

/// Shared handle to a dense tensor. Copies alias the same storage; results
/// of operations on tensors that require grad remember how to backpropagate.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);
  explicit BasicTensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value) { return BasicTensor({1}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->values.size(); }

  std::span<const T> values() const { return node_->values; }
  std::span<T> mutable_values() { return node_->values; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  std::string_view op() const { return node_->op; }
  T item() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Fresh leaf holding the same values at another precision.
  template <typename U>
  BasicTensor<U> cast(bool requires_grad = false) const {
    std::vector<U> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(node_->values[i]);
    return BasicTensor<U>(shape(), std::move(out), requires_grad);
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Creates the result of a differentiable operation. The backward closure
/// and input links are kept only when some input requires grad.
template <typename T>
BasicTensor<T> make_op_result(const char* op, Shape shape, std::vector<T> values,
                              const std::vector<BasicTensor<T>>& inputs,
                              std::function<void(Node<T>&)> backward);

/// Nodes reachable from `root`, inputs before consumers.
template <typename T>
std::vector<Node<T>*> topological_order(const BasicTensor<T>& root);

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable tensor that requires grad.
template <typename T>
void backward(const BasicTensor<T>& loss);

/// Describes the first node (in evaluation order) holding NaN/Inf values.
template <typename T>
std::optional<std::string> first_non_finite(const BasicTensor<T>& root);

}  // namespace tkp
