#include "tkp/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tkp/errors.hpp"

namespace tkp {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->values[0];
}

template <typename T>
BasicTensor<T> make_op_result(const char* op, Shape shape, std::vector<T> values,
                              const std::vector<BasicTensor<T>>& inputs,
                              std::function<void(Node<T>&)> backward) {
  BasicTensor<T> out(std::move(shape), std::move(values));
  auto& node = *out.node();
  node.op = op;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) node.inputs.push_back(in.node());
    node.backward = std::move(backward);
  }
  return out;
}

template <typename T>
std::vector<Node<T>*> topological_order(const BasicTensor<T>& root) {
  std::vector<Node<T>*> order;
  if (!root.defined()) return order;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS; inputs are visited in declaration order so
  // the resulting order is deterministic.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  const auto order = topological_order(loss);
  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template <typename T>
std::optional<std::string> first_non_finite(const BasicTensor<T>& root) {
  for (Node<T>* node : topological_order(root)) {
    for (std::size_t i = 0; i < node->values.size(); ++i) {
      if (!std::isfinite(node->values[i])) {
        std::ostringstream os;
        os << "non-finite value " << node->values[i] << " at flat index " << i
           << " of tensor produced by '" << node->op << "' with shape "
           << shape_string(node->shape);
        return os.str();
      }
    }
  }
  return std::nullopt;
}

#define TKP_INSTANTIATE(T)                                                                      \
  template class BasicTensor<T>;                                                                \
  template BasicTensor<T> make_op_result<T>(const char*, Shape, std::vector<T>,                 \
                                            const std::vector<BasicTensor<T>>&,                 \
                                            std::function<void(Node<T>&)>);                     \
  template std::vector<Node<T>*> topological_order<T>(const BasicTensor<T>&);                   \
  template void backward<T>(const BasicTensor<T>&);                                             \
  template std::optional<std::string> first_non_finite<T>(const BasicTensor<T>&);

TKP_INSTANTIATE(float)
TKP_INSTANTIATE(double)

#undef TKP_INSTANTIATE

}  // namespace tkp
