#include "fmhca/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace fmhca {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  if (shape.empty() || shape.size() > 3) {
    throw Error(ErrorCode::InvalidArgument, "tensor rank must be 1..3, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "shape " + shape_string(shape) + " holds " +
                                              std::to_string(shape_numel(shape)) + " values, got " +
                                              std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::size_t rows, std::size_t cols, std::vector<T> values,
                            bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (node_->grad.empty()) return std::vector<T>(node_->value.size(), T(0));
  return node_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone_leaf(bool requires_grad) const {
  return Tensor(node_->shape, node_->value, requires_grad);
}

template <typename T>
void Tensor<T>::backward() {
  if (numel() != 1) {
    throw Error(ErrorCode::ShapeMismatch,
                "backward() needs a scalar loss, got " + shape_string(shape()));
  }
  if (node_->backward_done) {
    throw Error(ErrorCode::DoubleBackward, "graph already swept; rebuild the loss");
  }
  node_->backward_done = true;
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [current, next_input] = stack.back();
    if (next_input < current->inputs.size()) {
      Node<T>* child = current->inputs[next_input++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(current);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* current = *it;
    if (current->backward_fn && !current->grad.empty()) current->backward_fn(*current);
  }
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(values));
  const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const auto& in) { return in->requires_grad; });
  if (needs_grad) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.inputs = std::move(inputs);
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

template Tensor<float> make_result(Shape, std::vector<float>,
                                   std::vector<std::shared_ptr<Node<float>>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::vector<std::shared_ptr<Node<double>>>,
                                    std::function<void(Node<double>&)>);
template Tensor<long double> make_result(Shape, std::vector<long double>,
                                         std::vector<std::shared_ptr<Node<long double>>>,
                                         std::function<void(Node<long double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<long double>;

}  // namespace fmhca
