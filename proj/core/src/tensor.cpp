// SPDX-License-Identifier: Apache-2.0
#include "gfolds/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

#include "gfolds/errors.hpp"

namespace gfolds {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool GradMode::enabled() noexcept { return g_grad_enabled; }
void GradMode::set_enabled(bool on) noexcept { g_grad_enabled = on; }

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    n *= e;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) {
      os << ", ";
    }
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <class T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return BasicTensor(std::move(node));
}

template <class T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <class T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item: tensor of shape " + shape_to_string(shape()) +
                         " is not a scalar");
  }
  return node_->data[0];
}

template <class T>
T BasicTensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) {
    throw DimensionError("at: rank mismatch for shape " + shape_to_string(shape()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= node_->shape[axis]) {
      throw IndexError("at: index out of range for shape " + shape_to_string(shape()));
    }
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

template <class T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward: root must be a scalar, got shape " +
                         shape_to_string(shape()));
  }
  // Iterative post-order DFS gives a topological order without recursion
  // depth limits on deep tapes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
    }
  }
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const {
  auto copy = from(shape(), node_->data, requires_grad());
  copy.node_->grad = node_->grad;
  return copy;
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from(shape(), node_->data, false);
}

template <class T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                           std::vector<std::shared_ptr<TensorNode<T>>> parents,
                           std::function<void(TensorNode<T>&)> backward_fn) {
  auto node = std::make_shared<TensorNode<T>>();
  node->op = op;
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents) {
      needs = needs || p->requires_grad;
    }
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return BasicTensor<T>(std::move(node));
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template BasicTensor<float> make_result(const char*, Shape, std::vector<float>,
                                        std::vector<std::shared_ptr<TensorNode<float>>>,
                                        std::function<void(TensorNode<float>&)>);
template BasicTensor<double> make_result(const char*, Shape, std::vector<double>,
                                         std::vector<std::shared_ptr<TensorNode<double>>>,
                                         std::function<void(TensorNode<double>&)>);

}  // namespace gfolds
