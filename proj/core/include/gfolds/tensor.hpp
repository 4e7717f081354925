// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gfolds {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

// Thread-local switch for tape recording. Evaluation code disables it so
// that forward passes do not retain the differentiation graph.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool on) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() noexcept : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) {
      grad.assign(data.size(), T{0});
    }
  }
};

// Dense row-major array on a dynamic reverse-mode tape. Copies share the
// underlying node; use clone() for a deep copy.
template <class T>
class BasicTensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  std::span<const T> data() const { return node_->data; }
  // Mutation is reserved for leaves (parameters, inputs).
  std::span<T> mutable_data() { return node_->data; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->data.size(), T{0}); }
  void clear_grad() { node_->grad.clear(); }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  // Reverse sweep from this scalar. Each reachable node is visited once,
  // in reverse topological order; shared subexpressions sum their grads.
  void backward() const;

  BasicTensor clone() const;
  // Same data, cut from the tape.
  BasicTensor detach() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Builds an op result. Parents and backward_fn are recorded only when
// grad mode is on and at least one parent requires a gradient.
template <class T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                           std::vector<std::shared_ptr<TensorNode<T>>> parents,
                           std::function<void(TensorNode<T>&)> backward_fn);

}  // namespace gfolds
