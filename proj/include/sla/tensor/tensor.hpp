#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sla/core/error.hpp"

namespace sla {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

template <std::floating_point Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty unless requires_grad
  bool requires_grad = false;
  bool frozen = false;
  bool leaf = true;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  /// Gradient buffer of an input, allocated on first use. Empty span when the
  /// input does not take gradients.
  std::span<Real> grad_sink() {
    if (!requires_grad) return {};
    if (grad.empty()) grad.assign(value.size(), Real{0});
    return grad;
  }
};

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : saved_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

inline bool grad_mode_enabled() { return detail::grad_mode_flag(); }

/// Dense row-major array with reverse-mode differentiation support.
///
/// A Tensor is a shared handle: copies refer to the same storage and graph
/// node. Values are fixed after creation; only gradient buffers change, plus
/// in-place parameter updates through mutable_values() by an optimizer.
/// Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix; operations work on
/// rank <= 2 and treat a vector as a single row.
template <std::floating_point Real = double>
class Tensor {
 public:
  using value_type = Real;
  using NodeType = detail::Node<Real>;

  Tensor() : Tensor(Shape{}, std::vector<Real>{Real{0}}) {}

  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false) : node_(std::make_shared<NodeType>()) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor of shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                           " elements, got " + std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    set_requires_grad(requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<Real>(n, Real{0}), requires_grad);
  }

  static Tensor full(Shape shape, Real v) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<Real>(n, v));
  }

  static Tensor scalar(Real v, bool requires_grad = false) { return Tensor(Shape{}, {v}, requires_grad); }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<Real> values, bool requires_grad = false) {
    return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
  }

  /// Internal: wraps an operation result.
  static Tensor from_node(std::shared_ptr<NodeType> node) {
    Tensor t(node_tag{});
    t.node_ = std::move(node);
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rows() const {
    return rank() == 2 ? node_->shape[0] : 1;
  }
  std::size_t cols() const {
    if (rank() == 2) return node_->shape[1];
    if (rank() == 1) return node_->shape[0];
    return 1;
  }

  std::span<const Real> values() const { return node_->value; }
  /// Optimizer access. Never call on a tensor that an unfinished graph still reads.
  std::span<Real> mutable_values() { return node_->value; }

  Real item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  Real at(std::size_t i) const { return node_->value.at(i); }
  Real at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

  bool requires_grad() const { return node_->requires_grad; }
  bool frozen() const { return node_->frozen; }
  bool is_leaf() const { return node_->leaf; }
  std::string_view op_name() const { return node_->op; }

  /// Leaf only. Allocates a zero gradient buffer when enabled and drops it when disabled.
  Tensor& set_requires_grad(bool on) {
    if (!node_->leaf) throw ContractError("requires_grad can only be changed on leaf tensors");
    if (on && node_->frozen) throw ContractError("frozen tensor cannot take gradients");
    node_->requires_grad = on;
    if (on) {
      node_->grad.assign(node_->value.size(), Real{0});
    } else {
      node_->grad.clear();
      node_->grad.shrink_to_fit();
    }
    return *this;
  }

  /// Marks a leaf as frozen: it never takes gradients until unfrozen.
  Tensor& freeze() {
    set_requires_grad(false);
    node_->frozen = true;
    return *this;
  }

  Tensor& unfreeze() {
    node_->frozen = false;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->grad; }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), Real{0}); }

  /// Leaf copy of the values with no graph history.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  NodeType* node() const { return node_.get(); }
  const std::shared_ptr<NodeType>& node_ptr() const { return node_; }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  struct node_tag {};
  explicit Tensor(node_tag) {}

  std::shared_ptr<NodeType> node_;
};

/// Builds an operation result. Inputs and the backward closure are kept only
/// when recording is enabled and some input takes gradients.
template <std::floating_point Real>
Tensor<Real> make_result(std::string_view op, Shape shape, std::vector<Real> values,
                         const std::type_identity_t<std::vector<Tensor<Real>>>& inputs,
                         std::type_identity_t<std::function<void(detail::Node<Real>&)>> backward) {
  auto node = std::make_shared<detail::Node<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->leaf = false;
  node->op = op;
  bool track = false;
  if (grad_mode_enabled()) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<Real>::from_node(std::move(node));
}

/// Ordered record of the differentiable operations that produced a root tensor.
/// Entries are in execution order (every op after all of its inputs); backward
/// replays them in reverse, visiting each exactly once.
template <std::floating_point Real>
class Tape {
 public:
  using NodeType = detail::Node<Real>;

  explicit Tape(const Tensor<Real>& root) {
    if (!root.requires_grad()) return;
    // Iterative post-order DFS.
    std::unordered_set<const NodeType*> seen;
    std::vector<std::pair<NodeType*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        NodeType* in = node->inputs[next++].get();
        if (in->requires_grad && !in->leaf && seen.insert(in).second) stack.emplace_back(in, 0);
      } else {
        ops_.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::size_t size() const { return ops_.size(); }
  const std::vector<NodeType*>& ops() const { return ops_; }

  /// Runs every recorded backward closure from the last op to the first.
  /// Returns the number of ops visited.
  std::size_t replay_backward() const {
    std::size_t visited = 0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      NodeType* node = *it;
      if (node->grad.empty() || !node->backward) continue;
      node->backward(*node);
      ++visited;
    }
    return visited;
  }

 private:
  std::vector<NodeType*> ops_;
};

/// Reverse-mode pass from a scalar loss. Gradients accumulate additively into
/// every reachable leaf with requires_grad; callers zero them between steps.
template <std::floating_point Real>
void backward(const Tensor<Real>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  if (loss.is_leaf()) {
    loss.node()->grad[0] += Real{1};
    return;
  }
  Tape<Real> tape(loss);
  loss.node()->grad.assign(1, Real{1});
  tape.replay_backward();
}

}  // namespace sla
