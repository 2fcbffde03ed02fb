#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cardioclr/errors.hpp"
#include "cardioclr/tensor.hpp"

namespace cardioclr {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode tape. Nodes are appended in execution order, so the node
// vector is already a topological order and backward is a single reverse sweep.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  Var constant(Tensor<T> value) { return push(std::move(value), false, {}); }

  Var leaf(Tensor<T> value, bool requires_grad = true) {
    require_finite(value, "leaf");
    return push(std::move(value), requires_grad, {});
  }

  // Records the result of an op. `inputs` decides whether the result takes part in backward.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn,
             const char* op) {
    require_finite(value, op);
    bool rg = false;
    for (Var v : inputs) rg = rg || nodes_.at(v.id).requires_grad;
    return push(std::move(value), rg, rg ? std::move(fn) : BackwardFn{});
  }

  Var record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn, const char* op) {
    require_finite(value, op);
    bool rg = false;
    for (Var v : inputs) rg = rg || nodes_.at(v.id).requires_grad;
    return push(std::move(value), rg, rg ? std::move(fn) : BackwardFn{});
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool has_grad(Var v) const { return nodes_.at(v.id).grad.has_value(); }

  const Tensor<T>& grad(Var v) const {
    const auto& g = nodes_.at(v.id).grad;
    if (!g) throw UsageError("no gradient recorded for node " + std::to_string(v.id));
    return *g;
  }

  // Adds `g` into the gradient slot of `v` (no-op for nodes outside the graph).
  void accumulate(Var v, const Tensor<T>& g) {
    auto& node = nodes_.at(v.id);
    if (!node.requires_grad) return;
    if (!node.grad) {
      node.grad = g;
      return;
    }
    auto& acc = *node.grad;
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
  }

  // Mutable gradient slot, zero-initialised on first access. Ops use this to
  // accumulate in place without building temporaries.
  Tensor<T>* grad_slot(Var v) {
    auto& node = nodes_.at(v.id);
    if (!node.requires_grad) return nullptr;
    if (!node.grad) node.grad.emplace(node.value.shape(), T{0});
    return &*node.grad;
  }

  void backward(Var loss) {
    if (value(loss).numel() != 1) {
      throw UsageError("backward requires a scalar loss, got shape " +
                       shape_str(value(loss).shape()));
    }
    backward(loss, Tensor<T>(value(loss).shape(), T{1}));
  }

  // Backward from an arbitrary node with an explicit upstream gradient.
  void backward(Var root, const Tensor<T>& seed) {
    if (seed.shape() != value(root).shape()) {
      throw UsageError("seed gradient shape " + shape_str(seed.shape()) +
                       " does not match node shape " + shape_str(value(root).shape()));
    }
    if (backward_done_) throw UsageError("backward already run on this tape");
    backward_done_ = true;
    accumulate(root, seed);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.backward && node.grad) node.backward(*this, i);
    }
  }

  // Number of backward rules executed by the last sweep equals the number of
  // op nodes that received a gradient; exposed for tests.
  std::size_t ops_with_grad() const {
    std::size_t n = 0;
    for (const auto& node : nodes_) n += (node.backward && node.grad) ? 1 : 0;
    return n;
  }

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<Tensor<T>> grad;
  };

  Var push(Tensor<T> value, bool rg, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), rg, std::move(fn), std::nullopt});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace cardioclr
