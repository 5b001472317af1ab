#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "abcran/tensor.hpp"

namespace abcran::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; invalidated by Tape::reset().
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
  std::uint64_t generation = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Define-by-run record of tensor operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so creation order is a topological
/// order of the DAG and backward() simply walks ids in reverse. Each node's
/// gradient buffer is allocated (zeroed) on first accumulation.
class Tape {
 public:
  /// Called during backward with the node's forward value and accumulated gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Appends an op result. `backward` is kept only when some input requires grad.
  /// Throws NumericalError when `value` holds NaN/Inf.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(const Var& v) const;
  bool requires_grad(const Var& v) const;

  /// Gradient of the last backward() output w.r.t. `v`; zeros if nothing flowed into it.
  Tensor grad(const Var& v) const;

  /// Adds `g` into the gradient buffer of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor& g);
  /// Mutable gradient buffer of node `id`, allocated on first use; nullptr for constants.
  Tensor* grad_buffer(std::size_t id);
  const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Seeds d(out)/d(out) = 1 and runs every recorded backward rule once.
  /// A second call before reset() is an error.
  void backward(const Var& out);

  void reset();

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }
  void check(const Var& v) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
  bool backward_done_ = false;
};

}  // namespace abcran::ad
