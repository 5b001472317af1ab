#include "abcran/tape.hpp"

#include <string>

#include "abcran/errors.hpp"

namespace abcran::ad {

const Tensor& Var::value() const {
  if (tape == nullptr) throw TapeError("unbound variable");
  return tape->value(*this);
}

void Tape::check(const Var& v) const {
  if (v.tape != this) throw TapeError("variable belongs to a different tape");
  if (v.generation != generation_) throw TapeError("variable used after tape reset");
  if (v.id >= nodes_.size()) throw TapeError("variable id out of range");
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericalError("non-finite constant recorded on tape");
  nodes_.push_back(Node{std::move(value), Tensor{}, false, nullptr});
  return Var{this, nodes_.size() - 1, generation_};
}

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericalError("non-finite variable recorded on tape");
  nodes_.push_back(Node{std::move(value), Tensor{}, true, nullptr});
  return Var{this, nodes_.size() - 1, generation_};
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (backward_done_) throw TapeError("cannot record after backward; reset the tape first");
  bool rg = false;
  for (const auto& in : inputs) {
    check(in);
    rg = rg || nodes_[in.id].requires_grad;
  }
  if (!value.all_finite()) throw NumericalError("non-finite output from " + std::string(op));
  nodes_.push_back(Node{std::move(value), Tensor{}, rg, rg ? std::move(backward) : nullptr});
  return Var{this, nodes_.size() - 1, generation_};
}

const Tensor& Tape::value(const Var& v) const {
  check(v);
  return nodes_[v.id].value;
}

bool Tape::requires_grad(const Var& v) const {
  check(v);
  return nodes_[v.id].requires_grad;
}

Tensor Tape::grad(const Var& v) const {
  check(v);
  const auto& n = nodes_[v.id];
  if (n.grad.size() == 0) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor* Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() == 0) n.grad = Tensor(n.value.shape(), 0.0);
  return &n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Tensor* buf = grad_buffer(id);
  if (buf == nullptr) return;
  if (buf->size() != g.size()) throw TapeError("gradient size mismatch during accumulation");
  auto dst = buf->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(const Var& out) {
  check(out);
  if (backward_done_) throw TapeError("backward already ran on this tape; reset before reuse");
  if (nodes_[out.id].value.size() != 1) {
    throw TapeError("backward requires a scalar output, got shape " + shape_str(nodes_[out.id].value.shape()));
  }
  backward_done_ = true;
  if (!nodes_[out.id].requires_grad) return;
  grad_buffer(out.id)->fill(1.0);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.value, n.grad);
    if (!n.grad.all_finite()) throw NumericalError("non-finite gradient during backward");
  }
}

void Tape::reset() {
  nodes_.clear();
  ++generation_;
  backward_done_ = false;
}

}  // namespace abcran::ad
