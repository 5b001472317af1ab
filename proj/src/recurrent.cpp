#include "abcran/recurrent.hpp"

#include <cmath>
#include <vector>

#include "abcran/errors.hpp"

namespace abcran::ad {

LstmState lstm_cell(Var x, const LstmState& prev, const LstmWeights& w) {
  const Shape& hs = prev.h.shape();
  if (hs.size() != 2 || prev.c.shape() != hs) throw ShapeError("lstm_cell: h and c must both be [B, hidden]");
  if (x.shape().size() != 2 || x.shape()[0] != hs[0]) {
    throw ShapeError("lstm_cell: input " + shape_str(x.shape()) + " incompatible with state " + shape_str(hs));
  }
  const std::size_t hidden = hs[1];
  const Shape& hw = w.hidden_weight.shape();
  if (hw.size() != 2 || hw[0] != hidden || hw[1] != 4 * hidden) {
    throw ShapeError("lstm_cell: hidden weight " + shape_str(hw) + " does not match hidden width " +
                     std::to_string(hidden));
  }

  Var gates = add(dense(x, w.input_weight, w.bias), matmul(prev.h, w.hidden_weight));
  Var i = sigmoid(slice(gates, 1, 0, hidden));
  Var f = sigmoid(slice(gates, 1, hidden, 2 * hidden));
  Var g = tanh(slice(gates, 1, 2 * hidden, 3 * hidden));
  Var o = sigmoid(slice(gates, 1, 3 * hidden, 4 * hidden));
  Var c = add(mul(f, prev.c), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

Var stack_steps(std::span<const Var> steps) {
  if (steps.empty()) throw ShapeError("stack_steps: empty sequence");
  std::vector<Var> parts;
  parts.reserve(steps.size());
  for (const auto& s : steps) {
    if (s.shape().size() != 2) throw ShapeError("stack_steps: each step must be [B, d]");
    parts.push_back(reshape(s, {s.shape()[0], 1, s.shape()[1]}));
  }
  return concat(parts, 1);
}

Var dot_attention(Var query, Var keys, Var values) {
  if (keys.shape().size() != 3 || values.shape().size() != 3) {
    throw ShapeError("dot_attention: keys and values must be [B, L, d]");
  }
  const std::size_t batch = keys.shape()[0], len = keys.shape()[1], d = keys.shape()[2];
  if (len == 0) throw ShapeError("dot_attention: empty key sequence");
  if (query.shape() != Shape{batch, d} || values.shape()[0] != batch || values.shape()[1] != len) {
    throw ShapeError("dot_attention: query " + shape_str(query.shape()) + ", keys " + shape_str(keys.shape()) +
                     ", values " + shape_str(values.shape()) + " are inconsistent");
  }
  Var q = reshape(query, {batch, 1, d});
  Var scores = scale(bmm(q, keys, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(d)));
  Var weights = softmax(scores, 2);
  Var ctx = bmm(weights, values);
  return reshape(ctx, {batch, values.shape()[2]});
}

}  // namespace abcran::ad
