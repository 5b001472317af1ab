#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "abcran/tape.hpp"

/// Differentiable tensor primitives. Every function records one node on the
/// tape of its inputs and throws ShapeError on incompatible shapes.
namespace abcran::ad {

// Elementwise; operands must have identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var square(Var a);
/// sqrt(max(x, eps)); the gradient is zero where the guard is active.
Var sqrt_eps(Var a, double eps = 1e-30);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);

/// [m, k] x [k, n] -> [m, n].
Var matmul(Var a, Var b);
/// Batched matmul [B, m, k] x [B, k, n] -> [B, m, n]; with `transpose_b`, b is [B, n, k].
Var bmm(Var a, Var b, bool transpose_b = false);
/// Affine layer: x [B, in], weight [in, out], bias [out] -> [B, out].
Var dense(Var x, Var weight, Var bias);

/// x [B, Cin, L], weight [Cout, Cin, K], bias [Cout] -> [B, Cout, (L + 2*pad - K)/stride + 1].
/// Out-of-range taps read zero.
Var conv1d(Var x, Var weight, Var bias, std::size_t stride = 1, std::size_t pad = 0);
/// Width-2, stride-2 max pooling over the last axis of [B, C, L] (L even).
/// Ties route the gradient to the lower index.
Var maxpool1d(Var x);
/// Nearest-neighbour x2 upsampling over the last axis of [B, C, L].
Var upsample1d(Var x);

Var softmax(Var x, std::size_t axis);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);

/// Reduces `axis` away (a rank-1 input reduces to shape [1]).
Var mean(Var x, std::size_t axis);
/// Population variance (divide by n) along `axis`, reduced away.
Var variance(Var x, std::size_t axis);
Var mean_all(Var x);
Var sum_all(Var x);

}  // namespace abcran::ad
