#pragma once

#include <span>

#include "abcran/ops.hpp"

namespace abcran::ad {

/// Weights of one LSTM layer. Gate blocks are packed along the last axis in
/// the order input, forget, candidate, output.
struct LstmWeights {
  Var input_weight;   // [in, 4*hidden]
  Var hidden_weight;  // [hidden, 4*hidden]
  Var bias;           // [4*hidden]
};

struct LstmState {
  Var h;  // [B, hidden]
  Var c;  // [B, hidden]
};

/// One step of the standard LSTM recurrence:
///   i = sigmoid(.), f = sigmoid(.), g = tanh(.), o = sigmoid(.)
///   c' = f*c + i*g,  h' = o*tanh(c')
LstmState lstm_cell(Var x, const LstmState& prev, const LstmWeights& w);

/// Scaled dot-product attention of a single query per batch row.
/// query [B, d], keys [B, L, d], values [B, L, dv] -> context [B, dv].
Var dot_attention(Var query, Var keys, Var values);

/// Stacks L tensors of shape [B, d] into [B, L, d].
Var stack_steps(std::span<const Var> steps);

}  // namespace abcran::ad
