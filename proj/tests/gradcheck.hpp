#pragma once

// Central finite-difference gradient oracle. Deliberately independent of the
// tape's backward rules: it only ever evaluates forward values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "abcran/ops.hpp"
#include "abcran/tape.hpp"

namespace testing {

using abcran::Shape;
using abcran::Tensor;
using abcran::ad::Tape;
using abcran::ad::Var;

/// Builds a scalar from the tape variables bound to the inputs.
using ScalarGraph = std::function<Var(Tape&, const std::vector<Var>&)>;
/// Builds an arbitrary-shape output; it is contracted against fixed random weights.
using TensorGraph = ScalarGraph;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline double evaluate(const ScalarGraph& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value()[0];
}

inline std::vector<Tensor> analytic(const ScalarGraph& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  Var out = f(tape, vars);
  tape.backward(out);
  std::vector<Tensor> grads;
  for (const auto& v : vars) grads.push_back(tape.grad(v));
  return grads;
}

inline std::vector<Tensor> numeric(const ScalarGraph& f, std::vector<Tensor> inputs, double step) {
  std::vector<Tensor> grads;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor g(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + step;
      const double fp = evaluate(f, inputs);
      inputs[k][i] = x0 - step;
      const double fm = evaluate(f, inputs);
      inputs[k][i] = x0;
      g[i] = (fp - fm) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// ||a - n|| / max(||a||, ||n||, 1e-8), i.e. norm-wise relative error per input.
inline double relative_error(const Tensor& a, const Tensor& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

/// Worst relative error over all inputs of a scalar-valued graph.
inline double check_scalar(const ScalarGraph& f, const std::vector<Tensor>& inputs, double step = 1e-6) {
  auto a = analytic(f, inputs);
  auto n = numeric(f, inputs, step);
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, relative_error(a[k], n[k]));
  return worst;
}

/// Contracts a tensor-valued graph with fixed random weights and checks it.
inline double check_tensor(const TensorGraph& f, const std::vector<Tensor>& inputs, std::uint64_t seed,
                           double step = 1e-6) {
  Shape out_shape;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    out_shape = f(tape, vars).shape();
  }
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Tensor weights = random_tensor(out_shape, rng);
  ScalarGraph contracted = [&](Tape& tape, const std::vector<Var>& vars) {
    Var out = f(tape, vars);
    return abcran::ad::sum_all(abcran::ad::mul(out, tape.constant(weights)));
  };
  return check_scalar(contracted, inputs, step);
}

}  // namespace testing
