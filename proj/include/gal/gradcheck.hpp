#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gal/tape.hpp"
#include "gal/tensor.hpp"

namespace gal {

// Central-difference gradient check at 64-bit. f records a scalar-valued
// function on the given tape (one Var per input tensor, in order). Returns
// the max relative error |a-n| / max(1,|a|,|n|) over all input coordinates.
template <typename F>
double grad_check(F&& f, const std::vector<Tensor<double>>& inputs,
                  double eps = 1e-3) {
  auto eval = [&](const std::vector<Tensor<double>>& xs, Tape<double>* keep,
                  std::vector<Var>* keep_vars) {
    Tape<double> local;
    Tape<double>& tape = keep ? *keep : local;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(tape.leaf(x));
    Var out = f(tape, vars);
    if (tape.value(out).numel() != 1)
      throw std::invalid_argument("grad_check: function output must be scalar, got " +
                                  shape_str(tape.value(out).shape()));
    if (keep) {
      tape.backward(out);
      *keep_vars = vars;
    }
    return tape.value(out)[0];
  };

  Tape<double> tape;
  std::vector<Var> vars;
  eval(inputs, &tape, &vars);

  double max_err = 0.0;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double>& analytic = tape.grad(vars[i]);
    for (std::size_t j = 0; j < probe[i].numel(); ++j) {
      const double orig = probe[i][j];
      probe[i][j] = orig + eps;
      const double fp = eval(probe, nullptr, nullptr);
      probe[i][j] = orig - eps;
      const double fm = eval(probe, nullptr, nullptr);
      probe[i][j] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[j];
      const double err = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

// Smallest |pre-activation| across all relu nodes of a recorded tape.
// Central differences go wrong when a relu input sits within eps of its
// kink, so check instances keep this margin above a guard band.
template <typename T>
double min_relu_margin(const Tape<T>& tape) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& n : tape.nodes()) {
    if (n.kind != OpKind::kRelu) continue;
    const Tensor<T>& in = tape.nodes()[n.in0].value;
    for (std::size_t i = 0; i < in.numel(); ++i)
      margin = std::min(margin, std::abs(static_cast<double>(in[i])));
  }
  return margin;
}

// Deterministically searches child streams of `seed` for an input set whose
// relu margins clear `guard`. make(rng) draws a candidate input set; f is the
// same recorded function later handed to grad_check.
template <typename MakeF, typename F>
std::vector<Tensor<double>> kink_free_inputs(std::uint64_t seed, double guard,
                                             MakeF&& make, F&& f) {
  const Rng root(seed);
  for (std::uint64_t attempt = 0; attempt < 10000; ++attempt) {
    Rng rng = root.child(attempt);
    std::vector<Tensor<double>> inputs = make(rng);
    Tape<double> tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& x : inputs) vars.push_back(tape.leaf(x));
    f(tape, vars);
    if (min_relu_margin(tape) >= guard) return inputs;
  }
  throw std::runtime_error("kink_free_inputs: no clean instance found");
}

}  // namespace gal
