#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "scino/core/random.hpp"
#include "scino/diffcore/tape.hpp"
#include "scino/diffcore/tensor.hpp"

namespace scino::testing {

inline constexpr double kFdStep = 1e-5;

// Relative error with a small absolute floor so that gradients that are
// zero up to rounding do not divide by zero.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline RealTensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
  RealTensor t(std::move(shape), 0.0);
  for (double& v : t.data()) v = scale * standard_normal(rng);
  return t;
}

// Builds a scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline GradientRecord tape_gradient(std::vector<Parameter>& params, const LossBuilder& build) {
  std::vector<const Parameter*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  GradientRecord rec = GradientRecord::zeros_like(ptrs);
  Tape tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.parameter(params[i], i));
  tape.backward(build(tape, vars));
  tape.accumulate_into(rec);
  return rec;
}

inline double tape_loss(std::vector<Parameter>& params, const LossBuilder& build) {
  Tape tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.parameter(params[i], i));
  return tape.value(build(tape, vars))[0];
}

// Largest relative error between tape gradients and central differences over
// every parameter entry.
inline double max_fd_error(std::vector<Parameter>& params, const LossBuilder& build, double h = kFdStep) {
  const GradientRecord rec = tape_gradient(params, build);
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].value.size(); ++k) {
      const double saved = params[p].value[k];
      params[p].value[k] = saved + h;
      const double up = tape_loss(params, build);
      params[p].value[k] = saved - h;
      const double down = tape_loss(params, build);
      params[p].value[k] = saved;
      worst = std::max(worst, rel_err(rec.grads[p][k], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace scino::testing
