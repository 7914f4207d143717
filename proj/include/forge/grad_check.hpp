// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Central-difference check of tape gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "forge/error.hpp"
#include "forge/tensor.hpp"

namespace forge::tensor {

struct GradParam {
  Shape shape;
  std::vector<double> values;
};

struct GradCheckReport {
  /// Max over tensors of ||analytic - numeric||_inf / max(||numeric||_inf, 1e-12).
  double max_rel_error = 0.0;
  std::vector<double> per_param;
  std::vector<std::vector<double>> analytic;
  bool pass = false;
};

/// `f` records a scalar on the tape from the given parameter variables.
using ScalarFn = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

inline double evaluate_scalar(const ScalarFn& f, const std::vector<GradParam>& params) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& p : params) vars.push_back(tape.variable(p.shape, p.values));
  const Var out = f(tape, vars);
  const double v = tape.value(out)[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
  return v;
}

inline GradCheckReport grad_check(const ScalarFn& f, std::vector<GradParam> params,
                                  double h = 1e-5, double tolerance = 1e-6) {
  GradCheckReport report;
  {
    Tape<double> tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.variable(p.shape, p.values));
    const Var out = f(tape, vars);
    if (tape.value(out).size() != 1) throw ShapeError("grad_check: objective must be a scalar");
    tape.backward(out);
    for (Var v : vars) {
      auto g = tape.grad(v);
      report.analytic.emplace_back(g.begin(), g.end());
    }
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < params[p].values.size(); ++i) {
      const double saved = params[p].values[i];
      params[p].values[i] = saved + h;
      const double up = evaluate_scalar(f, params);
      params[p].values[i] = saved - h;
      const double down = evaluate_scalar(f, params);
      params[p].values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = report.analytic[p][i];
      if (!std::isfinite(analytic)) throw NumericError("grad_check: gradient is not finite");
      diff = std::max(diff, std::abs(analytic - numeric));
      scale = std::max(scale, std::abs(numeric));
    }
    const double rel = diff / std::max(scale, 1e-12);
    report.per_param.push_back(rel);
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace forge::tensor
