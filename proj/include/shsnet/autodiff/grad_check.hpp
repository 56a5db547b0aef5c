#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "shsnet/autodiff/graph.hpp"
#include "shsnet/autodiff/tensor.hpp"

namespace shsnet::ad {

// Builds a scalar loss from leaf variables created for each parameter.
inline constexpr double kGradFloor = 1e-6;

using LossBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t param = 0;  // location of the worst entry
  std::size_t entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline std::vector<Tensor> analytic_gradients(const LossBuilder& f, const std::vector<Tensor>& params) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(g.param(p));
  Var loss = f(g, vars);
  g.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (Var v : vars) grads.push_back(g.grad(v));
  return grads;
}

inline double evaluate_loss(const LossBuilder& f, const std::vector<Tensor>& params) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(g.constant(p));
  return f(g, vars).item();
}

// Compares reverse-mode gradients with central differences of step h.
// Relative error per entry is |analytic - numeric| / max(kGradFloor, |analytic|).
// The floor sits well above central-difference roundoff (about eps |f| / h),
// so exactly-zero gradients are not judged against noise.
// Non-smooth points (ReLU kinks, max ties) legitimately show large errors.
inline GradCheckReport grad_check(const LossBuilder& f, std::vector<Tensor> params, double h = 1e-5) {
  const auto grads = analytic_gradients(f, params);
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p].data[i];
      params[p].data[i] = saved + h;
      const double up = evaluate_loss(f, params);
      params[p].data[i] = saved - h;
      const double down = evaluate_loss(f, params);
      params[p].data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[p].data[i];
      const double err = std::abs(analytic - numeric) / std::max(kGradFloor, std::abs(analytic));
      if (err > report.max_relative_error || (p == 0 && i == 0)) {
        report = GradCheckReport{err, p, i, analytic, numeric};
      }
    }
  }
  return report;
}

}  // namespace shsnet::ad
