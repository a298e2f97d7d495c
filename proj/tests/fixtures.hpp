#pragma once

#include <functional>

#include "hmfg/lq.hpp"
#include "hmfg/problem.hpp"

namespace fixtures {

using hmfg::HMFGProblem;
using hmfg::MeasureEnsemble;

/// The single action a = feedback with b = a and F = 0, so H = feedback * p. Terminal cost g, volatility s.
inline HMFGProblem constant_feedback_problem(double feedback, double s, std::function<double(double)> g,
                                             double horizon) {
  HMFGProblem pr;
  pr.name = "constant-feedback";
  pr.actions = {feedback, feedback};
  pr.lipschitz = 25.0;
  pr.horizon = horizon;
  pr.drift = [](double, double, double, const MeasureEnsemble&, double a) { return a; };
  pr.vol = [s](double, double, double, const MeasureEnsemble&) { return s; };
  pr.running_cost = [](double, double, double, const MeasureEnsemble&, double) { return 0.0; };
  pr.terminal_cost = [g](double, double x, const MeasureEnsemble&) { return g(x); };
  pr.hamiltonian = [feedback](double, double, double, double p, const MeasureEnsemble&) { return feedback * p; };
  pr.hamiltonian_grad = [feedback](double, double, double, double, const MeasureEnsemble&) { return feedback; };
  pr.feedback = pr.hamiltonian_grad;
  return pr;
}

/// F = G = 0 with b = a, H = p^2/2 clamped: the value is identically zero.
inline HMFGProblem zero_cost_problem(double s, double horizon) {
  auto bench = hmfg::lq_decoupled();
  bench.cost.setZero();
  bench.vol.setConstant(s);
  bench.horizon = horizon;
  auto pr = hmfg::make_problem(bench);
  pr.name = "zero-cost";
  return pr;
}

}  // namespace fixtures
