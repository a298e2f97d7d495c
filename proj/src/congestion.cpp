#include "hmfg/congestion.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "hmfg/errors.hpp"

namespace hmfg {

void CongestionModel::validate() const {
  const Index k = n_types();
  if (k < 1) throw ValidationError(name + ": need at least one type");
  if (strength.size() != k || cost.size() != k || target.size() != k || init_mean.size() != k ||
      init_std.size() != k) {
    throw ValidationError(name + ": per-type parameter arrays differ in length");
  }
  for (Index l = 0; l < k; ++l) {
    if (!(vol[l] > 0.0)) throw ValidationError(name + ": volatility must be positive");
    if (!(strength[l] >= 0.0)) throw ValidationError(name + ": congestion strength must be nonnegative");
    if (!(cost[l] >= 0.0)) throw ValidationError(name + ": cost weight must be nonnegative");
    if (!(init_std[l] > 0.0)) throw ValidationError(name + ": initial std must be positive");
    if (!std::isfinite(target[l]) || !std::isfinite(init_mean[l])) throw ValidationError(name + ": parameters must be finite");
  }
  if (!(bandwidth > 0.0)) throw ValidationError(name + ": bandwidth must be positive");
  if (!(horizon > 0.0)) throw ValidationError(name + ": horizon must be positive");
  if (!(action_bound > 0.0)) throw ValidationError(name + ": action bound must be positive");
  if (!(lipschitz > 0.0)) throw ValidationError(name + ": Lipschitz constant must be positive");
}

namespace {

Index type_index(const CongestionModel& m, double theta) {
  const auto k = static_cast<double>(m.n_types());
  const auto l = static_cast<Index>(std::ceil(theta * k - 1e-9)) - 1;
  return std::clamp<Index>(l, 0, m.n_types() - 1);
}

double state_cost(const CongestionModel& m, Index l, double x, const MeasureEnsemble& mu) {
  double crowd = 0.0;
  for (Index j = 0; j < mu.n_types(); ++j) crowd += smoothed_density(mu[j], x, m.bandwidth);
  crowd /= static_cast<double>(mu.n_types());
  const double d = x - m.target[l];
  return -m.strength[l] * crowd - 0.5 * m.cost[l] * d * d;
}

}  // namespace

HMFGProblem make_problem(const CongestionModel& model) {
  model.validate();
  auto m = std::make_shared<const CongestionModel>(model);
  HMFGProblem pr;
  pr.name = model.name;
  pr.actions = {-model.action_bound, model.action_bound};
  pr.lipschitz = model.lipschitz;
  pr.horizon = model.horizon;
  pr.drift = [](double, double, double, const MeasureEnsemble&, double a) { return a; };
  pr.vol = [m](double th, double, double, const MeasureEnsemble&) { return m->vol[type_index(*m, th)]; };
  pr.running_cost = [m](double th, double, double x, const MeasureEnsemble& mu, double a) {
    return -0.5 * a * a + state_cost(*m, type_index(*m, th), x, mu);
  };
  pr.terminal_cost = [](double, double, const MeasureEnsemble&) { return 0.0; };
  pr.hamiltonian = [m](double th, double, double x, double p, const MeasureEnsemble& mu) {
    const double pc = std::clamp(p, -m->action_bound, m->action_bound);
    return pc * p - 0.5 * pc * pc + state_cost(*m, type_index(*m, th), x, mu);
  };
  pr.hamiltonian_grad = [m](double, double, double, double p, const MeasureEnsemble&) {
    return std::clamp(p, -m->action_bound, m->action_bound);
  };
  pr.feedback = pr.hamiltonian_grad;
  return pr;
}

}  // namespace hmfg
