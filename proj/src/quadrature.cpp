#include "hmfg/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "hmfg/errors.hpp"

namespace hmfg {

namespace {

// Golub-Welsch: eigen-decomposition of the Jacobi matrix with off-diagonal beta and total weight mu0.
QuadratureRule golub_welsch(const Eigen::VectorXd& beta, double mu0) {
  const Eigen::Index n = beta.size() + 1;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    jac(i, i + 1) = beta[i];
    jac(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  QuadratureRule rule{es.eigenvalues(), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v * v;
  }
  // Symmetrize to remove eigen-solver rounding asymmetry.
  for (Eigen::Index i = 0; i < n / 2; ++i) {
    const Eigen::Index j = n - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = w;
    rule.weights[j] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace

QuadratureRule gauss_legendre(Eigen::Index n) {
  if (n < 1) throw ValidationError("gauss_legendre: n must be positive");
  if (n == 1) return {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2.0)};
  Eigen::VectorXd beta(n - 1);
  for (Eigen::Index k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    beta[k - 1] = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  return golub_welsch(beta, 2.0);
}

QuadratureRule gauss_hermite_normal(Eigen::Index n) {
  if (n < 1) throw ValidationError("gauss_hermite_normal: n must be positive");
  if (n == 1) return {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
  Eigen::VectorXd beta(n - 1);
  for (Eigen::Index k = 1; k < n; ++k) beta[k - 1] = std::sqrt(static_cast<double>(k));
  return golub_welsch(beta, 1.0);
}

}  // namespace hmfg
