#include "ig/oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "ig/eiga.hpp"
#include "ig/errors.hpp"
#include "ig/operators.hpp"

namespace ig {

namespace {

constexpr std::int64_t kDenseGuard = 4096;

void check_dense_guard(const LinearOperator& op, const char* who) {
  if (op.cols() > kDenseGuard)
    throw unsupported_error(std::string(who) +
                            ": dense oracle limited to 4096 columns");
}

}  // namespace

PosteriorExact mmse(const LinearOperator& op_dense, const PriorModel& prior,
                    const Observation& y) {
  check_dense_guard(op_dense, "mmse");
  if (op_dense.cols() != prior.dim)
    throw std::invalid_argument("mmse: operator columns != prior dim");
  if (y.y.size() != op_dense.rows())
    throw std::invalid_argument("mmse: observation size != operator rows");

  const CMat a = op_dense.materialize();
  const double s2 = prior.noise_var;
  CMat precision = (a.adjoint() * a) / s2;
  for (std::int64_t i = 0; i < prior.dim; ++i)
    precision(i, i) += 1.0 / prior.variances[i];

  Eigen::LDLT<CMat> ldlt(precision);
  if (ldlt.info() != Eigen::Success)
    throw state_error("mmse: LDLT factorization of the posterior precision failed");

  PosteriorExact out;
  out.mean = ldlt.solve(a.adjoint() * y.y / s2);
  out.full_cov = ldlt.solve(CMat::Identity(prior.dim, prior.dim));
  out.full_cov_available = true;
  out.cov_diag = out.full_cov.diagonal().real();

  const RVec d = ldlt.vectorD().real().cwiseAbs();
  const double dmax = d.maxCoeff();
  const double dmin = d.minCoeff();
  out.condition_estimate =
      dmin > 0.0 ? dmax / dmin : std::numeric_limits<double>::infinity();
  out.conditioning_warning = !(out.condition_estimate < 1e12);
  return out;
}

CVec eiga_fixed_point_mu(const LinearOperator& op_dense, const PriorModel& prior,
                         const Observation& y, const RVec& nu_star) {
  check_dense_guard(op_dense, "eiga_fixed_point_mu");
  if (nu_star.size() != prior.dim)
    throw std::invalid_argument("eiga_fixed_point_mu: nu_star size != prior dim");
  if ((nu_star.array() >= 0.0).any())
    throw std::invalid_argument(
        "eiga_fixed_point_mu: nu_star must be elementwise negative");

  const double n = static_cast<double>(y.n_obs);
  RVec lambda(prior.dim);
  double beta = prior.virtual_noise_var;
  for (std::int64_t i = 0; i < prior.dim; ++i) {
    lambda[i] = 1.0 / (1.0 / prior.variances[i] - nu_star[i]);
    beta += lambda[i];
  }

  const CMat a = op_dense.materialize();
  const RVec shifted = prior.variances - lambda / n;
  CMat lhs = (a.adjoint() * a) * shifted.cast<cxd>().asDiagonal();
  for (std::int64_t i = 0; i < prior.dim; ++i) lhs(i, i) += beta;

  Eigen::PartialPivLU<CMat> lu(lhs);
  const CVec solved = lu.solve(a.adjoint() * y.y);
  return prior.variances.cast<cxd>().asDiagonal() * solved;
}

RVec solve_nu_fixed_point(const PriorModel& prior, std::int64_t n_obs,
                          double tol) {
  if (n_obs < 2)
    throw std::invalid_argument("solve_nu_fixed_point: needs n_obs >= 2");
  if (!(tol > 0.0))
    throw std::invalid_argument("solve_nu_fixed_point: tol must be > 0");

  const double nm1 = static_cast<double>(n_obs - 1);
  RVec nu = RVec::Zero(prior.dim);
  RVec lambda(prior.dim);
  constexpr std::int64_t kMaxIter = 1'000'000;
  for (std::int64_t it = 0; it < kMaxIter; ++it) {
    double beta = prior.virtual_noise_var;
    for (std::int64_t i = 0; i < prior.dim; ++i) {
      lambda[i] = 1.0 / (1.0 / prior.variances[i] - nu[i]);
      beta += lambda[i];
    }
    RVec next(prior.dim);
    for (std::int64_t i = 0; i < prior.dim; ++i)
      next[i] = -nm1 / (beta - lambda[i]);
    const double delta = (next - nu).cwiseAbs().maxCoeff();
    nu = std::move(next);
    if (delta <= tol * (1.0 + nu.cwiseAbs().maxCoeff())) return nu;
  }
  throw iteration_limit_error(
      "solve_nu_fixed_point: no convergence within 1e6 iterations",
      nu.cwiseAbs().maxCoeff());
}

GaussianBelief condition_gaussian(const PriorModel& prior, const CVec& gamma_n,
                                  cxd y_n, const NaturalParameter& np_n,
                                  std::optional<double> noise_var_override) {
  if (gamma_n.size() != prior.dim)
    throw std::invalid_argument("condition_gaussian: gamma size != prior dim");
  if (np_n.theta.size() != prior.dim || np_n.nu.size() != prior.dim)
    throw std::invalid_argument("condition_gaussian: parameter size != prior dim");
  const double s2 = noise_var_override.value_or(prior.noise_var);
  if (!(s2 > 0.0))
    throw std::invalid_argument("condition_gaussian: noise level must be > 0");

  CMat precision = gamma_n * gamma_n.adjoint() / s2;
  for (std::int64_t i = 0; i < prior.dim; ++i)
    precision(i, i) += 1.0 / prior.variances[i] - np_n.nu[i];

  Eigen::LDLT<CMat> ldlt(precision);
  if (ldlt.info() != Eigen::Success)
    throw state_error("condition_gaussian: LDLT factorization failed");

  GaussianBelief belief;
  belief.mean = ldlt.solve(CVec(gamma_n * (y_n / s2) + 0.5 * np_n.theta));
  belief.var = ldlt.solve(CMat::Identity(prior.dim, prior.dim)).diagonal().real();
  return belief;
}

}  // namespace ig
