// Ground-truth computations used to certify the matrix-free paths: the exact
// posterior, the closed-form fixed-point mean, a brute-force precision-shift
// fixed-point solver, and dense Gaussian conditioning.
#pragma once

#include <cstdint>
#include <optional>

#include "ig/iga.hpp"
#include "ig/model.hpp"

namespace ig {

class LinearOperator;

struct PosteriorExact {
  CVec mean;       // posterior mean
  RVec cov_diag;   // marginal posterior variances
  bool full_cov_available = false;
  CMat full_cov;
  // Cheap conditioning estimate of the posterior precision (ratio of the
  // extreme diagonal magnitudes of its LDLT factor); the warning flag is set
  // above 1e12.
  double condition_estimate = 0.0;
  bool conditioning_warning = false;
};

// Exact posterior of h | y under the diagonal prior and noise_var, solved by
// Hermitian factorization of D^-1 + A^H A / noise_var. Dense guard M <= 4096.
PosteriorExact mmse(const LinearOperator& op_dense, const PriorModel& prior,
                    const Observation& y);

// Closed-form fixed-point mean of the fast method:
//   mu_0* = D [A^H A (D - Lambda*/N) + beta* I]^-1 A^H y,
// with Lambda*, beta* derived from nu_star and the virtual noise level.
// Requires nu_star < 0 elementwise.
CVec eiga_fixed_point_mu(const LinearOperator& op_dense, const PriorModel& prior,
                         const Observation& y, const RVec& nu_star);

// Undamped iteration of the precision-shift map from nu = 0; monotone and
// bounded, so it always converges. Stops when the infinity-norm change is
// <= tol * (1 + |nu|_inf).
RVec solve_nu_fixed_point(const PriorModel& prior, std::int64_t n_obs,
                          double tol);

// Exact mean/marginal variances of the Gaussian with precision
// D^-1 - Diag(nu_n) + gamma gamma^H / s2 and linear coefficient
// gamma y_n / s2 + theta_n / 2, where s2 = noise_var_override or the prior's
// true noise level. The override exists because fixed-point belief checks of
// the fast method use the virtual noise level instead.
GaussianBelief condition_gaussian(const PriorModel& prior, const CVec& gamma_n,
                                  cxd y_n, const NaturalParameter& np_n,
                                  std::optional<double> noise_var_override = {});

}  // namespace ig
