#include "ig/iga.hpp"

#include <cmath>
#include <stdexcept>

#include "ig/errors.hpp"
#include "ig/operators.hpp"

namespace ig {

namespace {

// Largest relative infinity-norm change between two parameter vectors.
double rel_change(const CVec& next, const CVec& prev) {
  const double scale = 1.0 + next.cwiseAbs().maxCoeff();
  return (next - prev).cwiseAbs().maxCoeff() / scale;
}
double rel_change(const RVec& next, const RVec& prev) {
  const double scale = 1.0 + next.cwiseAbs().maxCoeff();
  return (next - prev).cwiseAbs().maxCoeff() / scale;
}

bool all_finite(const NaturalParameter& np) {
  return np.theta.allFinite() && np.nu.allFinite();
}

}  // namespace

GaussianBelief belief_of(const NaturalParameter& np, const PriorModel& prior) {
  if (np.theta.size() != prior.dim || np.nu.size() != prior.dim)
    throw std::invalid_argument("belief_of: parameter size != prior dim");
  GaussianBelief b;
  b.var.resize(prior.dim);
  b.mean.resize(prior.dim);
  for (std::int64_t i = 0; i < prior.dim; ++i) {
    const double precision = 1.0 / prior.variances[i] - np.nu[i];
    if (!(precision > 0.0))
      throw state_error("belief_of: nonpositive precision at coordinate " +
                        std::to_string(i));
    b.var[i] = 1.0 / precision;
    b.mean[i] = 0.5 * b.var[i] * np.theta[i];
  }
  return b;
}

NaturalParameter m_project(const NaturalParameter& np_n, const CVec& gamma_n,
                           cxd y_n, const PriorModel& prior) {
  const std::int64_t m = prior.dim;
  if (np_n.theta.size() != m || np_n.nu.size() != m || gamma_n.size() != m)
    throw std::invalid_argument("m_project: size mismatch");

  // lambda = (D^-1 - Diag(nu))^-1 and the scalar normalizer
  // beta = noise_var + gamma^H Lambda gamma.
  RVec lambda(m);
  for (std::int64_t i = 0; i < m; ++i) {
    const double precision = 1.0 / prior.variances[i] - np_n.nu[i];
    if (!(precision > 0.0))
      throw state_error("m_project: nonpositive precision at coordinate " +
                        std::to_string(i));
    lambda[i] = 1.0 / precision;
  }
  const RVec abs2_gamma = gamma_n.cwiseAbs2();
  const double beta = prior.noise_var + (lambda.array() * abs2_gamma.array()).sum();
  const cxd gh_lam_theta = (gamma_n.conjugate().array() *
                            lambda.array().cast<cxd>() * np_n.theta.array())
                               .sum();

  // Matching the rank-1-corrected moments coordinate-wise: the matrix in the
  // linear-coefficient update is diagonal, so it inverts elementwise.
  NaturalParameter out;
  out.theta.resize(m);
  out.nu.resize(m);
  const cxd scale = (2.0 * y_n - gh_lam_theta) / beta;
  for (std::int64_t i = 0; i < m; ++i) {
    const double denom = 1.0 - lambda[i] * abs2_gamma[i] / beta;
    if (!(denom > 0.0))
      throw state_error("m_project: singular diagonal at coordinate " +
                        std::to_string(i));
    out.theta[i] = (scale * gamma_n[i] + np_n.theta[i]) / denom;
    const double marginal_var = lambda[i] - lambda[i] * lambda[i] * abs2_gamma[i] / beta;
    out.nu[i] = 1.0 / prior.variances[i] - 1.0 / marginal_var;
  }
  return out;
}

IgaState iga_step(const IgaState& state, const LinearOperator& op,
                  const Observation& y, const PriorModel& prior) {
  const auto n = static_cast<std::int64_t>(state.per_obs.size());
  if (n != y.n_obs || y.y.size() != y.n_obs)
    throw std::invalid_argument("iga_step: observation count mismatch");
  const double d = state.damping;

  IgaState next;
  next.damping = d;
  next.t = state.t + 1;
  next.projections.resize(n);

  // Jacobi sweep: all corrections are computed from iteration-t parameters.
  CVec sum_theta = CVec::Zero(prior.dim);
  RVec sum_nu = RVec::Zero(prior.dim);
  std::vector<NaturalParameter> xi(n);
  for (std::int64_t k = 0; k < n; ++k) {
    const CVec gamma = op.row(k);
    next.projections[k] = m_project(state.per_obs[k], gamma, y.y[k], prior);
    xi[k].theta = next.projections[k].theta - state.per_obs[k].theta;
    xi[k].nu = next.projections[k].nu - state.per_obs[k].nu;
    sum_theta += xi[k].theta;
    sum_nu += xi[k].nu;
  }

  next.per_obs.resize(n);
  for (std::int64_t k = 0; k < n; ++k) {
    next.per_obs[k].theta =
        d * (sum_theta - xi[k].theta) + (1.0 - d) * state.per_obs[k].theta;
    next.per_obs[k].nu = d * (sum_nu - xi[k].nu) + (1.0 - d) * state.per_obs[k].nu;
  }
  next.objective.theta = d * sum_theta + (1.0 - d) * state.objective.theta;
  next.objective.nu = d * sum_nu + (1.0 - d) * state.objective.nu;
  return next;
}

IgaRunResult iga_run(const LinearOperator& op, const Observation& y,
                     const PriorModel& prior, double damping,
                     std::int64_t max_iter, double tol) {
  if (!(damping > 0.0 && damping <= 1.0))
    throw std::invalid_argument("iga_run: damping must be in (0, 1]");
  if (y.n_obs < 1 || y.y.size() != y.n_obs)
    throw std::invalid_argument("iga_run: bad observation");

  IgaState state;
  state.damping = damping;
  state.t = 0;
  const NaturalParameter zero{CVec::Zero(prior.dim), RVec::Zero(prior.dim)};
  state.per_obs.assign(static_cast<std::size_t>(y.n_obs), zero);
  state.objective = zero;

  IgaRunResult result;
  result.trace.reserve(static_cast<std::size_t>(max_iter));
  for (std::int64_t it = 0; it < max_iter; ++it) {
    IgaState next = iga_step(state, op, y, prior);

    double residual = rel_change(next.objective.theta, state.objective.theta);
    residual = std::max(residual, rel_change(next.objective.nu, state.objective.nu));
    for (std::size_t k = 0; k < next.per_obs.size(); ++k) {
      residual = std::max(residual,
                          rel_change(next.per_obs[k].theta, state.per_obs[k].theta));
      residual =
          std::max(residual, rel_change(next.per_obs[k].nu, state.per_obs[k].nu));
    }

    if (!all_finite(next.objective))
      throw divergence_error("iga_run: non-finite iterate", next.t);
    for (const auto& np : next.per_obs)
      if (!all_finite(np))
        throw divergence_error("iga_run: non-finite iterate", next.t);

    state = std::move(next);
    result.trace.push_back(IgaTraceRow{state.t, residual,
                                       state.objective.nu.minCoeff(),
                                       state.objective.nu.maxCoeff(),
                                       state.objective.theta.norm()});
    if (residual <= tol) {
      result.converged = true;
      break;
    }
  }
  result.belief = belief_of(state.objective, prior);
  result.state = std::move(state);
  return result;
}

double consensus_error(const IgaState& state, const PriorModel& prior) {
  const auto n = static_cast<std::int64_t>(state.per_obs.size());
  if (n < 2)
    throw std::invalid_argument("consensus_error: needs at least two observations");
  const double scale = static_cast<double>(n - 1) / static_cast<double>(n);
  double acc = 0.0;
  for (const auto& np : state.per_obs) {
    const CVec diff = np.theta - scale * state.objective.theta;
    acc += (prior.variances.array() * diff.cwiseAbs2().array()).sum();
  }
  return acc / static_cast<double>(n * prior.dim);
}

}  // namespace ig
