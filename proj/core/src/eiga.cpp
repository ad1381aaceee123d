#include "ig/eiga.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "ig/errors.hpp"
#include "ig/operators.hpp"

namespace ig {

double virtual_noise(double noise_var, const RVec& prior_variances,
                     std::int64_t n_obs) {
  if (noise_var <= 0.0)
    throw std::invalid_argument("virtual_noise: noise_var must be > 0");
  if (prior_variances.size() >= n_obs)
    throw unsupported_error(
        "virtual_noise: requires fewer variables than observations (M < N)");
  const double nm1 = static_cast<double>(n_obs - 1);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < prior_variances.size(); ++i) {
    const double di = prior_variances[i];
    if (di <= 0.0)
      throw std::invalid_argument("virtual_noise: prior variances must be > 0");
    acc += di * noise_var / (noise_var + di * nm1);
  }
  return noise_var - acc;
}

void refresh_cache(EigaState& state, const PriorModel& prior) {
  state.lambda.resize(prior.dim);
  double trace = 0.0;
  for (std::int64_t i = 0; i < prior.dim; ++i) {
    const double precision = 1.0 / prior.variances[i] - state.nu[i];
    if (!(precision > 0.0))
      throw state_error("refresh_cache: nonpositive precision at coordinate " +
                        std::to_string(i));
    state.lambda[i] = 1.0 / precision;
    trace += state.lambda[i];
  }
  state.beta = state.virtual_noise_var + trace;
}

RVec update_nu(const EigaState& state) {
  const double nm1 = static_cast<double>(state.n_obs - 1);
  const double d = state.damping;
  RVec next(state.nu.size());
  for (Eigen::Index i = 0; i < state.nu.size(); ++i)
    next[i] = d * (-nm1 / (state.beta - state.lambda[i])) + (1.0 - d) * state.nu[i];
  return next;
}

CVec update_theta(const EigaState& state, const LinearOperator& op,
                  const Observation& y) {
  if (state.theta.size() != op.cols())
    throw std::invalid_argument("update_theta: state size != operator columns");
  if (y.y.size() != op.rows())
    throw std::invalid_argument("update_theta: observation size != operator rows");
  const double n = static_cast<double>(state.n_obs);
  const double d = state.damping;
  const double beta = state.beta;

  // Diagonal gain J_i = (d (N-1)/N) / (1 - lambda_i / beta).
  RVec j_gain(state.lambda.size());
  for (Eigen::Index i = 0; i < state.lambda.size(); ++i)
    j_gain[i] = (d * (n - 1.0) / n) / (1.0 - state.lambda[i] / beta);

  // The only two operator evaluations of the iteration.
  const CVec scaled = state.theta.cwiseProduct(state.lambda.cast<cxd>());
  const CVec w = op.adjoint_apply(op.apply(scaled));

  CVec next(state.theta.size());
  for (Eigen::Index i = 0; i < next.size(); ++i)
    next[i] = (2.0 / beta) * j_gain[i] * state.a_h_y[i] -
              (1.0 / beta) * j_gain[i] * w[i] +
              (n * j_gain[i] + (1.0 - d * n)) * state.theta[i];
  return next;
}

EigaResult eiga_run(const LinearOperator& op, const Observation& y,
                    const PriorModel& prior, std::optional<double> damping,
                    std::int64_t max_iter, double tol) {
  if (y.n_obs < 2 || y.y.size() != y.n_obs)
    throw std::invalid_argument("eiga_run: needs at least two observations");
  if (op.cols() != prior.dim)
    throw std::invalid_argument("eiga_run: operator columns != prior dim");

  EigaState state;
  // Not value_or: computing the default costs a spectral radius, so it must
  // only happen when no damping was supplied.
  state.damping = damping ? *damping : default_damping(op);
  if (!(state.damping > 0.0 && state.damping <= 1.0))
    throw std::invalid_argument("eiga_run: damping must be in (0, 1]");
  state.theta = CVec::Zero(prior.dim);
  state.nu = RVec::Zero(prior.dim);
  state.t = 0;
  state.n_obs = y.n_obs;
  state.virtual_noise_var = prior.virtual_noise_var;
  state.a_h_y = op.adjoint_apply(y.y);  // computed once per run
  refresh_cache(state, prior);

  const double n_ratio =
      static_cast<double>(y.n_obs) / static_cast<double>(y.n_obs - 1);

  EigaResult result;
  result.trace.reserve(static_cast<std::size_t>(max_iter));
  for (std::int64_t it = 0; it < max_iter; ++it) {
    // Both recursions read the iteration-t cache before it is refreshed.
    CVec theta_next = update_theta(state, op, y);
    RVec nu_next = update_nu(state);

    if (!theta_next.allFinite() || !nu_next.allFinite())
      throw divergence_error("eiga_run: non-finite iterate", state.t + 1);

    const double theta_residual = (theta_next - state.theta).cwiseAbs().maxCoeff() /
                                  (1.0 + theta_next.cwiseAbs().maxCoeff());
    const double nu_residual = (nu_next - state.nu).cwiseAbs().maxCoeff() /
                               (1.0 + nu_next.cwiseAbs().maxCoeff());

    state.theta = std::move(theta_next);
    state.nu = std::move(nu_next);
    state.t += 1;
    refresh_cache(state, prior);
    result.trace.push_back(
        EigaTraceRow{state.t, theta_residual, nu_residual, state.beta});
    if (std::max(theta_residual, nu_residual) <= tol) {
      result.converged = true;
      break;
    }
  }

  result.iterations = state.t;
  result.objective_np.theta = n_ratio * state.theta;
  result.objective_np.nu = n_ratio * state.nu;
  result.belief = belief_of(result.objective_np, prior);
  return result;
}

void to_json(nlohmann::json& j, const EigaResult& r) {
  nlohmann::json theta = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.objective_np.theta.size(); ++i)
    theta.push_back({r.objective_np.theta[i].real(), r.objective_np.theta[i].imag()});
  nlohmann::json mean = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.belief.mean.size(); ++i)
    mean.push_back({r.belief.mean[i].real(), r.belief.mean[i].imag()});
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& row : r.trace)
    trace.push_back({{"t", row.t},
                     {"theta_residual", row.theta_residual},
                     {"nu_residual", row.nu_residual},
                     {"beta", row.beta}});
  j = nlohmann::json{
      {"objective_np",
       {{"theta", std::move(theta)},
        {"nu", std::vector<double>(r.objective_np.nu.begin(), r.objective_np.nu.end())}}},
      {"belief",
       {{"mean", std::move(mean)},
        {"var", std::vector<double>(r.belief.var.begin(), r.belief.var.end())}}},
      {"iterations", r.iterations},
      {"converged", r.converged},
      {"trace", std::move(trace)}};
}

}  // namespace ig
