#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

#include "doctest.h"
#include "ig/errors.hpp"
#include "ig/iga.hpp"
#include "ig/model.hpp"
#include "ig/operators.hpp"
#include "ig/rng.hpp"

using namespace ig;

namespace {

DenseOperator random_phase_operator(std::int64_t n, std::int64_t m,
                                    std::uint64_t seed) {
  Philox g(seed, Stream::dense_phases);
  CMat entries(n, m);
  for (std::int64_t c = 0; c < m; ++c)
    for (std::int64_t r = 0; r < n; ++r)
      entries(r, c) = std::polar(1.0, 2.0 * std::numbers::pi * g.next_double());
  return DenseOperator(std::move(entries), true);
}

IgaState zero_state(std::int64_t n_obs, std::int64_t dim, double damping) {
  IgaState state;
  state.damping = damping;
  state.objective.theta = CVec::Zero(dim);
  state.objective.nu = RVec::Zero(dim);
  NaturalParameter zero;
  zero.theta = CVec::Zero(dim);
  zero.nu = RVec::Zero(dim);
  state.per_obs.assign(static_cast<std::size_t>(n_obs), zero);
  return state;
}

}  // namespace

TEST_SUITE("iga") {

TEST_CASE("belief_of hand value and precision guard") {
  PriorModel prior{1, RVec::Ones(1), 1.0, 1.0};
  NaturalParameter np;
  np.theta = CVec::Constant(1, cxd(2.0, 0.0));
  np.nu = RVec::Constant(1, -1.0);
  const GaussianBelief b = belief_of(np, prior);
  CHECK(b.var[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(b.mean[0] - cxd(0.5, 0.0)) < 1e-15);

  np.nu[0] = 2.0;  // precision 1/1 - 2 < 0
  CHECK_THROWS_AS(belief_of(np, prior), state_error);
}

TEST_CASE("m_project hand value at the trivial scalar problem") {
  // D = 1, noise 1, gamma = 1, y = 1, starting from the prior (theta=0, nu=0):
  // lambda = 1, beta = 2, theta0 = 2, nu0 = -1.
  PriorModel prior{1, RVec::Ones(1), 1.0, 1.0};
  NaturalParameter np;
  np.theta = CVec::Zero(1);
  np.nu = RVec::Zero(1);
  const CVec gamma = CVec::Ones(1);
  const NaturalParameter p = m_project(np, gamma, cxd(1.0, 0.0), prior);
  CHECK(std::abs(p.theta[0] - cxd(2.0, 0.0)) < 1e-15);
  CHECK(p.nu[0] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("m_project matches direct conditioning moments") {
  // Projecting must reproduce the mean and marginal variances of the
  // rank-1-corrected Gaussian (checked through its natural parameters).
  PriorModel prior{3, (RVec(3) << 2.0, 0.5, 1.25).finished(), 0.2, 0.2};
  Philox g(17, Stream::probe);
  NaturalParameter np;
  np.theta = CVec(3);
  for (int i = 0; i < 3; ++i) np.theta[i] = g.next_cnormal(1.0);
  np.nu = -(RVec(3) << 0.3, 0.9, 0.1).finished();
  CVec gamma(3);
  for (int i = 0; i < 3; ++i) gamma[i] = std::polar(1.0, g.next_double());
  const cxd y(0.7, -0.4);

  const NaturalParameter p = m_project(np, gamma, y, prior);

  // Tilted covariance via dense conditioning of the same Gaussian.
  CMat precision = gamma * gamma.adjoint() / prior.noise_var;
  for (int i = 0; i < 3; ++i)
    precision(i, i) += 1.0 / prior.variances[i] - np.nu[i];
  const CMat cov = precision.inverse();
  const CVec mean = cov * (gamma * (y / prior.noise_var) + 0.5 * np.theta);
  for (int i = 0; i < 3; ++i) {
    const double var_proj = 1.0 / (1.0 / prior.variances[i] - p.nu[i]);
    CHECK(var_proj == doctest::Approx(cov(i, i).real()).epsilon(1e-12));
    const cxd mean_proj = 0.5 * var_proj * p.theta[i];
    CHECK(std::abs(mean_proj - mean[i]) < 1e-12);
  }
}

TEST_CASE("iga_step applies the damped Jacobi sweep exactly") {
  const auto op = random_phase_operator(4, 2, 23);
  PriorModel prior{2, (RVec(2) << 1.5, 0.7).finished(), 0.3, 0.3};
  const CVec h = sample_channel(prior, 23);
  const Observation obs = observe(op, h, 0.3, 23);

  const double d = 0.4;
  IgaState state = zero_state(4, 2, d);
  const IgaState next = iga_step(state, op, obs, prior);
  REQUIRE(next.projections.size() == 4);
  REQUIRE(next.per_obs.size() == 4);
  CHECK(next.t == 1);

  // Recompute the sweep from the published projections.
  CVec s_theta = CVec::Zero(2);
  RVec s_nu = RVec::Zero(2);
  for (int n = 0; n < 4; ++n) {
    s_theta += next.projections[n].theta - state.per_obs[n].theta;
    s_nu += next.projections[n].nu - state.per_obs[n].nu;
  }
  for (int n = 0; n < 4; ++n) {
    const CVec xi_theta = next.projections[n].theta - state.per_obs[n].theta;
    const RVec xi_nu = next.projections[n].nu - state.per_obs[n].nu;
    const CVec want_theta =
        d * (s_theta - xi_theta) + (1.0 - d) * state.per_obs[n].theta;
    const RVec want_nu = d * (s_nu - xi_nu) + (1.0 - d) * state.per_obs[n].nu;
    CHECK((next.per_obs[n].theta - want_theta).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((next.per_obs[n].nu - want_nu).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK((next.objective.theta - (d * s_theta)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((next.objective.nu - (d * s_nu)).cwiseAbs().maxCoeff() < 1e-14);

  // Projections match independent m_project calls.
  for (int n = 0; n < 4; ++n) {
    const NaturalParameter p =
        m_project(state.per_obs[n], op.row(n), obs.y[n], prior);
    CHECK((next.projections[n].theta - p.theta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((next.projections[n].nu - p.nu).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("iga_run converges and keeps precision shifts synchronized") {
  const auto op = random_phase_operator(8, 4, 29);
  PowerSpec spec{4, (RVec(4) << 1.2, 0.8, 2.0, 0.4).finished(), 0};
  const auto [prior, idx] = build_prior(spec, 0.1, 8, false);
  const CVec h = sample_channel(prior, 29);
  const Observation obs = observe(op, h, 0.1, 29);

  const auto result = iga_run(op, obs, prior, default_damping(op), 2000, 1e-10);
  CHECK(result.converged);
  CHECK(result.state.t > 0);
  CHECK_FALSE(result.trace.empty());
  CHECK(result.trace.back().residual <= 1e-10);

  // Constant-magnitude rows + zero init synchronize the nu parameters.
  for (std::size_t n = 1; n < result.state.per_obs.size(); ++n)
    CHECK((result.state.per_obs[n].nu - result.state.per_obs[0].nu)
              .cwiseAbs()
              .maxCoeff() < 1e-10);

  // The belief solves the problem decently at SNR 10 dB.
  CHECK((result.belief.mean - h).norm() / h.norm() < 1.0);
}

TEST_CASE("iga_run validates damping") {
  const auto op = random_phase_operator(4, 2, 31);
  PriorModel prior{2, RVec::Ones(2), 0.5, 0.5};
  const Observation obs = observe(op, sample_channel(prior, 31), 0.5, 31);
  CHECK_THROWS_AS(iga_run(op, obs, prior, 0.0, 10, 1e-6), std::invalid_argument);
  CHECK_THROWS_AS(iga_run(op, obs, prior, 1.5, 10, 1e-6), std::invalid_argument);
}

TEST_CASE("consensus_error hand value") {
  // N = 2, M = 1, D = 2: theta_n = {1, 3}, objective 4 -> rescaled 2;
  // error = D * (|1-2|^2 + |3-2|^2) / (N*M) = 2*2/2 = 2.
  IgaState state = zero_state(2, 1, 1.0);
  state.per_obs[0].theta[0] = cxd(1.0, 0.0);
  state.per_obs[1].theta[0] = cxd(3.0, 0.0);
  state.objective.theta[0] = cxd(4.0, 0.0);
  PriorModel prior{1, RVec::Constant(1, 2.0), 1.0, 1.0};
  CHECK(consensus_error(state, prior) == doctest::Approx(2.0).epsilon(1e-14));

  IgaState single = zero_state(1, 1, 1.0);
  CHECK_THROWS_AS(consensus_error(single, prior), std::invalid_argument);
}

}  // TEST_SUITE
