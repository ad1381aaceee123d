#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "ig/eiga.hpp"
#include "ig/errors.hpp"
#include "ig/iga.hpp"
#include "ig/model.hpp"
#include "ig/operators.hpp"
#include "ig/oracle.hpp"
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

RVec log_uniform_variances(std::int64_t m, std::uint64_t seed) {
  Philox g(seed, Stream::prior_powers);
  RVec d(m);
  for (std::int64_t i = 0; i < m; ++i)
    d[i] = std::pow(10.0, 2.0 * g.next_double() - 1.0);
  return d;
}

NaturalParameter zero_np(std::int64_t m) {
  return NaturalParameter{CVec::Zero(m), RVec::Zero(m)};
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("mmse matches the scalar closed form") {
  // One observation y = h + z, prior variance 1, noise variance 1, y = 2:
  // posterior precision 2, mean y/2 = 1, variance 1/2.
  const DenseOperator op(CMat::Ones(1, 1), true);
  const PriorModel prior{1, RVec::Ones(1), 1.0, 1.0};
  const Observation obs{CVec::Constant(1, cxd(2.0, 0.0)), 1};

  const PosteriorExact out = mmse(op, prior, obs);
  CHECK(out.mean[0].real() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(out.mean[0].imag() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(out.cov_diag[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.full_cov_available);
  CHECK(out.full_cov(0, 0).real() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.condition_estimate >= 1.0);
  CHECK_FALSE(out.conditioning_warning);
}

TEST_CASE("mmse equals untilted dense conditioning on a single row") {
  // With one observation and theta = nu = 0 the exact posterior and the
  // rank-one conditioning oracle compute the same Gaussian.
  const DenseOperator op = random_phase_operator(1, 3, 41);
  const PriorModel prior{3, (RVec(3) << 0.8, 2.5, 0.4).finished(), 0.3, 0.3};
  Philox g(99, Stream::noise);
  const Observation obs{CVec::Constant(1, g.next_cnormal(2.0)), 1};

  const PosteriorExact exact = mmse(op, prior, obs);
  const GaussianBelief cond =
      condition_gaussian(prior, op.row(0), obs.y[0], zero_np(3));
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(std::abs(exact.mean[i] - cond.mean[i]) < 1e-14);
    CHECK(exact.cov_diag[i] == doctest::Approx(cond.var[i]).epsilon(1e-13));
  }
}

TEST_CASE("mmse validates shapes and the dense guard") {
  const DenseOperator op = random_phase_operator(4, 2, 7);
  const PriorModel prior{2, RVec::Ones(2), 1.0, 1.0};
  const Observation obs{CVec::Zero(4), 4};

  CHECK_THROWS_AS(mmse(op, PriorModel{3, RVec::Ones(3), 1.0, 1.0}, obs),
                  std::invalid_argument);
  CHECK_THROWS_AS(mmse(op, prior, Observation{CVec::Zero(3), 3}),
                  std::invalid_argument);

  // 4097 columns exceeds the dense-oracle guard; the structured form keeps
  // construction cheap because nothing is materialized before the throw.
  std::vector<std::int64_t> keep(4097);
  for (std::int64_t i = 0; i < 4097; ++i) keep[i] = i;
  const auto big = build_structured(8, 8, 128, {1, 1, 1}, {0}, keep);
  const PriorModel big_prior{4097, RVec::Ones(4097), 1.0, 1.0};
  CHECK_THROWS_AS(mmse(*big, big_prior, Observation{CVec::Zero(8192), 8192}),
                  unsupported_error);
}

TEST_CASE("mmse flags an ill-conditioned posterior precision") {
  const DenseOperator op = random_phase_operator(4, 2, 13);
  const PriorModel prior{2, (RVec(2) << 1.0, 1e-14).finished(), 1.0, 1.0};
  const Observation obs{CVec::Ones(4), 4};

  const PosteriorExact out = mmse(op, prior, obs);
  CHECK(out.condition_estimate > 1e12);
  CHECK(out.conditioning_warning);
  CHECK(out.conditioning_warning == (out.condition_estimate >= 1e12));
}

TEST_CASE("solve_nu_fixed_point hand values") {
  // M = 1, D = 1, virtual noise 1, N = 2: beta - lambda = 1 for every nu, so
  // the map is the constant -1 and the solver lands on it in one step.
  const PriorModel p1{1, RVec::Ones(1), 1.0, 1.0};
  const RVec nu1 = solve_nu_fixed_point(p1, 2, 1e-12);
  CHECK(nu1[0] == doctest::Approx(-1.0).epsilon(1e-14));

  // M = 2, D = I, virtual noise 1, N = 3: symmetry gives nu = -2/(1+lambda)
  // with lambda = 1/(1-nu), whose fixed point is -sqrt(2).
  const PriorModel p2{2, RVec::Ones(2), 1.0, 1.0};
  const RVec nu2 = solve_nu_fixed_point(p2, 3, 1e-13);
  CHECK(nu2[0] == doctest::Approx(-std::numbers::sqrt2).epsilon(1e-12));
  CHECK(nu2[1] == doctest::Approx(-std::numbers::sqrt2).epsilon(1e-12));
}

TEST_CASE("solve_nu_fixed_point validates its arguments") {
  const PriorModel prior{1, RVec::Ones(1), 1.0, 1.0};
  CHECK_THROWS_AS(solve_nu_fixed_point(prior, 1, 1e-10), std::invalid_argument);
  CHECK_THROWS_AS(solve_nu_fixed_point(prior, 4, 0.0), std::invalid_argument);
}

TEST_CASE("fixed point satisfies the objective-scale identity") {
  // For unit-magnitude rows, the per-observation output precision shift at
  // the fixed point must equal N/(N-1) times the shared one:
  //   (N/(N-1)) nu_i = 1/D_i - 1/(lambda_i - lambda_i^2/beta).
  constexpr std::int64_t n = 16;
  constexpr std::int64_t m = 6;
  const RVec d = log_uniform_variances(m, 1234);
  const double noise = 0.25;
  const PriorModel prior{m, d, noise, virtual_noise(noise, d, n)};

  const RVec nu = solve_nu_fixed_point(prior, n, 1e-13);
  RVec lambda(m);
  double beta = prior.virtual_noise_var;
  for (std::int64_t i = 0; i < m; ++i) {
    lambda[i] = 1.0 / (1.0 / d[i] - nu[i]);
    beta += lambda[i];
  }
  const double scale = static_cast<double>(n) / (n - 1.0);
  for (std::int64_t i = 0; i < m; ++i) {
    const double lhs = scale * nu[i];
    const double rhs = 1.0 / d[i] - 1.0 / (lambda[i] - lambda[i] * lambda[i] / beta);
    CHECK(std::abs(lhs - rhs) <= 1e-9 * (1.0 + std::abs(rhs)));
  }
}

TEST_CASE("closed-form mean approaches the exact posterior as N grows") {
  constexpr std::int64_t n = 256;
  constexpr std::int64_t m = 4;
  const DenseOperator op = random_phase_operator(n, m, 5150);
  const RVec d = log_uniform_variances(m, 77);
  const double noise = 0.1;
  const PriorModel prior{m, d, noise, virtual_noise(noise, d, n)};

  const CVec h = sample_channel(prior, 2024);
  const Observation obs = observe(op, h, noise, 2025);

  const RVec nu = solve_nu_fixed_point(prior, n, 1e-13);
  const CVec mu = eiga_fixed_point_mu(op, prior, obs, nu);
  const CVec exact = mmse(op, prior, obs).mean;
  CHECK((mu - exact).norm() / exact.norm() < 1e-3);
}

TEST_CASE("eiga_fixed_point_mu validates nu_star") {
  const DenseOperator op = random_phase_operator(8, 3, 2);
  const PriorModel prior{3, RVec::Ones(3), 0.5, 0.4};
  const Observation obs{CVec::Ones(8), 8};

  CHECK_THROWS_AS(eiga_fixed_point_mu(op, prior, obs, RVec::Zero(3)),
                  std::invalid_argument);
  RVec wrong_sign = RVec::Constant(3, -1.0);
  wrong_sign[1] = 0.5;
  CHECK_THROWS_AS(eiga_fixed_point_mu(op, prior, obs, wrong_sign),
                  std::invalid_argument);
  CHECK_THROWS_AS(eiga_fixed_point_mu(op, prior, obs, RVec::Constant(2, -1.0)),
                  std::invalid_argument);
}

TEST_CASE("condition_gaussian hand value with a tilted parameter") {
  // gamma = 1, y = 0, noise 1, D = 1, theta = 2, nu = -1:
  // precision = 1 + (1 + 1) = 3, mean = (theta/2)/3 = 1/3, var = 1/3.
  const PriorModel prior{1, RVec::Ones(1), 1.0, 1.0};
  const NaturalParameter np{CVec::Constant(1, cxd(2.0, 0.0)),
                            RVec::Constant(1, -1.0)};
  const GaussianBelief b =
      condition_gaussian(prior, CVec::Ones(1), cxd(0.0, 0.0), np);
  CHECK(b.mean[0].real() == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(b.mean[0].imag() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(b.var[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("condition_gaussian noise override replaces the prior level") {
  const DenseOperator op = random_phase_operator(5, 3, 31);
  const PriorModel loud{3, (RVec(3) << 1.2, 0.5, 2.0).finished(), 1.0, 1.0};
  const PriorModel quiet{3, loud.variances, 0.5, 0.5};
  Philox g(8, Stream::noise);
  const cxd yn = g.next_cnormal(1.0);
  NaturalParameter np{CVec::Zero(3), RVec::Constant(3, -0.25)};
  np.theta[1] = cxd(0.3, -0.8);

  const GaussianBelief with_override =
      condition_gaussian(loud, op.row(2), yn, np, 0.5);
  const GaussianBelief direct = condition_gaussian(quiet, op.row(2), yn, np);
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(with_override.mean[i] == direct.mean[i]);
    CHECK(with_override.var[i] == direct.var[i]);
  }

  CHECK_THROWS_AS(condition_gaussian(loud, op.row(0), yn, np, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(condition_gaussian(loud, CVec::Ones(2), yn, np),
                  std::invalid_argument);
}

}  // TEST_SUITE
