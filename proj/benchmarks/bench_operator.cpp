// Apply/adjoint and per-iteration cost of the FFT-backed structured operator
// against its dense materialization, at the size the timing acceptance check
// uses: an 8x16 array with 64 pilots, twofold-oversampled grid, 1024 kept
// columns scattered one per 64-cell block.

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "ig/eiga.hpp"
#include "ig/model.hpp"
#include "ig/operators.hpp"
#include "ig/rng.hpp"

namespace {

struct Fixture {
  std::unique_ptr<ig::StructuredOperator> structured;
  std::unique_ptr<ig::DenseOperator> dense;
  ig::PriorModel prior;
  ig::CVec h;
  ig::Observation obs;

  Fixture() {
    constexpr std::int64_t n_rv = 8, n_rh = 16, n_p = 64;
    constexpr std::int64_t cells = (2 * n_rv) * (2 * n_rh) * (2 * n_p);
    constexpr std::int64_t kept = 1024;
    constexpr std::int64_t block = cells / kept;

    std::vector<std::int64_t> extraction;
    extraction.reserve(kept);
    for (std::int64_t i = 0; i < kept; ++i)
      extraction.push_back(
          i * block +
          static_cast<std::int64_t>(
              ig::derive_seed(0xB427, static_cast<std::uint64_t>(i)) %
              static_cast<std::uint64_t>(block)));

    structured = ig::build_structured(n_rv, n_rh, n_p, {2, 2, 2}, {0},
                                      std::move(extraction));
    dense = std::make_unique<ig::DenseOperator>(structured->materialize(), true);

    const double noise_var = 0.1;
    prior = ig::PriorModel{kept, ig::RVec::Ones(kept), noise_var,
                           ig::virtual_noise(noise_var, ig::RVec::Ones(kept),
                                             structured->rows())};
    h = ig::sample_channel(prior, 1);
    obs = ig::observe(*structured, h, noise_var, 1);
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

void bench_apply(benchmark::State& state, const ig::LinearOperator& op) {
  const auto& f = fixture();
  for (auto _ : state) {
    ig::CVec y = op.apply(f.h);
    benchmark::DoNotOptimize(y.data());
  }
}

void bench_adjoint(benchmark::State& state, const ig::LinearOperator& op) {
  const auto& f = fixture();
  for (auto _ : state) {
    ig::CVec x = op.adjoint_apply(f.obs.y);
    benchmark::DoNotOptimize(x.data());
  }
}

void bench_eiga_iteration(benchmark::State& state,
                          const ig::LinearOperator& op) {
  const auto& f = fixture();
  ig::EigaState s;
  s.damping = ig::default_damping(*f.structured);
  s.theta = ig::CVec::Zero(f.prior.dim);
  s.nu = ig::RVec::Zero(f.prior.dim);
  s.n_obs = op.rows();
  s.virtual_noise_var = f.prior.virtual_noise_var;
  s.a_h_y = op.adjoint_apply(f.obs.y);
  ig::refresh_cache(s, f.prior);
  for (auto _ : state) {
    ig::CVec theta_next = ig::update_theta(s, op, f.obs);
    ig::RVec nu_next = ig::update_nu(s);
    s.theta = std::move(theta_next);
    s.nu = std::move(nu_next);
    s.t += 1;
    ig::refresh_cache(s, f.prior);
    benchmark::DoNotOptimize(s.theta.data());
  }
}

void BM_StructuredApply(benchmark::State& state) {
  bench_apply(state, *fixture().structured);
}
void BM_DenseApply(benchmark::State& state) {
  bench_apply(state, *fixture().dense);
}
void BM_StructuredAdjoint(benchmark::State& state) {
  bench_adjoint(state, *fixture().structured);
}
void BM_DenseAdjoint(benchmark::State& state) {
  bench_adjoint(state, *fixture().dense);
}
void BM_EigaIterationStructured(benchmark::State& state) {
  bench_eiga_iteration(state, *fixture().structured);
}
void BM_EigaIterationDense(benchmark::State& state) {
  bench_eiga_iteration(state, *fixture().dense);
}

BENCHMARK(BM_StructuredApply);
BENCHMARK(BM_DenseApply);
BENCHMARK(BM_StructuredAdjoint);
BENCHMARK(BM_DenseAdjoint);
BENCHMARK(BM_EigaIterationStructured);
BENCHMARK(BM_EigaIterationDense);

}  // namespace

BENCHMARK_MAIN();
