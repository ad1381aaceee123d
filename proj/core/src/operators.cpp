#include "ig/operators.hpp"

#include <fftw3.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numbers>
#include <stdexcept>

#include "ig/errors.hpp"
#include "ig/rng.hpp"

namespace ig {

namespace {

// The FFTW planner (and plan destruction) is not thread-safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

FftwBuffer make_buffer(std::int64_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (!p) throw std::bad_alloc();
  return FftwBuffer(p);
}

inline double pm_one(std::int64_t k) { return (k & 1) ? -1.0 : 1.0; }

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

// ---------------------------------------------------------------------------
// DenseOperator
// ---------------------------------------------------------------------------

DenseOperator::DenseOperator(CMat entries_in, bool constant_magnitude_hint)
    : entries(std::move(entries_in)), constant_magnitude_(constant_magnitude_hint) {
  if (entries.rows() < 1 || entries.cols() < 1)
    throw std::invalid_argument("DenseOperator: empty matrix");
  if (constant_magnitude_) {
    for (Eigen::Index j = 0; j < entries.cols(); ++j)
      for (Eigen::Index i = 0; i < entries.rows(); ++i)
        if (std::abs(std::abs(entries(i, j)) - 1.0) > 1e-12)
          throw std::invalid_argument(
              "DenseOperator: constant-magnitude flag set but an entry has |a| != 1");
  }
}

CVec DenseOperator::apply(const CVec& x) const {
  if (x.size() != entries.cols())
    throw std::invalid_argument("DenseOperator::apply: dimension mismatch");
  return entries * x;
}

CVec DenseOperator::adjoint_apply(const CVec& s) const {
  if (s.size() != entries.rows())
    throw std::invalid_argument("DenseOperator::adjoint_apply: dimension mismatch");
  return entries.adjoint() * s;
}

CVec DenseOperator::row(std::int64_t n) const {
  if (n < 0 || n >= entries.rows())
    throw std::invalid_argument("DenseOperator::row: index out of range");
  return entries.row(n).conjugate().transpose();
}

// ---------------------------------------------------------------------------
// StructuredOperator
// ---------------------------------------------------------------------------

StructuredOperator::StructuredOperator(std::int64_t n_rv_in, std::int64_t n_rh_in,
                                       std::int64_t n_p_in,
                                       std::array<std::int64_t, 3> fine,
                                       std::vector<std::int64_t> shifts,
                                       std::vector<std::int64_t> extraction)
    : n_rv(n_rv_in),
      n_rh(n_rh_in),
      n_p(n_p_in),
      fine_factors(fine),
      phase_shifts(std::move(shifts)),
      extraction_indices(std::move(extraction)) {
  if (n_rv < 1 || n_rh < 1 || n_p < 1)
    throw std::invalid_argument("StructuredOperator: array dimensions must be positive");
  for (const auto f : fine_factors)
    if (f < 1) throw std::invalid_argument("StructuredOperator: fine factors must be >= 1");
  grid_v_ = fine_factors[0] * n_rv;
  grid_h_ = fine_factors[1] * n_rh;
  grid_delay_ = fine_factors[2] * n_p;
  n_rows_ = n_rv * n_rh * n_p;

  if (phase_shifts.empty())
    throw std::invalid_argument("StructuredOperator: need at least one phase shift");
  for (const auto nk : phase_shifts)
    if (nk < 0 || nk >= grid_delay_)
      throw std::invalid_argument("StructuredOperator: phase shift out of range");

  const std::int64_t total = pre_extraction_cols();
  if (extraction_indices.empty())
    throw std::invalid_argument("StructuredOperator: empty extraction list");
  std::int64_t prev = -1;
  col_delay_.reserve(extraction_indices.size());
  col_av_.reserve(extraction_indices.size());
  col_ah_.reserve(extraction_indices.size());
  for (const auto g : extraction_indices) {
    if (g <= prev)
      throw std::invalid_argument(
          "StructuredOperator: extraction indices must be strictly increasing");
    if (g < 0 || g >= total)
      throw std::invalid_argument("StructuredOperator: extraction index out of range");
    prev = g;
    col_delay_.push_back(g / (grid_v_ * grid_h_));
    col_av_.push_back((g / grid_h_) % grid_v_);
    col_ah_.push_back(g % grid_h_);
  }

  const std::int64_t n_grid = total;
  plan_buf_ = fftw_malloc(sizeof(fftw_complex) * n_grid);
  auto* scratch = fftw_malloc(sizeof(fftw_complex) * n_grid);
  if (!plan_buf_ || !scratch) {
    fftw_free(plan_buf_);
    fftw_free(scratch);
    throw std::bad_alloc();
  }
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_fwd_ = fftw_plan_dft_3d(
        static_cast<int>(grid_delay_), static_cast<int>(grid_v_),
        static_cast<int>(grid_h_), static_cast<fftw_complex*>(plan_buf_),
        static_cast<fftw_complex*>(scratch), FFTW_FORWARD, FFTW_ESTIMATE);
    plan_bwd_ = fftw_plan_dft_3d(
        static_cast<int>(grid_delay_), static_cast<int>(grid_v_),
        static_cast<int>(grid_h_), static_cast<fftw_complex*>(plan_buf_),
        static_cast<fftw_complex*>(scratch), FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  fftw_free(scratch);
  if (!plan_fwd_ || !plan_bwd_)
    throw std::runtime_error("StructuredOperator: FFT planning failed");
}

StructuredOperator::~StructuredOperator() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plan_fwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  if (plan_bwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
  fftw_free(plan_buf_);
}

CVec StructuredOperator::apply(const CVec& x) const {
  if (x.size() != cols())
    throw std::invalid_argument("StructuredOperator::apply: dimension mismatch");
  const std::int64_t n_grid = pre_extraction_cols();
  auto in = make_buffer(n_grid);
  auto out = make_buffer(n_grid);
  std::memset(in.get(), 0, sizeof(fftw_complex) * n_grid);
  auto* in_c = reinterpret_cast<cxd*>(in.get());
  for (std::int64_t j = 0; j < cols(); ++j)
    in_c[(col_delay_[j] * grid_v_ + col_av_[j]) * grid_h_ + col_ah_[j]] = x[j];
  fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_), in.get(), out.get());
  const auto* out_c = reinterpret_cast<const cxd*>(out.get());
  CVec y(n_rows_);
  std::int64_t n = 0;
  for (std::int64_t m = 0; m < n_p; ++m)
    for (std::int64_t rv = 0; rv < n_rv; ++rv)
      for (std::int64_t rh = 0; rh < n_rh; ++rh, ++n)
        y[n] = pm_one(rv + rh) * out_c[(m * grid_v_ + rv) * grid_h_ + rh];
  return y;
}

CVec StructuredOperator::adjoint_apply(const CVec& s) const {
  if (s.size() != rows())
    throw std::invalid_argument("StructuredOperator::adjoint_apply: dimension mismatch");
  const std::int64_t n_grid = pre_extraction_cols();
  auto in = make_buffer(n_grid);
  auto out = make_buffer(n_grid);
  std::memset(in.get(), 0, sizeof(fftw_complex) * n_grid);
  auto* in_c = reinterpret_cast<cxd*>(in.get());
  std::int64_t n = 0;
  for (std::int64_t m = 0; m < n_p; ++m)
    for (std::int64_t rv = 0; rv < n_rv; ++rv)
      for (std::int64_t rh = 0; rh < n_rh; ++rh, ++n)
        in_c[(m * grid_v_ + rv) * grid_h_ + rh] = pm_one(rv + rh) * s[n];
  // Unnormalized backward transform = conjugate-transpose of the forward one.
  fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_), in.get(), out.get());
  const auto* out_c = reinterpret_cast<const cxd*>(out.get());
  CVec r(cols());
  for (std::int64_t j = 0; j < cols(); ++j)
    r[j] = out_c[(col_delay_[j] * grid_v_ + col_av_[j]) * grid_h_ + col_ah_[j]];
  return r;
}

CVec StructuredOperator::row(std::int64_t n) const {
  if (n < 0 || n >= n_rows_)
    throw std::invalid_argument("StructuredOperator::row: index out of range");
  const std::int64_t rh = n % n_rh;
  const std::int64_t rv = (n / n_rh) % n_rv;
  const std::int64_t m = n / (n_rh * n_rv);
  CVec gamma(cols());
  for (std::int64_t j = 0; j < cols(); ++j) {
    const double frac = static_cast<double>(m * col_delay_[j]) / grid_delay_ +
                        static_cast<double>(rv * col_av_[j]) / grid_v_ +
                        static_cast<double>(rh * col_ah_[j]) / grid_h_;
    gamma[j] = pm_one(rv + rh) * std::polar(1.0, kTwoPi * frac);
  }
  return gamma;
}

CMat StructuredOperator::materialize() const {
  CMat a(n_rows_, cols());
  std::int64_t n = 0;
  for (std::int64_t m = 0; m < n_p; ++m)
    for (std::int64_t rv = 0; rv < n_rv; ++rv)
      for (std::int64_t rh = 0; rh < n_rh; ++rh, ++n) {
        const double sign = pm_one(rv + rh);
        for (std::int64_t j = 0; j < cols(); ++j) {
          const double frac = static_cast<double>(m * col_delay_[j]) / grid_delay_ +
                              static_cast<double>(rv * col_av_[j]) / grid_v_ +
                              static_cast<double>(rh * col_ah_[j]) / grid_h_;
          a(n, j) = sign * std::polar(1.0, -kTwoPi * frac);
        }
      }
  return a;
}

std::unique_ptr<StructuredOperator> build_structured(
    std::int64_t n_rv, std::int64_t n_rh, std::int64_t n_p,
    std::array<std::int64_t, 3> fine_factors,
    std::vector<std::int64_t> phase_shifts,
    std::vector<std::int64_t> extraction_indices) {
  return std::make_unique<StructuredOperator>(n_rv, n_rh, n_p, fine_factors,
                                              std::move(phase_shifts),
                                              std::move(extraction_indices));
}

// ---------------------------------------------------------------------------
// Spectral quantities
// ---------------------------------------------------------------------------

double spectral_radius_centered(const LinearOperator& op, RadiusMethod method) {
  const std::int64_t n = op.rows();
  const std::int64_t m = op.cols();
  if (method == RadiusMethod::exact) {
    if (m > 4096)
      throw std::invalid_argument(
          "spectral_radius_centered: exact method guarded to M <= 4096");
    const CMat a = op.materialize();
    CMat c = -(a.adjoint() * a);
    c.diagonal().array() += static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<CMat> es(c, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return std::max(std::abs(ev[0]), std::abs(ev[ev.size() - 1]));
  }

  // Power iteration on N I - A^H A with a Rayleigh-quotient stop.
  Philox gen(0xC0FFEE, Stream::probe);
  CVec v(m);
  for (std::int64_t i = 0; i < m; ++i) v[i] = gen.next_cnormal(1.0);
  v /= v.norm();
  double lambda_prev = 0.0;
  constexpr double kRelTol = 1e-6;
  constexpr int kMaxIter = 10000;
  for (int it = 0; it < kMaxIter; ++it) {
    CVec w = static_cast<double>(n) * v - op.adjoint_apply(op.apply(v));
    const double lambda = v.dot(w).real();  // v is unit norm
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    if (it > 0 && std::abs(lambda - lambda_prev) <= kRelTol * std::max(1.0, std::abs(lambda)))
      return std::abs(lambda);
    lambda_prev = lambda;
  }
  throw iteration_limit_error(
      "spectral_radius_centered: power iteration did not converge",
      std::abs(lambda_prev));
}

DampingBounds damping_bounds(const LinearOperator& op,
                             std::optional<std::int64_t> k_users) {
  DampingBounds b;
  const double n = static_cast<double>(op.rows());
  const double rho = spectral_radius_centered(
      op, op.cols() <= 4096 ? RadiusMethod::exact : RadiusMethod::power_iteration);
  b.general = 2.0 / (1.0 + rho / n);
  b.worst_case = 2.0 / static_cast<double>(op.cols());
  if (const auto* sop = dynamic_cast<const StructuredOperator*>(&op)) {
    const double fine_product = static_cast<double>(
        sop->fine_factors[0] * sop->fine_factors[1] * sop->fine_factors[2]);
    b.structured = 2.0 / fine_product;
    const auto k = k_users.value_or(
        static_cast<std::int64_t>(sop->phase_shifts.size()));
    if (k > 1) b.multi_user = 2.0 / (static_cast<double>(k) * fine_product);
  }
  return b;
}

double default_damping(const LinearOperator& op) {
  // The sufficient bound can exceed 1 for well-conditioned operators; the
  // update itself only admits damping in (0, 1].
  return std::min(0.9 * damping_bounds(op).general, 1.0);
}

// ---------------------------------------------------------------------------
// Dense binary export
// ---------------------------------------------------------------------------

namespace {
std::int64_t dense_magic() {
  std::int64_t m = 0;
  std::memcpy(&m, "IGDENSE\0", 8);
  return m;
}
}  // namespace

void export_dense(const LinearOperator& op, const std::filesystem::path& path) {
  const CMat a = op.materialize();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("export_dense: cannot open " + path.string());
  const std::int64_t header[8] = {dense_magic(),
                                  1,
                                  op.rows(),
                                  op.cols(),
                                  op.constant_magnitude() ? 1 : 0,
                                  0,
                                  0,
                                  0};
  f.write(reinterpret_cast<const char*>(header), sizeof(header));
  f.write(reinterpret_cast<const char*>(a.data()),
          static_cast<std::streamsize>(sizeof(cxd) * a.size()));
  if (!f) throw std::runtime_error("export_dense: write failed for " + path.string());
}

CMat import_dense(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("import_dense: cannot open " + path.string());
  std::int64_t header[8];
  f.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!f || header[0] != dense_magic() || header[1] != 1)
    throw std::runtime_error("import_dense: bad header in " + path.string());
  const std::int64_t n = header[2], m = header[3];
  if (n < 1 || m < 1) throw std::runtime_error("import_dense: bad dimensions");
  CMat a(n, m);
  f.read(reinterpret_cast<char*>(a.data()),
         static_cast<std::streamsize>(sizeof(cxd) * a.size()));
  if (!f) throw std::runtime_error("import_dense: truncated file " + path.string());
  return a;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const StructuredOperator& op) {
  j = nlohmann::json{{"n_rv", op.n_rv},
                     {"n_rh", op.n_rh},
                     {"n_p", op.n_p},
                     {"fine_factors", op.fine_factors},
                     {"phase_shifts", op.phase_shifts},
                     {"extraction_indices", op.extraction_indices}};
}

std::unique_ptr<StructuredOperator> structured_from_json(const nlohmann::json& j) {
  return build_structured(j.at("n_rv").get<std::int64_t>(),
                          j.at("n_rh").get<std::int64_t>(),
                          j.at("n_p").get<std::int64_t>(),
                          j.at("fine_factors").get<std::array<std::int64_t, 3>>(),
                          j.at("phase_shifts").get<std::vector<std::int64_t>>(),
                          j.at("extraction_indices").get<std::vector<std::int64_t>>());
}

void to_json(nlohmann::json& j, const DampingBounds& b) {
  j = nlohmann::json{{"general", b.general}, {"worst_case", b.worst_case}};
  if (b.structured) j["structured"] = *b.structured;
  if (b.multi_user) j["multi_user"] = *b.multi_user;
}

}  // namespace ig
