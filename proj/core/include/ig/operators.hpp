// Measurement operators: dense matrices and the Kronecker-partial-DFT
// structured form with FFT-fast apply/adjoint, plus spectral quantities that
// drive damping selection.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <vector>

#include "ig/model.hpp"

namespace ig {

class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual std::int64_t rows() const = 0;
  virtual std::int64_t cols() const = 0;
  virtual CVec apply(const CVec& x) const = 0;          // A x
  virtual CVec adjoint_apply(const CVec& s) const = 0;  // A^H s
  // gamma_n: the conjugated n-th row of A (a length-M vector).
  virtual CVec row(std::int64_t n) const = 0;
  // Dense materialization; the reference for all matrix-free paths.
  virtual CMat materialize() const = 0;
  // True when every entry has unit magnitude (enables the synchrony and
  // damping-bound guarantees).
  virtual bool constant_magnitude() const = 0;
};

class DenseOperator final : public LinearOperator {
 public:
  DenseOperator(CMat entries, bool constant_magnitude_hint = false);

  std::int64_t rows() const override { return entries.rows(); }
  std::int64_t cols() const override { return entries.cols(); }
  CVec apply(const CVec& x) const override;
  CVec adjoint_apply(const CVec& s) const override;
  CVec row(std::int64_t n) const override;
  CMat materialize() const override { return entries; }
  bool constant_magnitude() const override { return constant_magnitude_; }

  CMat entries;

 private:
  bool constant_magnitude_;
};

// Aggregated pilot operator of a uniform planar array with n_rv x n_rh
// elements observing n_p training subcarriers. Columns live on an
// oversampled (F_v n_rv) x (F_h n_rh) x (F_tau n_p) grid of angle-angle-delay
// cells; extraction_indices selects the kept columns (strictly increasing,
// global index = delay * (grid_v*grid_h) + a_v * grid_h + a_h). Per-user
// pilot phase ramps act as circular shifts of the delay index and are
// already folded into the extraction indices; phase_shifts is kept as
// metadata (one shift per user). Apply/adjoint run over 3-D FFTs.
class StructuredOperator final : public LinearOperator {
 public:
  StructuredOperator(std::int64_t n_rv, std::int64_t n_rh, std::int64_t n_p,
                     std::array<std::int64_t, 3> fine_factors,
                     std::vector<std::int64_t> phase_shifts,
                     std::vector<std::int64_t> extraction_indices);
  ~StructuredOperator() override;
  StructuredOperator(const StructuredOperator&) = delete;
  StructuredOperator& operator=(const StructuredOperator&) = delete;

  std::int64_t rows() const override { return n_rows_; }
  std::int64_t cols() const override {
    return static_cast<std::int64_t>(extraction_indices.size());
  }
  CVec apply(const CVec& x) const override;
  CVec adjoint_apply(const CVec& s) const override;
  CVec row(std::int64_t n) const override;
  CMat materialize() const override;
  bool constant_magnitude() const override { return true; }

  std::int64_t grid_v() const { return grid_v_; }
  std::int64_t grid_h() const { return grid_h_; }
  std::int64_t grid_delay() const { return grid_delay_; }
  std::int64_t pre_extraction_cols() const {
    return grid_v_ * grid_h_ * grid_delay_;
  }

  std::int64_t n_rv, n_rh, n_p;
  std::array<std::int64_t, 3> fine_factors;
  std::vector<std::int64_t> phase_shifts;
  std::vector<std::int64_t> extraction_indices;

 private:
  std::int64_t grid_v_, grid_h_, grid_delay_;
  std::int64_t n_rows_;
  // Decomposed (delay, a_v, a_h) coordinates of each extracted column.
  std::vector<std::int64_t> col_delay_, col_av_, col_ah_;
  // FFTW plans and their planning buffer, held opaquely so <fftw3.h> stays
  // out of the public headers.
  void* plan_fwd_ = nullptr;
  void* plan_bwd_ = nullptr;
  void* plan_buf_ = nullptr;
};

std::unique_ptr<StructuredOperator> build_structured(
    std::int64_t n_rv, std::int64_t n_rh, std::int64_t n_p,
    std::array<std::int64_t, 3> fine_factors,
    std::vector<std::int64_t> phase_shifts,
    std::vector<std::int64_t> extraction_indices);

enum class RadiusMethod { exact, power_iteration };

// Largest |eigenvalue| of N*I - A^H A. exact materializes (guard M <= 4096);
// power_iteration is matrix-free with relative tolerance 1e-6 and at most
// 10^4 iterations (throws iteration_limit_error carrying the last estimate).
double spectral_radius_centered(const LinearOperator& op, RadiusMethod method);

// Sufficient damping upper bounds. general = 2/(1+rho/N) (instance-exact);
// worst_case = 2/M; structured = 2/(F_v F_h F_tau) and multi_user =
// 2/(K F_v F_h F_tau) apply only to structured operators (K defaults to the
// operator's user count; k_users overrides it).
struct DampingBounds {
  double general = 0.0;
  double worst_case = 0.0;
  std::optional<double> structured;
  std::optional<double> multi_user;
};
DampingBounds damping_bounds(const LinearOperator& op,
                             std::optional<std::int64_t> k_users = {});

// 0.9 x the sharpest sufficient bound (the general one), capped at 1 since
// the updates only admit damping in (0, 1].
double default_damping(const LinearOperator& op);

// Binary export of the dense materialization: 8 little-endian int64 header
// words (magic "IGDENSE\0", version 1, n_rows, n_cols, flags bit0 =
// constant magnitude, three reserved zeros) followed by column-major
// complex<double> entries.
void export_dense(const LinearOperator& op, const std::filesystem::path& path);
CMat import_dense(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const StructuredOperator& op);
std::unique_ptr<StructuredOperator> structured_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const DampingBounds& b);

}  // namespace ig
