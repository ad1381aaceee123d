// Counter-based random number generation (Philox-4x64, 10 rounds).
//
// Every random quantity in the library is drawn from a named (seed, stream,
// context) triple, so problem instances are reproducible across runs, worker
// counts, and independent implementations. The generator matches
// numpy.random.Philox bit-for-bit: key = (seed, 0), counter starts at
// (0, stream, context, 0) and is incremented (little-endian with carry)
// before each 4-word block.
#pragma once

#include <array>
#include <complex>
#include <cstdint>

namespace ig {

// Fixed stream identifiers; keeping them centralized prevents accidental
// stream collisions between modules.
enum class Stream : std::uint64_t {
  channel = 0,           // channel coefficient draws
  noise = 1,             // observation noise draws
  prior_powers = 2,      // per-variable prior power values
  cluster_placement = 3, // support placement inside power vectors
  probe = 4,             // probe vectors (power iteration, random tests)
  dense_phases = 5,      // unit-magnitude dense operator entries
};

class Philox {
 public:
  Philox(std::uint64_t seed, Stream stream, std::uint64_t context = 0);

  // Next raw 64-bit word (numpy random_raw order).
  std::uint64_t next_u64();

  // Uniform on [0, 1): (x >> 11) * 2^-53.
  double next_double();

  // Uniform integer on [0, range): floor(next_double() * range), clamped.
  // range must be >= 1.
  std::int64_t next_index(std::int64_t range);

  // One Box-Muller pair from two uniforms; u1 is mapped to (0, 1].
  std::array<double, 2> next_normal_pair();

  // Real N(0, var).
  double next_normal(double var);

  // Circular complex normal with E|z|^2 = var (re and im each N(0, var/2)).
  std::complex<double> next_cnormal(double var);

 private:
  void refill();

  std::array<std::uint64_t, 2> key_;
  std::array<std::uint64_t, 4> counter_;
  std::array<std::uint64_t, 4> block_{};
  int block_pos_ = 4;  // forces refill on first draw
};

// Mixes several identifiers into a derived 64-bit seed (splitmix-style);
// used when many independent problem instances live under one user seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

}  // namespace ig
