#include "ig/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ig {

namespace {

constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi,
                    std::uint64_t& lo) {
  const unsigned __int128 p =
      static_cast<unsigned __int128>(a) * static_cast<unsigned __int128>(b);
  hi = static_cast<std::uint64_t>(p >> 64);
  lo = static_cast<std::uint64_t>(p);
}

}  // namespace

Philox::Philox(std::uint64_t seed, Stream stream, std::uint64_t context)
    : key_{seed, 0},
      counter_{0, static_cast<std::uint64_t>(stream), context, 0} {}

void Philox::refill() {
  // Pre-increment the 256-bit counter (little-endian with carry), then run
  // the 10-round bijection; matches numpy.random.Philox raw output.
  for (int i = 0; i < 4; ++i) {
    if (++counter_[i] != 0) break;
  }
  std::array<std::uint64_t, 4> c = counter_;
  std::array<std::uint64_t, 2> k = key_;
  for (int round = 0; round < 10; ++round) {
    std::uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    if (round < 9) {
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
  }
  block_ = c;
  block_pos_ = 0;
}

std::uint64_t Philox::next_u64() {
  if (block_pos_ == 4) refill();
  return block_[block_pos_++];
}

double Philox::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t Philox::next_index(std::int64_t range) {
  if (range < 1) throw std::invalid_argument("next_index: range must be >= 1");
  const auto idx = static_cast<std::int64_t>(next_double() * static_cast<double>(range));
  return idx >= range ? range - 1 : idx;
}

std::array<double, 2> Philox::next_normal_pair() {
  // u1 on (0, 1] so the logarithm is finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

double Philox::next_normal(double var) {
  return next_normal_pair()[0] * std::sqrt(var);
}

std::complex<double> Philox::next_cnormal(double var) {
  const auto z = next_normal_pair();
  const double s = std::sqrt(var / 2.0);
  return {z[0] * s, z[1] * s};
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  // splitmix64 finalization over a running combination of the inputs.
  auto mix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(base);
  h = mix(h ^ a);
  h = mix(h ^ b);
  h = mix(h ^ c);
  return h;
}

}  // namespace ig
