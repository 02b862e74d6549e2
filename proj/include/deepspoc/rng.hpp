#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "deepspoc/types.hpp"

namespace deepspoc {

/// Independent random streams used inside one epoch. Each stream is keyed by
/// (seed, epoch, lane, index, node) so that draws never depend on the order in
/// which particles or nodes are processed.
enum class Lane : std::uint64_t {
  initial = 1,
  increment = 2,
  training = 3,
  adaptive = 4,
  model_samples = 5,
  per_particle_samples = 6,
  model_init = 7,
  diagnostics = 8,
  generic = 9,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: output k of a stream is a bijective mix of
/// (key, k). Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() : CounterRng(0) {}
  explicit CounterRng(std::uint64_t seed, std::uint64_t epoch = 0,
                      Lane lane = Lane::generic, std::uint64_t index = 0,
                      std::uint64_t node = 0) {
    std::uint64_t h = splitmix64(seed ^ 0x5EEDC0FFEE123457ULL);
    h = splitmix64(h ^ epoch);
    h = splitmix64(h ^ static_cast<std::uint64_t>(lane));
    h = splitmix64(h ^ index);
    h = splitmix64(h ^ node);
    key_ = h;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ + (counter_++) * 0xD1B54A32D192ED03ULL); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal by Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double exponential() { return -std::log(uniform_open()); }

  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift; the bias is below 2^-64 * n and irrelevant here.
    const unsigned __int128 p = static_cast<unsigned __int128>((*this)()) * n;
    return static_cast<std::uint64_t>(p >> 64);
  }

  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fills `m` with uniform points in `box`.
inline void fill_uniform(Matrix& m, const Box& box, CounterRng& rng) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (std::size_t k = 0; k < box.dim(); ++k) {
      m(i, static_cast<Eigen::Index>(k)) = rng.uniform(box.lo[k], box.hi[k]);
    }
  }
}

inline Matrix uniform_points(std::size_t n, const Box& box, CounterRng& rng) {
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(box.dim()));
  fill_uniform(m, box, rng);
  return m;
}

}  // namespace deepspoc
