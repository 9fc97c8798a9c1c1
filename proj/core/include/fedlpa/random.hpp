#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace fedlpa {

// Mixes a base seed with stream identifiers (client id, round, attempt...)
// through std::seed_seq, whose output is fully specified by the standard.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * parts.size());
  words.push_back(static_cast<std::uint32_t>(base));
  words.push_back(static_cast<std::uint32_t>(base >> 32));
  for (std::uint64_t p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[1]} << 32) | out[0];
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  // Laplace(0, scale) by inverse CDF.
  double laplace(double scale) {
    double u;
    do {
      u = uniform() - 0.5;
    } while (u == -0.5);
    const double mag = -scale * std::log1p(-2.0 * std::abs(u));
    return u < 0 ? -mag : mag;
  }

  // log of a Gamma(shape, 1) draw. Shapes below one go through the
  // Gamma(shape+1) * U^(1/shape) identity in log space, which stays finite for
  // shape ~ 1e-2 where the plain draw underflows to zero.
  double log_gamma_variate(double shape) {
    if (shape >= 1.0) {
      return std::log(std::gamma_distribution<double>(shape, 1.0)(engine_));
    }
    const double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(engine_);
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return std::log(g) + std::log(u) / shape;
  }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedlpa
