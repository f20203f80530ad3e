#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "tactfl/errors.hpp"

namespace tactfl {

// 64-bit finalizer used by the splitmix64 generator below and for seed
// derivation. Fully specified here so that identical seeds reproduce
// identical streams in any reimplementation.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent stream seed from a master seed plus up to two stream indices
// (e.g. client id and round). Every component perturbs the result.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0) {
  std::uint64_t s = mix64(master);
  s = mix64(s ^ (a + 0x9e3779b97f4a7c15ULL));
  s = mix64(s ^ (b + 0x6a09e667f3bcc909ULL));
  return s;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based splitmix64 generator. The raw u64 stream is bit-exact on
// every platform; floating-point transforms inherit the platform libm.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random mantissa bits.
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Box-Muller with the spare value cached, so consecutive calls consume
  // two uniforms per pair of gaussians.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Marsaglia-Tsang; shape boost for alpha < 1.
  double next_gamma(double alpha) {
    if (alpha <= 0.0) {
      throw parameter_error("next_gamma: alpha must be > 0");
    }
    if (alpha < 1.0) {
      double u = next_double();
      if (u <= 0.0) u = 0x1.0p-53;
      return next_gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = next_gaussian();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  // Symmetric Dirichlet draw of dimension n.
  std::vector<double> next_dirichlet(double alpha, std::size_t n) {
    if (alpha <= 0.0) {
      throw parameter_error("next_dirichlet: alpha must be > 0");
    }
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& v : p) {
      v = next_gamma(alpha);
      total += v;
    }
    if (total <= 0.0) {
      // All gamma draws underflowed; fall back to uniform.
      for (auto& v : p) v = 1.0 / static_cast<double>(n);
      return p;
    }
    for (auto& v : p) v /= total;
    return p;
  }

  // Index draw from an unnormalized nonnegative weight vector.
  std::size_t next_categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = next_double() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      cum += weights[i];
      if (u < cum) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Identity permutation of n elements, shuffled.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(idx);
    return idx;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tactfl
