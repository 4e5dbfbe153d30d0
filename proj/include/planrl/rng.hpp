#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace planrl {

// Counter-based pseudo random stream. Output i of a stream is a pure function
// mix(key + i * GOLDEN), so streams are stateless apart from the counter,
// serialize to two integers, and are reproducible across platforms.
namespace detail {
inline uint64_t splitmix_mix(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
inline constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

class RngStream {
 public:
  RngStream() : key_(0), counter_(0) {}
  explicit RngStream(uint64_t key, uint64_t counter = 0) : key_(key), counter_(counter) {}

  /// Derive a named substream. Used to fan a single run seed out to the
  /// per-subsystem streams (env i, traffic i, policy init, sampling, ...).
  static RngStream derive(uint64_t seed, std::string_view label, uint64_t index = 0) {
    uint64_t k = detail::splitmix_mix(seed ^ detail::fnv1a(label));
    k = detail::splitmix_mix(k + index * detail::kGolden + 0x6a09e667f3bcc909ULL);
    return RngStream(k);
  }

  RngStream derive(std::string_view label, uint64_t index = 0) const {
    return derive(key_, label, index);
  }

  uint64_t next_u64() { return detail::splitmix_mix(key_ + (++counter_) * detail::kGolden); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1), never exactly 0 or 1 (safe under log).
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return n > 0 ? next_u64() % n : 0; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one draw per call, no caching so the
  /// stream state stays a plain counter).
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Gamma(shape, 1) via Marsaglia-Tsang squeeze.
  double gamma(double shape) {
    if (shape < 1.0) {
      double u = uniform_pos();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Beta(a, b) draw in (0, 1) from two Gamma draws.
  double beta(double a, double b) {
    double ga = gamma(a);
    double gb = gamma(b);
    double s = ga + gb;
    double x = s > 0.0 ? ga / s : 0.5;
    // keep strictly inside the open interval
    constexpr double eps = 1e-12;
    if (x < eps) x = eps;
    if (x > 1.0 - eps) x = 1.0 - eps;
    return x;
  }

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

 private:
  uint64_t key_;
  uint64_t counter_;
};

}  // namespace planrl
