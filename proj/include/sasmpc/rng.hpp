#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "sasmpc/common.hpp"

namespace sasmpc {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, step, counter), so serial and parallel runs agree bitwise.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream, uint64_t step = 0)
      : seed_(seed), stream_(stream), step_(step) {}

  static uint64_t mix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static uint64_t hash(uint64_t seed, uint64_t stream, uint64_t step,
                       uint64_t counter) {
    uint64_t h = mix(seed);
    h = mix(h ^ (stream * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
    h = mix(h ^ (step * 0x8CB92BA72F3D8DD7ULL + 0x3C6EF372FE94F82BULL));
    h = mix(h ^ (counter * 0xA0761D6478BD642FULL + 0xE7037ED1A0B428DBULL));
    return h;
  }

  /// Moves to another step of the same stream and resets the counter.
  void seek(uint64_t step) {
    step_ = step;
    counter_ = 0;
    has_spare_ = false;
  }

  uint64_t next_u64() { return hash(seed_, stream_, step_, counter_++); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal by the Box-Muller transform.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t step_;
  uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class NoiseKind { kGaussian, kUniform, kLaplace };

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::kGaussian: return "gaussian";
    case NoiseKind::kUniform: return "uniform";
    case NoiseKind::kLaplace: return "laplace";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "gaussian") return NoiseKind::kGaussian;
  if (s == "uniform") return NoiseKind::kUniform;
  if (s == "laplace") return NoiseKind::kLaplace;
  throw ConfigError("unknown disturbance kind '" + s + "'");
}

/// Zero mean, unit variance scalar of the requested family.
inline double unit_sample(NoiseKind kind, CounterRng& rng) {
  switch (kind) {
    case NoiseKind::kGaussian:
      return rng.normal();
    case NoiseKind::kUniform:
      return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
    case NoiseKind::kLaplace: {
      const double u = rng.uniform() - 0.5;
      const double b = 1.0 / std::sqrt(2.0);
      return (u < 0.0 ? b : -b) * std::log(1.0 - 2.0 * std::abs(u));
    }
  }
  return 0.0;
}

}  // namespace sasmpc
