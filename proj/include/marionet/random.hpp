#pragma once

// Seeded RNG with hand-rolled samplers. Sampling goes through explicit
// inverse-CDF / Box-Muller formulas instead of std:: distributions so that
// a given seed produces the same event schedule on every standard library.

#include <cmath>
#include <cstdint>
#include <random>

namespace marionet {

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return (engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Log-normal parameterized by median: exp(ln(median) + sigma * Z).
  double lognormal_median(double median, double sigma) {
    return std::exp(std::log(median) + sigma * normal());
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace marionet
