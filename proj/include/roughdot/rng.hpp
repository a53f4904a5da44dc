#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <random>

namespace roughdot {

// Derives an independent stream seed from a base seed and a stream index.
// splitmix64 finalizer; stable across platforms.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t x = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

// Standard normal via Box-Muller on the raw 64-bit stream. We avoid
// std::normal_distribution because its algorithm is implementation-defined
// and seeded runs must reproduce bit-identically everywhere.
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : eng_(seed) {}

  double uniform() {
    // 53-bit mantissa uniform in (0,1)
    return ((eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double c = std::cos(2.0 * 3.14159265358979323846 * u2);
    double s = std::sin(2.0 * 3.14159265358979323846 * u2);
    spare_ = r * s;
    have_spare_ = true;
    return r * c;
  }

  std::uint64_t raw() { return eng_(); }

  std::mt19937_64& engine() { return eng_; }

  // exact textual state round trip (engine plus the Box-Muller spare)
  void serialize(std::ostream& os) const {
    os << eng_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
    os << std::hexfloat << spare_ << std::defaultfloat;
  }
  void deserialize(std::istream& is) {
    int flag = 0;
    is >> eng_ >> flag;
    std::string hex;
    is >> hex;
    have_spare_ = flag != 0;
    spare_ = std::strtod(hex.c_str(), nullptr);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace roughdot
