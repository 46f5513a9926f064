#pragma once

#include <cstdint>
#include <cmath>

#include <Eigen/Core>

namespace ding {

// Counter-free stream RNG: xoshiro256++ core, seeded through SplitMix64.
// Normal variates via Box-Muller (trigonometric form, cached spare).
// Streams for distinct (master seed, stream index) pairs are obtained by
// hashing the pair through SplitMix64 before expanding the state, which is
// the usual split construction for reproducible parallel chains. The
// algorithm name and parameters are recorded in run manifests.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { seed_state(seed); }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in (0, 1]; never returns 0 so it is safe under log().
  double uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

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

  Eigen::VectorXd normal_vec(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  void seed_state(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
    has_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream from (master seed, stream index).
// Same inputs always give the same stream.
inline Rng derive_rng(std::uint64_t master_seed, std::uint64_t stream) {
  std::uint64_t x = master_seed;
  // two mixing rounds so that neighbouring (seed, stream) pairs decorrelate
  x ^= 0x9E3779B97F4A7C15ULL * (stream + 1);
  x += 0xD1B54A32D192ED03ULL;
  std::uint64_t z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return Rng(z);
}

}  // namespace ding
