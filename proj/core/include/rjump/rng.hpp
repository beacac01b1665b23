#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace rjump {

/// splitmix64 step; the standard finalizer constants.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-path random stream with a fully pinned algorithm so that runs are
/// reproducible bit-for-bit across platforms and worker counts:
///   - stream seed  = splitmix64(root_seed XOR splitmix64(stream_index + 1))
///   - generator    = std::mt19937_64 (algorithm fixed by the standard)
///   - uniforms     = top 53 bits, mapped to (0,1]
///   - normals      = Box-Muller transform (std::normal_distribution is
///                    implementation-defined and is deliberately not used)
///   - exponentials = inverse CDF on the (0,1] uniform
/// Each simulated path owns one stream keyed by its path index, so results do
/// not depend on scheduling.
class PathRng {
 public:
  PathRng(std::uint64_t root_seed, std::uint64_t stream_index)
      : gen_(splitmix64(root_seed ^ splitmix64(stream_index + 1))) {}

  /// Uniform on (0, 1]; 53-bit resolution.
  double uniform01() {
    const std::uint64_t bits = (gen_() >> 11) + 1;  // in [1, 2^53]
    return static_cast<double>(bits) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; values are produced in pairs and the
  /// spare is cached, so draw order is fixed by call order alone.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Exponential with the given rate; rate <= 0 yields +infinity (no event).
  double exponential(double rate) {
    if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
    return -std::log(uniform01()) / rate;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rjump
