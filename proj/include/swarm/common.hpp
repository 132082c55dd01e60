#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace swarm {

/// Invalid or inconsistent configuration (bad sizes, speeds, file keys).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or truncated on-disk data (checkpoints, manifests).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Checkpoint written by an incompatible format version.
class CheckpointVersionError : public DataError {
 public:
  explicit CheckpointVersionError(const std::string& what) : DataError(what) {}
};

/// Non-finite value reached a numerical update; the update was rejected.
class NumericalFault : public std::runtime_error {
 public:
  explicit NumericalFault(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic named random stream. All sampling in the project flows
/// through instances of this class so that a seed fully pins a run.
/// Substreams are derived with mix() instead of sharing one generator,
/// which keeps independent components (worlds, robots, exploration,
/// replay sampling) reproducible in isolation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  /// Derives a child seed from a parent seed and a stream tag.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag + 0x51ed270b0a1dULL));
  }

 private:
  std::mt19937_64 engine_;
};

constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle to [-pi, pi).
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r >= kPi) r -= 2.0 * kPi;
  if (r < -kPi) r += 2.0 * kPi;
  return r;
}

}  // namespace swarm
