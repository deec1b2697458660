#pragma once

// Seeded random numbers with platform-independent output.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The std:: distributions are implementation-defined, so the
// conversions to uniform, normal and Poisson variates live here:
//   uniform  53 high bits of one engine draw, scaled to [0, 1)
//   normal   Box-Muller, both variates used
//   poisson  multiplication method below mean 10, PTRS (Hormann 1993) above
// Independent streams are derived with the splitmix64 finaliser.

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>

namespace fluoro {

/// splitmix64 finaliser.
std::uint64_t mix64(std::uint64_t x);

/// Folds a list of integers into one seed; order matters.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  std::int64_t poisson(double mean);
  /// Uniformly distributed unit vector.
  Eigen::Vector3d unit_vector();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

}  // namespace fluoro
