// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hkd {

/// Seedable generator. All randomness in a run is derived from one user seed
/// through named sub-streams ("init", "data", "shuffle", ...).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  static Rng substream(std::uint64_t seed, std::string_view name);

  /// Uniform in [lo, hi), built from the top 53 bits of one draw.
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  /// Uniform integer in [lo, hi].
  std::uint64_t integer(std::uint64_t lo, std::uint64_t hi);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hkd
