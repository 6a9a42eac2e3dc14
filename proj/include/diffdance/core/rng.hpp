#pragma once

#include <cstdint>

#include "diffdance/core/tensor.hpp"

namespace diffdance {

/// SplitMix64 generator. The state is a plain counter advanced by the golden
/// gamma, so streams are reproducible on every platform and cheap to fork.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);

  /// Independent generator derived from this seed and a stream id.
  /// Does not advance this generator.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// Finalizer of SplitMix64, usable as a 64-bit hash.
std::uint64_t mix64(std::uint64_t z);

}  // namespace diffdance
