#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "diffdance/core/tensor.hpp"
#include "diffdance/diffusion/schedule.hpp"

namespace diffdance {

class Rng;

/// Music condition; std::nullopt selects the model's learned null embedding.
using Condition = std::optional<RowVector>;

/// Returns null with probability p, otherwise `c`. Throws DomainError unless
/// 0 <= p <= 1.
Condition condition_dropout(const RowVector& c, double p, Rng& rng);

/// x0-predicting network: (x_t, network timestep, condition) -> x0.
using X0Model = std::function<Matrix(const Matrix& x_t, int t, const Condition& c)>;

struct SamplerConfig {
  double guidance_weight = 2.5;
  int inference_steps = 100;
  /// Prefix frames held to the given motion (inpainting-style guidance).
  std::optional<Matrix> seed_frames;
  std::uint64_t seed = 0;
  ReverseNoise noise = ReverseNoise::Beta;
  /// false: start from zeros and never inject noise (deterministic oracle runs).
  bool stochastic = true;

  void validate(int train_steps) const;
};

/// Reverse diffusion over an evenly strided `inference_steps` sub-sequence of
/// the training schedule. Every step applies classifier-free guidance (skipped
/// for an unconditional request) and, when seed frames are given, overwrites
/// the prefix of x_t with the seed noised to the current level before calling
/// the model; the final output's prefix equals the seed exactly.
Matrix sample_loop(const X0Model& model, const Condition& c, Eigen::Index frames, Eigen::Index width,
                   const SamplerConfig& config, const NoiseSchedule& train_schedule);

}  // namespace diffdance
