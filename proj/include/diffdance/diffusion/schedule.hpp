#pragma once

#include <string>
#include <vector>

#include "diffdance/core/tensor.hpp"

namespace diffdance {

class Rng;

enum class ScheduleKind { Linear, Cosine };

ScheduleKind parse_schedule_kind(const std::string& name);

/// Variance schedule over steps 1..T. Index 0 holds the clean-data
/// convention beta = 0, alpha = alpha_bar = 1.
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  /// Timestep handed to the network at each index. Identity for a training
  /// schedule, the strided original step for a respaced one.
  std::vector<int> model_t;

  int steps() const { return static_cast<int>(beta.size()) - 1; }

  /// Linear betas run from 1e-4 to 0.02 at T = 1000 (scaled by 1000/T);
  /// cosine follows the squared-cosine alpha_bar with offset 0.008 and betas
  /// clipped at 0.999. Throws DomainError for T < 2.
  static NoiseSchedule build(int T, ScheduleKind kind);

  /// Evenly strided sub-sequence of `count` steps from 1 to T, with betas
  /// recomputed so the respaced chain keeps the original marginals.
  NoiseSchedule respaced(int count) const;
};

/// Closed-form forward marginal: sqrt(ab_t)·x0 + sqrt(1-ab_t)·eps.
/// t = 0 returns x0; t outside [0, T] throws DomainError.
Matrix q_sample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& sched);

/// One forward transition q(x_t | x_{t-1}).
Matrix q_step(const Matrix& x_prev, int t, const Matrix& eps, const NoiseSchedule& sched);

/// Mean of q(x_{t-1} | x_t, x0) with x0 replaced by the model prediction.
Matrix posterior_mean(const Matrix& x0_pred, const Matrix& x_t, int t, const NoiseSchedule& sched);

enum class ReverseNoise {
  Beta,           ///< sigma_t = beta_t
  PosteriorStd,   ///< sigma_t = sqrt(beta_tilde_t)
};

double reverse_sigma(int t, const NoiseSchedule& sched, ReverseNoise mode);

/// x_{t-1} = posterior mean + sigma_t·z; z = 0 at t = 1 or when `rng` is
/// null. Throws DomainError for t outside [1, T], ShapeError on mismatch.
Matrix p_sample_step(const Matrix& x0_pred, const Matrix& x_t, int t, const NoiseSchedule& sched, Rng* rng,
                     ReverseNoise mode = ReverseNoise::Beta);

/// uncond + w·(cond - uncond); w = 1 and w = 0 return an input unchanged.
Matrix cfg_combine(const Matrix& pred_cond, const Matrix& pred_uncond, double w);

/// Noises the low-resolution input at augmentation step s (s = 0 is the
/// identity). Throws DomainError for s outside [0, T].
Matrix conditioning_augment(const Matrix& x_low, int s, const NoiseSchedule& sched, Rng& rng);

}  // namespace diffdance
