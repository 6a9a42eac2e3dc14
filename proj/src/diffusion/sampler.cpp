#include "diffdance/diffusion/sampler.hpp"

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"

namespace diffdance {

Condition condition_dropout(const RowVector& c, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("condition_dropout: p outside [0, 1]");
  if (p == 0.0) return c;
  if (p == 1.0 || rng.uniform() < p) return std::nullopt;
  return c;
}

void SamplerConfig::validate(int train_steps) const {
  if (!(guidance_weight >= 0.0)) throw DomainError("sampler: guidance weight must be >= 0");
  if (inference_steps < 1 || inference_steps > train_steps) {
    throw DomainError("sampler: inference steps outside [1, T]");
  }
}

Matrix sample_loop(const X0Model& model, const Condition& c, Eigen::Index frames, Eigen::Index width,
                   const SamplerConfig& config, const NoiseSchedule& train_schedule) {
  config.validate(train_schedule.steps());
  const NoiseSchedule sched = train_schedule.respaced(config.inference_steps);
  if (config.seed_frames) {
    const Matrix& sf = *config.seed_frames;
    if (sf.cols() != width || sf.rows() > frames) throw ShapeError("sample_loop: seed frames do not fit the output");
  }
  Rng rng(config.seed);
  Rng* noise = config.stochastic ? &rng : nullptr;
  Matrix x = config.stochastic ? rng.normal_matrix(frames, width) : Matrix::Zero(frames, width);

  auto apply_seed = [&](int k) {
    if (!config.seed_frames) return;
    const Matrix& sf = *config.seed_frames;
    const Matrix eps = config.stochastic ? rng.normal_matrix(sf.rows(), sf.cols()) : Matrix::Zero(sf.rows(), sf.cols());
    x.topRows(sf.rows()) = q_sample(sf, k, eps, sched);
  };

  for (int k = sched.steps(); k >= 1; --k) {
    apply_seed(k);
    const int model_t = sched.model_t[k];
    Matrix x0 = model(x, model_t, c);
    if (x0.rows() != frames || x0.cols() != width) throw ShapeError("sample_loop: model output shape mismatch");
    if (c && config.guidance_weight != 1.0) {
      const Matrix uncond = model(x, model_t, std::nullopt);
      if (uncond.rows() != frames || uncond.cols() != width) throw ShapeError("sample_loop: model output shape mismatch");
      x0 = cfg_combine(x0, uncond, config.guidance_weight);
    }
    x = p_sample_step(x0, x, k, sched, noise, config.noise);
  }
  if (config.seed_frames) x.topRows(config.seed_frames->rows()) = *config.seed_frames;
  return x;
}

}  // namespace diffdance
