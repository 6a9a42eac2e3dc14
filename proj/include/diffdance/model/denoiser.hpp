#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "diffdance/core/autodiff.hpp"
#include "diffdance/core/params.hpp"
#include "diffdance/diffusion/sampler.hpp"

namespace diffdance {

class Rng;

struct DenoiserConfig {
  int layers = 4;
  int hidden = 128;
  int heads = 4;
  double dropout = 0.1;
  int max_frames = 60;
  int frame_width = 57;
  int cond_dim = 512;
  /// SSR variant: consumes [x_t | x_low] and conditions on t + s.
  bool super_resolution = false;

  int input_width() const { return super_resolution ? 2 * frame_width : frame_width; }
  /// Throws DomainError unless hidden is even and divisible by heads,
  /// dropout in [0, 1) and all sizes positive.
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static DenoiserConfig from_map(const std::map<std::string, std::string>& kv);
  bool operator==(const DenoiserConfig&) const = default;
};

/// Trainable scalar count for a config (normalization buffers excluded).
std::size_t count_params(const DenoiserConfig& config);

/// Sinusoidal encoding of a timestep, width `dim` (sin half then cos half).
RowVector sinusoidal_embedding(int t, int dim);

/// Transformer encoder that predicts clean motion x0 from noised frames.
///
/// Tokens: one condition token (projected music embedding + timestep MLP)
/// followed by one token per frame (input projection + learned position).
/// The condition token's output is discarded. Frames are handled in the
/// normalized space given by the model's per-channel mean/std buffers.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, std::uint64_t init_seed);
  Denoiser(const DenoiserConfig& config, ParamStore params);

  const DenoiserConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Differentiable forward. `bound` comes from params().bind(tape). For the
  /// SSR variant `x_low` is the upsampled, augmented low-res input and the
  /// timestep embedding uses t + s. `dropout_rng == nullptr` disables dropout.
  Var forward(Tape& tape, const std::vector<Var>& bound, const Matrix& x_t, int t, const Condition& c,
              const Matrix* x_low = nullptr, int s = 0, Rng* dropout_rng = nullptr) const;

  /// Inference forward of the base model.
  Matrix predict(const Matrix& x_t, int t, const Condition& c) const;
  /// Inference forward of the SSR model.
  Matrix predict_ssr(const Matrix& x_t, int t, const Condition& c, const Matrix& x_low, int s) const;

  /// Timestep MLP applied to the sinusoidal encoding of t.
  RowVector embed_timestep(int t) const;

  void set_normalization(const RowVector& mean, const RowVector& std);
  Matrix normalize(const Matrix& frames) const;
  Matrix denormalize(const Matrix& x) const;
  RowVector norm_mean() const;
  RowVector norm_std() const;

 private:
  struct Block {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_ff1, b_ff1, w_ff2, b_ff2;
  };
  void index_params();
  Var time_embedding(Tape& tape, const std::vector<Var>& bound, int t) const;

  DenoiserConfig config_;
  ParamStore params_;
  std::size_t w_in_, b_in_, pos_, w_t1_, b_t1_, w_t2_, b_t2_, w_c_, b_c_, null_c_, lnf_g_, lnf_b_, w_out_, b_out_;
  std::size_t norm_mean_, norm_std_;
  std::vector<Block> blocks_;
};

}  // namespace diffdance
