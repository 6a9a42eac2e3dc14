#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "diffdance/diffusion/schedule.hpp"
#include "diffdance/losses/losses.hpp"
#include "diffdance/model/denoiser.hpp"

namespace diffdance {

/// Every knob of a run. Serialized as flat `key = value` lines; '#' starts a
/// comment. Denoiser fields use the prefixes `m2d.` and `ssr.`.
struct RunConfig {
  // Data
  std::string skeleton = "desk9";
  std::uint64_t data_seed = 1;
  int train_clips = 64;
  int heldout_clips = 16;
  int align_clips = 1024;
  int align_heldout_clips = 64;
  double min_duration = 4.0;
  double max_duration = 8.0;

  // Alignment
  int align_epochs = 60;
  int align_batch = 32;
  double align_lr = 1e-3;
  std::uint64_t music_encoder_seed = 0x5EEDA0D10ULL;
  std::uint64_t motion_encoder_seed = 0x5EED0D0CULL;

  // Diffusion
  std::string schedule = "cosine";
  int m2d_T = 1000;
  int ssr_T = 100;
  int m2d_inference_steps = 100;
  int ssr_inference_steps = 50;
  DenoiserConfig m2d{.layers = 2, .hidden = 48, .heads = 4, .dropout = 0.1, .max_frames = 60};
  DenoiserConfig ssr{.layers = 2, .hidden = 48, .heads = 4, .dropout = 0.1, .max_frames = 120,
                     .super_resolution = true};
  LossWeights weights;
  double cond_dropout = 0.1;
  double guidance = 2.5;
  double ssr_guidance = 1.0;
  int ssr_aug_max = 50;
  int ssr_aug_infer = 30;
  std::string reverse_noise = "beta";

  // Training
  int low_frames = 60;   ///< M2D window at 15 fps
  int ssr_window = 120;  ///< SSR window at 60 fps
  int m2d_steps = 1500;
  int ssr_steps = 600;
  int batch = 8;
  double lr = 2e-3;
  double weight_decay = 0.0;
  int log_every = 1;
  int checkpoint_every = 0;  ///< 0 = only at the end

  // Sampling
  double seed_seconds = 0.0;  ///< ground-truth prefix handed to M2D
  int eval_clips = 16;

  std::uint64_t seed = 0;
  std::string out = "run";

  /// Throws DomainError on an invalid combination.
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  /// Starts from `base` and overrides the given keys. Unknown keys and
  /// unparsable values throw DomainError.
  static RunConfig from_map(const std::map<std::string, std::string>& kv, const RunConfig& base);
  static RunConfig from_map(const std::map<std::string, std::string>& kv);

  std::string to_text() const;
  static RunConfig parse(const std::string& text, const RunConfig& base);
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path, const RunConfig& base);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  ScheduleKind schedule_kind() const { return parse_schedule_kind(schedule); }
  ReverseNoise reverse_noise_mode() const;
  std::filesystem::path out_path() const { return out; }
};

/// Parses `key = value` lines into a map; throws DomainError with the line
/// number on malformed input or duplicate keys.
std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace diffdance
