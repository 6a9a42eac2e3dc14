#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "diffdance/core/adam.hpp"
#include "diffdance/model/denoiser.hpp"
#include "diffdance/motion/synthetic.hpp"
#include "diffdance/pipeline/config.hpp"

namespace diffdance {

enum class Stage { M2D, SSR };
const char* stage_name(Stage stage);

/// Maps an audio feature to the 512-dim condition vector.
using ConditionFn = std::function<RowVector(const Vector& audio_feature)>;

struct TrainLogRow {
  std::int64_t step = 0;  ///< 1-based index of the finished step
  LossBreakdown loss;     ///< batch means
  int dropped = 0;        ///< examples trained with the null condition
  int batch = 0;
};

std::string train_log_header();
std::string train_log_line(const TrainLogRow& row);

/// Per-channel mean and standard deviation of all frames, std floored at
/// 1e-2 so near-constant channels stay well scaled.
std::pair<RowVector, RowVector> channel_stats(const std::vector<SyntheticClip>& clips);

/// Draws training examples for one stage and applies optimizer steps.
///
/// M2D sees `low_frames`-long crops of the 15 fps clips; SSR sees
/// `ssr_window`-long 60 fps crops together with the same window of the
/// linearly upsampled 15 fps clip, noised at a random augmentation level
/// s ∈ [0, ssr_aug_max]. The randomness of step n comes only from
/// Rng(seed).fork(n), so a run resumed from a checkpoint repeats exactly.
class StageTrainer {
 public:
  StageTrainer(const RunConfig& config, Stage stage, std::vector<SyntheticClip> clips, ConditionFn condition);

  /// Freshly initialized model carrying the data normalization.
  Denoiser init_model(std::uint64_t seed) const;

  /// Runs optimizer step number opt.step + 1. Throws NumericError, tagged
  /// with the step number, if the loss or any intermediate is non-finite.
  TrainLogRow step(Denoiser& model, AdamState& opt) const;

  const NoiseSchedule& schedule() const { return schedule_; }
  Stage stage() const { return stage_; }
  const SkeletonSpec& skeleton() const { return skel_; }

 private:
  const RowVector& condition_at(std::size_t clip, Eigen::Index start60) const;

  RunConfig config_;
  Stage stage_;
  SkeletonSpec skel_;
  std::vector<SyntheticClip> clips_;
  std::vector<Matrix> low_;        // 15 fps frames
  std::vector<Matrix> upsampled_;  // 15 fps frames linearly upsampled to 60 fps
  ConditionFn condition_;
  NoiseSchedule schedule_;
  mutable std::vector<std::map<Eigen::Index, RowVector>> cond_cache_;
};

/// Extra checkpoint keys describing the diffusion setup of a stage.
std::map<std::string, std::string> stage_checkpoint_keys(const RunConfig& config, Stage stage);

struct StageRunOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  bool resume = false;
  std::ostream* progress = nullptr;
};

/// Trains up to the configured step count, writing the CSV log and the
/// checkpoint (every `checkpoint_every` steps and at the end). With
/// `resume`, continues from the checkpoint's optimizer step and appends to
/// the log.
Denoiser train_stage(const RunConfig& config, const StageTrainer& trainer, const StageRunOptions& options);

}  // namespace diffdance
