#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diffdance/diffusion/sampler.hpp"
#include "diffdance/metrics/metrics.hpp"
#include "diffdance/model/denoiser.hpp"
#include "diffdance/motion/synthetic.hpp"
#include "diffdance/pipeline/config.hpp"
#include "diffdance/pipeline/training.hpp"

namespace diffdance {

/// One cascade stage as seen by the sampler. `start` is the first frame of
/// the window being refined (always 0 for the base stage).
class StageModel {
 public:
  virtual ~StageModel() = default;
  virtual Matrix predict(const Matrix& x_t, int t, const Condition& c, const Matrix* x_low, int s,
                         Eigen::Index start) const = 0;
  virtual Matrix normalize(const Matrix& frames) const = 0;
  virtual Matrix denormalize(const Matrix& x) const = 0;
};

class DenoiserStage final : public StageModel {
 public:
  explicit DenoiserStage(const Denoiser& model) : model_(model) {}
  Matrix predict(const Matrix& x_t, int t, const Condition& c, const Matrix* x_low, int s,
                 Eigen::Index start) const override;
  Matrix normalize(const Matrix& frames) const override { return model_.normalize(frames); }
  Matrix denormalize(const Matrix& x) const override { return model_.denormalize(x); }

 private:
  const Denoiser& model_;
};

/// Ignores its inputs and returns the matching rows of a fixed clip, in
/// physical units (identity normalization).
class OracleStage final : public StageModel {
 public:
  explicit OracleStage(Matrix truth) : truth_(std::move(truth)) {}
  Matrix predict(const Matrix& x_t, int t, const Condition& c, const Matrix* x_low, int s,
                 Eigen::Index start) const override;
  Matrix normalize(const Matrix& frames) const override { return frames; }
  Matrix denormalize(const Matrix& x) const override { return x; }

 private:
  Matrix truth_;
};

struct CascadeOptions {
  int low_frames = 60;
  double guidance = 2.5;
  double ssr_guidance = 1.0;
  int m2d_inference_steps = 100;
  int ssr_inference_steps = 50;
  int ssr_s = 30;
  int ssr_window = 120;
  ReverseNoise noise = ReverseNoise::Beta;
  /// false: samplers start from zeros, add no noise and skip augmentation.
  bool stochastic = true;
  std::uint64_t seed = 0;
  /// Ground-truth 15 fps prefix that constrains the base stage.
  std::optional<Matrix> seed_low;
};

CascadeOptions cascade_options(const RunConfig& config, std::uint64_t seed);

struct CascadeResult {
  MotionSequence low;        ///< base stage, 15 fps
  MotionSequence upsampled;  ///< linear upsample, 60 fps
  MotionSequence output;     ///< refined, 60 fps
};

/// Base stage: low_frames frames at 15 fps.
MotionSequence sample_low(const StageModel& m2d, const NoiseSchedule& m2d_schedule, const Condition& c,
                          Eigen::Index width, const CascadeOptions& options);

/// Upsamples `low` to 60 fps and refines it window by window. Windows of
/// `ssr_window` frames advance by half a window (the last one is aligned to
/// the end); overlaps are cross-faded with a linear ramp as a + r·(b − a),
/// which leaves agreeing windows untouched.
CascadeResult refine(const StageModel& ssr, const NoiseSchedule& ssr_schedule, const Condition& c,
                     const MotionSequence& low, const CascadeOptions& options);

CascadeResult run_cascade(const StageModel& m2d, const StageModel& ssr, const NoiseSchedule& m2d_schedule,
                          const NoiseSchedule& ssr_schedule, const Condition& c, Eigen::Index width,
                          const CascadeOptions& options);

/// Window start frames used by refine() for an output of `frames` frames.
std::vector<Eigen::Index> ssr_window_starts(Eigen::Index frames, Eigen::Index window);

/// The first 4·low_frames frames of a clip with its beats, as used for
/// evaluation against generated clips of the same length.
SyntheticClip evaluation_window(const SyntheticClip& clip, int low_frames);

/// Generated clips for the first `count` reference clips: each sample is
/// conditioned on its reference clip's music and carries its beats.
std::vector<EvalClip> generate_eval_set(const Denoiser& m2d, const Denoiser& ssr, const RunConfig& config,
                                        const ConditionFn& condition, const std::vector<SyntheticClip>& reference,
                                        int count, std::uint64_t seed);

struct SweepRow {
  int s = 0;
  EvalReport report;
};

/// Evaluates SSR inference at each augmentation level. Base-stage samples
/// are drawn once and shared by every level.
std::vector<SweepRow> sweep_augmentation(const Denoiser& m2d, const Denoiser& ssr, const RunConfig& config,
                                         const ConditionFn& condition, const std::vector<SyntheticClip>& reference,
                                         const std::vector<int>& levels, int count, std::uint64_t seed);

/// Rows: s, fid_k, fid_g, div_k, div_g, bas.
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string sweep_json(const std::vector<SweepRow>& rows);

/// One row per frame: time, kinetic_velocity, is_dance_beat, is_music_beat.
/// A beat marks the frame nearest to it.
std::string plot_csv(const MotionSequence& motion, const SkeletonSpec& skel, const BeatGrid& music);

}  // namespace diffdance
