#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "diffdance/align/alignment.hpp"
#include "diffdance/metrics/metrics.hpp"
#include "diffdance/pipeline/cascade.hpp"
#include "diffdance/pipeline/config.hpp"
#include "diffdance/pipeline/training.hpp"

namespace diffdance {

/// Run directory layout under config.out.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path train_dir() const { return root / "data" / "train"; }
  std::filesystem::path heldout_dir() const { return root / "data" / "heldout"; }
  std::filesystem::path align_dir() const { return root / "data" / "align"; }
  std::filesystem::path align_heldout_dir() const { return root / "data" / "align_heldout"; }
  std::filesystem::path align_checkpoint() const { return root / "align.ckpt"; }
  std::filesystem::path align_log() const { return root / "align_log.csv"; }
  std::filesystem::path checkpoint(Stage s) const { return root / (std::string(stage_name(s)) + ".ckpt"); }
  std::filesystem::path log(Stage s) const { return root / (std::string(stage_name(s)) + "_log.csv"); }
  std::filesystem::path samples_dir() const { return root / "samples"; }
  std::filesystem::path config_file() const { return root / "config.txt"; }
};

struct GenDataSummary {
  int clips = 0;
  double worst_beat_error = 0.0;  ///< frames, over all training and held-out clips
  std::string train_manifest;
};

/// Writes the four clip sets and the resolved config. Train and held-out
/// clips come from disjoint seed streams; every clip is checked for beat
/// consistency and a clip off by more than one frame throws DomainError.
GenDataSummary cmd_gen_data(const RunConfig& config);

struct AlignSummary {
  double recall_at1 = 0.0;
  double final_loss = 0.0;
  double tau = 0.0;
};

AlignSummary cmd_train_align(const RunConfig& config, std::ostream* progress = nullptr);

/// Condition function backed by the run's adapter checkpoint.
ConditionFn load_condition(const RunConfig& config);

Denoiser cmd_train_stage(const RunConfig& config, Stage stage, bool resume, std::ostream* progress = nullptr);

/// Samples one clip conditioned on `music` (its first 4·low_frames frames
/// define the evaluation window and, with seed_seconds > 0, the seed prefix).
MotionSequence cmd_sample(const RunConfig& config, const SyntheticClip& music, std::uint64_t seed);

/// Samples for the first `count` held-out clips into `dir` using the clip-set
/// layout, sidecars carrying each music window's beats.
void cmd_sample_set(const RunConfig& config, const std::filesystem::path& dir, int count, std::uint64_t seed);

EvalReport cmd_eval(const std::filesystem::path& generated_dir, const std::filesystem::path& reference_dir,
                    const SkeletonSpec& skel);

std::string cmd_plot_data(const std::filesystem::path& motion, const std::filesystem::path& sidecar,
                          const SkeletonSpec& skel);

std::vector<SweepRow> cmd_sweep_s(const RunConfig& config, const std::vector<int>& levels, std::uint64_t seed);

}  // namespace diffdance
