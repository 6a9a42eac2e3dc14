#include "diffdance/pipeline/commands.hpp"

#include <fstream>
#include <memory>
#include <ostream>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"
#include "diffdance/model/checkpoint.hpp"
#include "diffdance/motion/motion_io.hpp"
#include "diffdance/pipeline/dataset.hpp"

namespace diffdance {

namespace fs = std::filesystem;

namespace {

// Seed streams of the four clip sets.
constexpr std::uint64_t kTrainStream = 1, kHeldoutStream = 2, kAlignStream = 3, kAlignHeldoutStream = 4;

std::uint64_t set_seed(const RunConfig& c, std::uint64_t stream) { return mix64(c.data_seed * 0x9E37ULL + stream); }

GeneratorRanges ranges_of(const RunConfig& c) {
  GeneratorRanges r;
  r.min_duration = c.min_duration;
  r.max_duration = c.max_duration;
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<AlignmentPair> pairs_of(const std::vector<SyntheticClip>& clips) {
  std::vector<AlignmentPair> out;
  for (const SyntheticClip& c : clips) out.push_back(alignment_pair(c));
  return out;
}

Denoiser load_stage(const RunConfig& config, Stage stage) {
  const Checkpoint ckpt = load_checkpoint(RunPaths{config.out_path()}.checkpoint(stage));
  if (ckpt.config.at("kind") != stage_name(stage)) throw FormatError("checkpoint kind mismatch");
  const auto expected = stage_checkpoint_keys(config, stage);
  for (const auto& [k, v] : expected) {
    auto it = ckpt.config.find(k);
    if (it == ckpt.config.end() || it->second != v) {
      throw FormatError(std::string(stage_name(stage)) + " checkpoint does not match the config (" + k + ")");
    }
  }
  Denoiser model = denoiser_from_checkpoint(ckpt);
  const DenoiserConfig& want = stage == Stage::M2D ? config.m2d : config.ssr;
  if (!(model.config() == want)) {
    throw FormatError(std::string(stage_name(stage)) + " checkpoint architecture does not match the config");
  }
  return model;
}

}  // namespace

GenDataSummary cmd_gen_data(const RunConfig& config) {
  config.validate();
  const SkeletonSpec skel = SkeletonSpec::by_name(config.skeleton);
  const RunPaths paths{config.out_path()};
  fs::create_directories(paths.root);
  config.save(paths.config_file());

  GenDataSummary s;
  const auto train = generate_clips(config.train_clips, set_seed(config, kTrainStream), ranges_of(config), skel);
  const auto heldout = generate_clips(config.heldout_clips, set_seed(config, kHeldoutStream), ranges_of(config), skel);
  const auto align = generate_alignment_clips(config.align_clips, set_seed(config, kAlignStream), skel);
  const auto align_heldout =
      generate_alignment_clips(config.align_heldout_clips, set_seed(config, kAlignHeldoutStream), skel);
  for (const auto* set : {&train, &heldout}) {
    for (const SyntheticClip& c : *set) {
      const double err = beat_consistency_error(c, skel);
      if (err > 1.0) throw DomainError("gen-data: clip beats inconsistent by " + std::to_string(err) + " frames");
      s.worst_beat_error = std::max(s.worst_beat_error, err);
    }
  }
  s.train_manifest = write_clip_set(paths.train_dir(), train, config.skeleton, set_seed(config, kTrainStream));
  write_clip_set(paths.heldout_dir(), heldout, config.skeleton, set_seed(config, kHeldoutStream));
  write_clip_set(paths.align_dir(), align, config.skeleton, set_seed(config, kAlignStream));
  write_clip_set(paths.align_heldout_dir(), align_heldout, config.skeleton, set_seed(config, kAlignHeldoutStream));
  s.clips = static_cast<int>(train.size() + heldout.size() + align.size() + align_heldout.size());
  return s;
}

AlignSummary cmd_train_align(const RunConfig& config, std::ostream* progress) {
  const RunPaths paths{config.out_path()};
  const SkeletonSpec skel = SkeletonSpec::by_name(config.skeleton);
  const auto train = pairs_of(load_clip_set(paths.align_dir()));
  const auto heldout = pairs_of(load_clip_set(paths.align_heldout_dir()));
  const MusicEncoder music(config.music_encoder_seed);
  const MotionEncoder motion(skel.frame_width(), config.motion_encoder_seed);

  AlignmentTrainConfig tc;
  tc.epochs = config.align_epochs;
  tc.batch = config.align_batch;
  tc.lr = config.align_lr;
  tc.seed = config.seed;
  const AlignmentResult result = train_alignment(music, motion, train, tc);

  std::ofstream log(paths.align_log());
  log << "epoch,loss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) log << e + 1 << "," << result.epoch_loss[e] << "\n";
  save_checkpoint(adapter_checkpoint(result.adapter, music, motion), paths.align_checkpoint());

  AlignSummary s;
  s.recall_at1 = retrieval_recall_at1(music, motion, result.adapter, heldout);
  s.final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
  s.tau = result.adapter.tau();
  if (progress) *progress << "align: final loss " << s.final_loss << ", held-out recall@1 " << s.recall_at1 << "\n";
  return s;
}

ConditionFn load_condition(const RunConfig& config) {
  const Checkpoint ckpt = load_checkpoint(RunPaths{config.out_path()}.align_checkpoint());
  auto adapter = std::make_shared<Adapter>(adapter_from_checkpoint(ckpt));
  auto music = std::make_shared<MusicEncoder>(music_encoder_from_checkpoint(ckpt));
  return [adapter, music](const Vector& f) { return condition_embedding(*music, *adapter, f); };
}

Denoiser cmd_train_stage(const RunConfig& config, Stage stage, bool resume, std::ostream* progress) {
  const RunPaths paths{config.out_path()};
  const StageTrainer trainer(config, stage, load_clip_set(paths.train_dir()), load_condition(config));
  StageRunOptions opt;
  opt.checkpoint = paths.checkpoint(stage);
  opt.log = paths.log(stage);
  opt.resume = resume;
  opt.progress = progress;
  return train_stage(config, trainer, opt);
}

MotionSequence cmd_sample(const RunConfig& config, const SyntheticClip& music, std::uint64_t seed) {
  const Denoiser m2d = load_stage(config, Stage::M2D);
  const Denoiser ssr = load_stage(config, Stage::SSR);
  return generate_eval_set(m2d, ssr, config, load_condition(config), {music}, 1, seed).front().motion;
}

void cmd_sample_set(const RunConfig& config, const fs::path& dir, int count, std::uint64_t seed) {
  const RunPaths paths{config.out_path()};
  const auto reference = load_clip_set(paths.heldout_dir());
  const Denoiser m2d = load_stage(config, Stage::M2D);
  const Denoiser ssr = load_stage(config, Stage::SSR);
  const auto generated = generate_eval_set(m2d, ssr, config, load_condition(config), reference, count, seed);
  std::vector<SyntheticClip> clips;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    SyntheticClip c = evaluation_window(reference[i], config.low_frames);
    c.motion = generated[i].motion;
    clips.push_back(std::move(c));
  }
  write_clip_set(dir, clips, config.skeleton, seed);
}

EvalReport cmd_eval(const fs::path& generated_dir, const fs::path& reference_dir, const SkeletonSpec& skel) {
  auto to_eval = [](const std::vector<SyntheticClip>& clips) {
    std::vector<EvalClip> out;
    for (const SyntheticClip& c : clips) out.push_back(EvalClip{c.motion, c.beats});
    return out;
  };
  return evaluate_suite(to_eval(load_clip_set(generated_dir)), to_eval(load_clip_set(reference_dir)), skel);
}

std::string cmd_plot_data(const fs::path& motion, const fs::path& sidecar, const SkeletonSpec& skel) {
  const auto bytes = read_file_bytes(sidecar);
  const SyntheticClip side = parse_sidecar(std::string(bytes.begin(), bytes.end()));
  return plot_csv(load_motion(motion), skel, side.beats);
}

std::vector<SweepRow> cmd_sweep_s(const RunConfig& config, const std::vector<int>& levels, std::uint64_t seed) {
  const RunPaths paths{config.out_path()};
  const auto reference = load_clip_set(paths.heldout_dir());
  const Denoiser m2d = load_stage(config, Stage::M2D);
  const Denoiser ssr = load_stage(config, Stage::SSR);
  const int count = std::min<int>(config.eval_clips, static_cast<int>(reference.size()));
  auto rows = sweep_augmentation(m2d, ssr, config, load_condition(config), reference, levels, count, seed);
  write_text(paths.root / "sweep_s.csv", sweep_csv(rows));
  write_text(paths.root / "sweep_s.json", sweep_json(rows));
  return rows;
}

}  // namespace diffdance
