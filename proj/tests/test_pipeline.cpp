#include <doctest.h>

#include <fstream>
#include <sstream>

#include "diffdance/core/error.hpp"
#include "diffdance/model/checkpoint.hpp"
#include "diffdance/motion/motion_io.hpp"
#include "diffdance/pipeline/cascade.hpp"
#include "diffdance/pipeline/commands.hpp"
#include "diffdance/pipeline/config.hpp"
#include "diffdance/pipeline/dataset.hpp"
#include "diffdance/pipeline/training.hpp"
#include "support.hpp"

using namespace diffdance;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.train_clips = 4;
  c.heldout_clips = 2;
  c.align_clips = 32;
  c.align_heldout_clips = 8;
  c.align_epochs = 2;
  c.align_batch = 8;
  c.m2d = {.layers = 1, .hidden = 16, .heads = 2, .dropout = 0.1, .max_frames = 60};
  c.ssr = {.layers = 1, .hidden = 16, .heads = 2, .dropout = 0.1, .max_frames = 120, .super_resolution = true};
  c.m2d_T = 50;
  c.ssr_T = 20;
  c.m2d_inference_steps = 5;
  c.ssr_inference_steps = 4;
  c.ssr_aug_max = 10;
  c.ssr_aug_infer = 5;
  c.m2d_steps = 4;
  c.ssr_steps = 2;
  c.batch = 2;
  c.eval_clips = 2;
  c.out = out.string();
  c.validate();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RowVector fake_condition(const Vector& audio) {
  RowVector c = RowVector::Zero(512);
  c.head(audio.size()) = audio.transpose();
  return c;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

}  // namespace

TEST_CASE("config text round trip and overrides") {
  RunConfig c;
  c.m2d.hidden = 64;
  c.guidance = 1.75;
  c.data_seed = 0xFFFFFFFFFFFFULL;
  c.out = "somewhere/else";
  const RunConfig back = RunConfig::parse(c.to_text());
  CHECK(back.to_map() == c.to_map());
  CHECK(back.m2d == c.m2d);
  CHECK(back.ssr.super_resolution);
  CHECK_FALSE(back.m2d.super_resolution);
  CHECK(back.m2d.frame_width == 57);

  const RunConfig o = RunConfig::from_map({{"guidance", "3"}, {"ssr.layers", "3"}}, back);
  CHECK(o.guidance == 3.0);
  CHECK(o.ssr.layers == 3);
  CHECK(o.m2d.hidden == 64);

  const RunConfig smpl = RunConfig::from_map({{"skeleton", "smpl24"}});
  CHECK(smpl.m2d.frame_width == 147);
  CHECK(smpl.ssr.frame_width == 147);

  CHECK_THROWS_AS(RunConfig::from_map({{"no_such_key", "1"}}), DomainError);
  CHECK_THROWS_AS(RunConfig::from_map({{"batch", "many"}}), DomainError);
  CHECK_THROWS_AS(RunConfig::from_map({{"guidance", "-1"}}), DomainError);
  CHECK_THROWS_AS(RunConfig::from_map({{"schedule", "sigmoid"}}), DomainError);
  CHECK_THROWS_AS(RunConfig::from_map({{"ssr_window", "122"}}), DomainError);

  const auto kv = parse_key_values("# comment\n a = 1 # trailing\n\nb=two words\n");
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "two words");
  try {
    parse_key_values("a = 1\nb = 2\na = 3\n");
    FAIL("duplicate key accepted");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_key_values("just words\n"), DomainError);

  const auto dir = support::temp_dir("config");
  c.save(dir / "c.txt");
  CHECK(RunConfig::load(dir / "c.txt").to_map() == c.to_map());
  fs::remove_all(dir);
}

TEST_CASE("gen-data is deterministic and splits are disjoint") {
  const auto a = support::temp_dir("gen_a"), b = support::temp_dir("gen_b");
  const GenDataSummary sa = cmd_gen_data(tiny_run(a));
  const GenDataSummary sb = cmd_gen_data(tiny_run(b));
  CHECK(sa.clips == 4 + 2 + 32 + 8);
  CHECK(sa.worst_beat_error <= 1.0);
  CHECK(sa.train_manifest == sb.train_manifest);
  const RunPaths pa{a}, pb{b};
  for (const auto& entry : fs::directory_iterator(pa.train_dir())) {
    CHECK(slurp(entry.path()) == slurp(pb.train_dir() / entry.path().filename()));
  }
  const auto train = load_clip_set(pa.train_dir());
  const auto heldout = load_clip_set(pa.heldout_dir());
  REQUIRE(train.size() == 4);
  REQUIRE(heldout.size() == 2);
  for (const auto& h : heldout) {
    for (const auto& t : train) CHECK_FALSE(h.motion == t.motion);
  }
  CHECK(load_clip_set(pa.align_dir()).front().motion.duration() == doctest::Approx(6.0));

  // Prefix property: a larger set starts with the smaller one.
  const auto more = generate_clips(6, 77, GeneratorRanges{}, SkeletonSpec::desk9());
  const auto fewer = generate_clips(3, 77, GeneratorRanges{}, SkeletonSpec::desk9());
  for (int i = 0; i < 3; ++i) CHECK(more[i].motion == fewer[i].motion);

  // Sidecars round-trip the generator params, feature and beats.
  const SyntheticClip side = parse_sidecar(sidecar_json(train[1]));
  CHECK(side.audio_feature == train[1].audio_feature);
  CHECK(side.beats.times == train[1].beats.times);
  CHECK(side.params.tempo_bpm == train[1].params.tempo_bpm);
  CHECK_THROWS_AS(parse_sidecar("{}"), FormatError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("oracle cascade reconstructs the ground truth exactly") {
  const SkeletonSpec skel = SkeletonSpec::desk9();
  const RunConfig cfg;
  const auto clips = generate_clips(3, 11, GeneratorRanges{}, skel);
  for (const SyntheticClip& clip : clips) {
    const SyntheticClip w = evaluation_window(clip, cfg.low_frames);
    REQUIRE(w.motion.length() == 240);
    const MotionSequence low = downsample(w.motion, 15.0);
    const OracleStage m2d(low.frames), ssr(w.motion.frames);
    const NoiseSchedule s_low = NoiseSchedule::build(cfg.m2d_T, ScheduleKind::Cosine);
    const NoiseSchedule s_high = NoiseSchedule::build(cfg.ssr_T, ScheduleKind::Cosine);
    for (bool stochastic : {false, true}) {
      CascadeOptions opt = cascade_options(cfg, 5);
      opt.stochastic = stochastic;
      const CascadeResult r = run_cascade(m2d, ssr, s_low, s_high, fake_condition(clip.audio_feature),
                                          skel.frame_width(), opt);
      CHECK(r.low.frames == low.frames);
      CHECK(r.output.fps == 60.0);
      CHECK(r.output.frames == w.motion.frames);
    }
  }
}

TEST_CASE("SSR windows cover the output") {
  CHECK(ssr_window_starts(240, 120) == std::vector<Eigen::Index>{0, 60, 120});
  CHECK(ssr_window_starts(120, 120) == std::vector<Eigen::Index>{0});
  CHECK(ssr_window_starts(250, 120) == std::vector<Eigen::Index>{0, 60, 120, 130});
  CHECK(ssr_window_starts(100, 120) == std::vector<Eigen::Index>{0});
  CHECK_THROWS_AS(ssr_window_starts(100, 1), DomainError);
}

TEST_CASE("training: dropout rate, resume determinism and logs") {
  const auto dir = support::temp_dir("train");
  RunConfig cfg = tiny_run(dir);
  cmd_gen_data(cfg);
  const auto clips = load_clip_set(RunPaths{dir}.train_dir());

  SUBCASE("condition dropout rate") {
    RunConfig c = cfg;
    c.batch = 16;
    const StageTrainer trainer(c, Stage::M2D, clips, fake_condition);
    Denoiser model = trainer.init_model(1);
    AdamState opt = AdamState::zeros_like(model.params());
    int dropped = 0, total = 0;
    for (int i = 0; i < 100; ++i) {
      const TrainLogRow row = trainer.step(model, opt);
      dropped += row.dropped;
      total += row.batch;
      CHECK(row.step == i + 1);
    }
    const double rate = static_cast<double>(dropped) / total;
    MESSAGE("observed dropout rate " << rate);
    CHECK(rate == doctest::Approx(0.10).epsilon(0.2));
  }

  SUBCASE("resume repeats the uninterrupted run bit for bit") {
    for (Stage stage : {Stage::M2D, Stage::SSR}) {
      RunConfig full = cfg;
      full.m2d_steps = full.ssr_steps = 4;
      const StageTrainer trainer(full, stage, clips, fake_condition);
      StageRunOptions o1;
      o1.checkpoint = dir / "full.ckpt";
      o1.log = dir / "full.csv";
      train_stage(full, trainer, o1);

      RunConfig half = full;
      half.m2d_steps = half.ssr_steps = 2;
      StageRunOptions o2;
      o2.checkpoint = dir / "split.ckpt";
      o2.log = dir / "split.csv";
      train_stage(half, StageTrainer(half, stage, clips, fake_condition), o2);
      o2.resume = true;
      train_stage(full, trainer, o2);

      CHECK(read_file_bytes(o1.checkpoint) == read_file_bytes(o2.checkpoint));
      CHECK(slurp(o1.log) == slurp(o2.log));
      const std::string log = slurp(o1.log);
      CHECK(log.rfind(train_log_header(), 0) == 0);
      CHECK(std::count(log.begin(), log.end(), '\n') == 5);

      const Checkpoint ck = load_checkpoint(o1.checkpoint);
      CHECK(ck.config.at("kind") == stage_name(stage));
      REQUIRE(ck.optimizer.has_value());
      CHECK(ck.optimizer->step == 4);
    }
  }

  SUBCASE("normalization statistics") {
    const auto [mean, std] = channel_stats(clips);
    CHECK(mean.size() == 57);
    CHECK(std.minCoeff() >= 1e-2);
    const StageTrainer trainer(cfg, Stage::SSR, clips, fake_condition);
    const Denoiser m = trainer.init_model(3);
    CHECK(m.norm_mean() == mean);
    CHECK(m.norm_std() == std);
    CHECK(m.config().super_resolution);
  }
  fs::remove_all(dir);
}

TEST_CASE("end-to-end commands on a tiny run") {
  const auto dir = support::temp_dir("e2e");
  const RunConfig cfg = tiny_run(dir);
  const RunPaths paths{dir};
  cmd_gen_data(cfg);
  const AlignSummary align = cmd_train_align(cfg);
  CHECK(align.recall_at1 >= 0.0);
  CHECK(align.tau > 0.0);
  CHECK(fs::exists(paths.align_checkpoint()));
  cmd_train_stage(cfg, Stage::M2D, false);
  cmd_train_stage(cfg, Stage::SSR, false);
  CHECK(fs::exists(paths.checkpoint(Stage::M2D)));
  CHECK(fs::exists(paths.log(Stage::SSR)));

  const auto heldout = load_clip_set(paths.heldout_dir());
  const MotionSequence a = cmd_sample(cfg, heldout[0], 9);
  CHECK(a.fps == 60.0);
  CHECK(a.length() == 4 * cfg.low_frames);
  CHECK(cmd_sample(cfg, heldout[0], 9) == a);
  CHECK_NOTHROW(a.validate(SkeletonSpec::desk9()));

  const fs::path gen = dir / "gen";
  cmd_sample_set(cfg, gen, 2, 3);
  const auto generated = load_clip_set(gen);
  REQUIRE(generated.size() == 2);

  // cmd_eval agrees with a direct library call on the same directories.
  const fs::path ref = dir / "ref";
  std::vector<SyntheticClip> windows;
  for (const auto& h : heldout) windows.push_back(evaluation_window(h, cfg.low_frames));
  write_clip_set(ref, windows, cfg.skeleton, 0);
  const EvalReport via_cmd = cmd_eval(gen, ref, SkeletonSpec::desk9());
  std::vector<EvalClip> g, r;
  for (const auto& c : generated) g.push_back({c.motion, c.beats});
  for (const auto& c : windows) r.push_back({c.motion, c.beats});
  const EvalReport direct = evaluate_suite(g, r, SkeletonSpec::desk9());
  CHECK(report_to_json(via_cmd) == report_to_json(direct));
  for (std::size_t i = 0; i < generated.size(); ++i) CHECK(generated[i].beats.times == windows[i].beats.times);

  // Plot data: one row per frame, columns agree with the library.
  const std::string csv = cmd_plot_data(gen / "clip_000.motseq", gen / "clip_000.json", SkeletonSpec::desk9());
  std::stringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "time,kinetic_velocity,is_dance_beat,is_music_beat");
  const Vector k = kinetic_velocity(generated[0].motion, SkeletonSpec::desk9());
  Eigen::Index rows = 0;
  int music_marks = 0, dance_marks = 0;
  while (std::getline(in, line)) {
    const auto cells = split(line, ',');
    REQUIRE(cells.size() == 4);
    CHECK(std::stod(cells[0]) == doctest::Approx(static_cast<double>(rows) / 60.0));
    CHECK(std::abs(std::stod(cells[1]) - k(rows)) <= 1e-12);
    dance_marks += std::stoi(cells[2]);
    music_marks += std::stoi(cells[3]);
    ++rows;
  }
  CHECK(rows == generated[0].motion.length());
  CHECK(music_marks == static_cast<int>(generated[0].beats.times.size()));
  CHECK(dance_marks == static_cast<int>(extract_dance_beats(generated[0].motion, SkeletonSpec::desk9()).times.size()));

  const std::vector<SweepRow> sweep = cmd_sweep_s(cfg, {0, 5}, 1);
  REQUIRE(sweep.size() == 2);
  CHECK(sweep[0].s == 0);
  CHECK(sweep[1].s == 5);
  CHECK(fs::exists(dir / "sweep_s.csv"));
  CHECK(slurp(dir / "sweep_s.csv").rfind("s,fid_k,fid_g,div_k,div_g,bas", 0) == 0);

  // A stage checkpoint from another schedule is rejected.
  RunConfig other = cfg;
  other.ssr_T = 30;
  CHECK_THROWS(cmd_sample(other, heldout[0], 9));
  fs::remove_all(dir);
}
