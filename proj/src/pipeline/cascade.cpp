#include "diffdance/pipeline/cascade.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"

namespace diffdance {

namespace {
constexpr double kLowFps = 15.0;
constexpr double kHighFps = 60.0;
constexpr int kUpFactor = 4;
}  // namespace

Matrix DenoiserStage::predict(const Matrix& x_t, int t, const Condition& c, const Matrix* x_low, int s,
                              Eigen::Index) const {
  if (x_low) return model_.predict_ssr(x_t, t, c, *x_low, s);
  return model_.predict(x_t, t, c);
}

Matrix OracleStage::predict(const Matrix& x_t, int, const Condition&, const Matrix*, int, Eigen::Index start) const {
  if (start < 0 || start + x_t.rows() > truth_.rows() || x_t.cols() != truth_.cols()) {
    throw ShapeError("oracle: request outside the ground-truth clip");
  }
  return truth_.middleRows(start, x_t.rows());
}

CascadeOptions cascade_options(const RunConfig& config, std::uint64_t seed) {
  CascadeOptions o;
  o.low_frames = config.low_frames;
  o.guidance = config.guidance;
  o.ssr_guidance = config.ssr_guidance;
  o.m2d_inference_steps = config.m2d_inference_steps;
  o.ssr_inference_steps = config.ssr_inference_steps;
  o.ssr_s = config.ssr_aug_infer;
  o.ssr_window = config.ssr_window;
  o.noise = config.reverse_noise_mode();
  o.seed = seed;
  return o;
}

MotionSequence sample_low(const StageModel& m2d, const NoiseSchedule& m2d_schedule, const Condition& c,
                          Eigen::Index width, const CascadeOptions& options) {
  SamplerConfig sc;
  sc.guidance_weight = options.guidance;
  sc.inference_steps = options.m2d_inference_steps;
  sc.seed = Rng(options.seed).fork(0).next_u64();
  sc.noise = options.noise;
  sc.stochastic = options.stochastic;
  if (options.seed_low) sc.seed_frames = m2d.normalize(*options.seed_low);
  const X0Model model = [&](const Matrix& x, int t, const Condition& cc) { return m2d.predict(x, t, cc, nullptr, 0, 0); };
  const Matrix x = sample_loop(model, c, options.low_frames, width, sc, m2d_schedule);
  MotionSequence low{kLowFps, m2d.denormalize(x)};
  // The seed prefix is restored in physical units so it survives the
  // normalize/denormalize round trip bit-exactly.
  if (options.seed_low) low.frames.topRows(options.seed_low->rows()) = *options.seed_low;
  return low;
}

std::vector<Eigen::Index> ssr_window_starts(Eigen::Index frames, Eigen::Index window) {
  if (window < 2) throw DomainError("ssr windows: window too short");
  if (frames <= window) return {0};
  const Eigen::Index hop = window / 2;
  std::vector<Eigen::Index> starts;
  for (Eigen::Index s = 0; s + window < frames; s += hop) starts.push_back(s);
  starts.push_back(frames - window);
  return starts;
}

CascadeResult refine(const StageModel& ssr, const NoiseSchedule& ssr_schedule, const Condition& c,
                     const MotionSequence& low, const CascadeOptions& options) {
  if (low.fps != kLowFps) throw DomainError("refine: base-stage output must be 15 fps");
  CascadeResult r;
  r.low = low;
  r.upsampled = upsample_linear(low, kHighFps);
  const Eigen::Index frames = r.upsampled.length();
  const Eigen::Index window = std::min<Eigen::Index>(options.ssr_window, frames);
  const Rng root = Rng(options.seed).fork(1);

  Matrix out(frames, r.upsampled.frames.cols());
  Eigen::Index filled = 0;
  const auto starts = ssr_window_starts(frames, window);
  for (std::size_t wi = 0; wi < starts.size(); ++wi) {
    const Eigen::Index start = starts[wi];
    Rng rng = root.fork(wi);
    const Matrix x_low = ssr.normalize(r.upsampled.frames.middleRows(start, window));
    const Matrix x_aug = options.stochastic ? conditioning_augment(x_low, options.ssr_s, ssr_schedule, rng) : x_low;
    SamplerConfig sc;
    sc.guidance_weight = options.ssr_guidance;
    sc.inference_steps = options.ssr_inference_steps;
    sc.seed = rng.next_u64();
    sc.noise = options.noise;
    sc.stochastic = options.stochastic;
    const X0Model model = [&](const Matrix& x, int t, const Condition& cc) {
      return ssr.predict(x, t, cc, &x_aug, options.ssr_s, start);
    };
    const Matrix win = ssr.denormalize(sample_loop(model, c, window, x_low.cols(), sc, ssr_schedule));

    const Eigen::Index overlap = filled - start;
    for (Eigen::Index i = 0; i < window; ++i) {
      const Eigen::Index row = start + i;
      if (i < overlap) {
        const double ramp = static_cast<double>(i + 1) / static_cast<double>(overlap + 1);
        out.row(row) = out.row(row) + ramp * (win.row(i) - out.row(row));
      } else {
        out.row(row) = win.row(i);
      }
    }
    filled = start + window;
  }
  r.output = MotionSequence{kHighFps, std::move(out)};
  return r;
}

CascadeResult run_cascade(const StageModel& m2d, const StageModel& ssr, const NoiseSchedule& m2d_schedule,
                          const NoiseSchedule& ssr_schedule, const Condition& c, Eigen::Index width,
                          const CascadeOptions& options) {
  return refine(ssr, ssr_schedule, c, sample_low(m2d, m2d_schedule, c, width, options), options);
}

SyntheticClip evaluation_window(const SyntheticClip& clip, int low_frames) {
  return crop_clip(clip, 0, static_cast<Eigen::Index>(kUpFactor) * low_frames);
}

namespace {

struct Schedules {
  NoiseSchedule m2d, ssr;
};

Schedules schedules(const RunConfig& config) {
  return {NoiseSchedule::build(config.m2d_T, config.schedule_kind()),
          NoiseSchedule::build(config.ssr_T, config.schedule_kind())};
}

std::optional<Matrix> seed_prefix(const RunConfig& config, const SyntheticClip& window) {
  const Eigen::Index n = static_cast<Eigen::Index>(std::llround(config.seed_seconds * kLowFps));
  if (n == 0) return std::nullopt;
  return downsample(window.motion, kLowFps).frames.topRows(n);
}

}  // namespace

namespace {

std::vector<std::vector<EvalClip>> sample_levels(const Denoiser& m2d, const Denoiser& ssr, const RunConfig& config,
                                                 const ConditionFn& condition,
                                                 const std::vector<SyntheticClip>& reference,
                                                 const std::vector<int>& levels, int count, std::uint64_t seed) {
  if (count < 1 || static_cast<std::size_t>(count) > reference.size()) {
    throw DomainError("evaluation: clip count outside [1, reference size]");
  }
  const Schedules sched = schedules(config);
  const DenoiserStage m2d_stage(m2d), ssr_stage(ssr);
  const Rng root(seed);
  std::vector<std::vector<EvalClip>> out(levels.size());
  for (int i = 0; i < count; ++i) {
    const SyntheticClip window = evaluation_window(reference[static_cast<std::size_t>(i)], config.low_frames);
    const Condition c = condition(window.audio_feature);
    CascadeOptions opt = cascade_options(config, root.fork(static_cast<std::uint64_t>(i)).next_u64());
    opt.seed_low = seed_prefix(config, window);
    const MotionSequence low = sample_low(m2d_stage, sched.m2d, c, m2d.config().frame_width, opt);
    for (std::size_t li = 0; li < levels.size(); ++li) {
      opt.ssr_s = levels[li];
      out[li].push_back(EvalClip{refine(ssr_stage, sched.ssr, c, low, opt).output, window.beats});
    }
  }
  return out;
}

}  // namespace

std::vector<EvalClip> generate_eval_set(const Denoiser& m2d, const Denoiser& ssr, const RunConfig& config,
                                        const ConditionFn& condition, const std::vector<SyntheticClip>& reference,
                                        int count, std::uint64_t seed) {
  return sample_levels(m2d, ssr, config, condition, reference, {config.ssr_aug_infer}, count, seed).front();
}

std::vector<SweepRow> sweep_augmentation(const Denoiser& m2d, const Denoiser& ssr, const RunConfig& config,
                                         const ConditionFn& condition, const std::vector<SyntheticClip>& reference,
                                         const std::vector<int>& levels, int count, std::uint64_t seed) {
  const SkeletonSpec skel = SkeletonSpec::by_name(config.skeleton);
  const auto generated = sample_levels(m2d, ssr, config, condition, reference, levels, count, seed);
  std::vector<EvalClip> ref;
  for (int i = 0; i < count; ++i) {
    const SyntheticClip w = evaluation_window(reference[static_cast<std::size_t>(i)], config.low_frames);
    ref.push_back(EvalClip{w.motion, w.beats});
  }
  std::vector<SweepRow> rows;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    rows.push_back(SweepRow{levels[li], evaluate_suite(generated[li], ref, skel)});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "s,fid_k,fid_g,div_k,div_g,bas\n";
  char buf[256];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.s, r.report.fid_k, r.report.fid_g,
                  r.report.div_k, r.report.div_g, r.report.bas);
    out += buf;
  }
  return out;
}

std::string sweep_json(const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const SweepRow& r : rows) {
    j.push_back({{"s", r.s},
                 {"fid_k", r.report.fid_k},
                 {"fid_g", r.report.fid_g},
                 {"div_k", r.report.div_k},
                 {"div_g", r.report.div_g},
                 {"bas", r.report.bas},
                 {"clips", r.report.clips}});
  }
  return j.dump(2);
}

std::string plot_csv(const MotionSequence& motion, const SkeletonSpec& skel, const BeatGrid& music) {
  const Vector k = kinetic_velocity(motion, skel);
  const Eigen::Index n = motion.length();
  std::vector<int> dance_flag(static_cast<std::size_t>(n), 0), music_flag(static_cast<std::size_t>(n), 0);
  auto mark = [&](std::vector<int>& flags, double frame) {
    const Eigen::Index i = static_cast<Eigen::Index>(std::llround(frame));
    if (i >= 0 && i < n) flags[static_cast<std::size_t>(i)] = 1;
  };
  for (double f : local_minima(k)) mark(dance_flag, f);
  for (double t : music.times) mark(music_flag, t * motion.fps);
  std::string out = "time,kinetic_velocity,is_dance_beat,is_music_beat\n";
  char buf[128];
  for (Eigen::Index i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%d\n", static_cast<double>(i) / motion.fps, k(i),
                  dance_flag[static_cast<std::size_t>(i)], music_flag[static_cast<std::size_t>(i)]);
    out += buf;
  }
  return out;
}

}  // namespace diffdance
