#include "diffdance/pipeline/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"
#include "diffdance/diffusion/sampler.hpp"
#include "diffdance/model/checkpoint.hpp"

namespace diffdance {

namespace {
constexpr double kLowFps = 15.0;
constexpr double kHighFps = 60.0;
constexpr int kUpFactor = 4;

std::uint64_t stage_salt(Stage s) { return s == Stage::M2D ? 0x6D3264ULL : 0x737372ULL; }
}  // namespace

const char* stage_name(Stage stage) { return stage == Stage::M2D ? "m2d" : "ssr"; }

std::string train_log_header() { return "step,simple,pos_all,pos_key,rot_key,lambda_t,total,dropped,batch"; }

std::string train_log_line(const TrainLogRow& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d", static_cast<long long>(r.step),
                r.loss.simple, r.loss.pos_all, r.loss.pos_key, r.loss.rot_key, r.loss.lambda_t, r.loss.total,
                r.dropped, r.batch);
  return buf;
}

std::pair<RowVector, RowVector> channel_stats(const std::vector<SyntheticClip>& clips) {
  if (clips.empty()) throw DomainError("channel_stats: no clips");
  const Eigen::Index w = clips.front().motion.frames.cols();
  RowVector sum = RowVector::Zero(w), sq = RowVector::Zero(w);
  double n = 0.0;
  for (const SyntheticClip& c : clips) {
    sum += c.motion.frames.colwise().sum();
    sq += c.motion.frames.colwise().squaredNorm();
    n += static_cast<double>(c.motion.length());
  }
  const RowVector mean = sum / n;
  RowVector std = (sq / n - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  std = std.cwiseMax(1e-2);
  return {mean, std};
}

StageTrainer::StageTrainer(const RunConfig& config, Stage stage, std::vector<SyntheticClip> clips,
                           ConditionFn condition)
    : config_(config),
      stage_(stage),
      skel_(SkeletonSpec::by_name(config.skeleton)),
      clips_(std::move(clips)),
      condition_(std::move(condition)),
      schedule_(NoiseSchedule::build(stage == Stage::M2D ? config.m2d_T : config.ssr_T, config.schedule_kind())) {
  config_.validate();
  if (clips_.empty()) throw DomainError("StageTrainer: empty dataset");
  const Eigen::Index need = stage == Stage::M2D ? kUpFactor * config.low_frames : config.ssr_window;
  for (const SyntheticClip& c : clips_) {
    c.motion.validate(skel_);
    if (c.motion.fps != kHighFps) throw DomainError("StageTrainer: training clips must be 60 fps");
    if (c.motion.length() < need) throw DomainError("StageTrainer: clip shorter than the training window");
    MotionSequence low = downsample(c.motion, kLowFps);
    if (stage == Stage::SSR) upsampled_.push_back(upsample_linear(low, kHighFps).frames);
    low_.push_back(std::move(low.frames));
  }
  cond_cache_.resize(clips_.size());
}

Denoiser StageTrainer::init_model(std::uint64_t seed) const {
  Denoiser model(stage_ == Stage::M2D ? config_.m2d : config_.ssr, seed);
  const auto [mean, std] = channel_stats(clips_);
  model.set_normalization(mean, std);
  return model;
}

const RowVector& StageTrainer::condition_at(std::size_t clip, Eigen::Index start60) const {
  auto& cache = cond_cache_[clip];
  auto it = cache.find(start60);
  if (it == cache.end()) {
    const Vector f = audio_feature(clips_[clip].params, static_cast<double>(start60) / kHighFps);
    it = cache.emplace(start60, condition_(f)).first;
  }
  return it->second;
}

TrainLogRow StageTrainer::step(Denoiser& model, AdamState& opt) const {
  const std::int64_t index = opt.step + 1;
  Rng rng = Rng(config_.seed ^ stage_salt(stage_)).fork(static_cast<std::uint64_t>(index));
  const int T = schedule_.steps();
  const double fps = stage_ == Stage::M2D ? kLowFps : kHighFps;
  const RowVector mean = model.norm_mean(), std = model.norm_std();

  TrainLogRow row;
  row.step = index;
  row.batch = config_.batch;
  try {
    Tape tape;
    const std::vector<Var> bound = model.params().bind(tape);
    std::vector<Var> losses;
    double lambda_sum = 0.0;
    for (int b = 0; b < config_.batch; ++b) {
      const std::size_t k = static_cast<std::size_t>(rng.below(clips_.size()));
      Matrix x0_phys, low_phys;
      Eigen::Index start60 = 0;
      if (stage_ == Stage::M2D) {
        const Eigen::Index w = config_.low_frames;
        const Eigen::Index start = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(low_[k].rows() - w + 1)));
        x0_phys = low_[k].middleRows(start, w);
        start60 = kUpFactor * start;
      } else {
        const Eigen::Index w = config_.ssr_window;
        const Eigen::Index slots = (clips_[k].motion.length() - w) / kUpFactor + 1;
        start60 = kUpFactor * static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(slots)));
        x0_phys = clips_[k].motion.frames.middleRows(start60, w);
        low_phys = upsampled_[k].middleRows(start60, w);
      }
      const Condition c = condition_dropout(condition_at(k, start60), config_.cond_dropout, rng);
      if (!c) ++row.dropped;
      const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
      const Matrix x0 = model.normalize(x0_phys);
      const Matrix x_t = q_sample(x0, t, rng.normal_matrix(x0.rows(), x0.cols()), schedule_);
      Rng dropout_rng = rng.fork(static_cast<std::uint64_t>(b));
      Var pred;
      if (stage_ == Stage::M2D) {
        pred = model.forward(tape, bound, x_t, t, c, nullptr, 0, &dropout_rng);
      } else {
        const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(config_.ssr_aug_max + 1)));
        const Matrix x_low = conditioning_augment(model.normalize(low_phys), s, schedule_, rng);
        pred = model.forward(tape, bound, x_t, t, c, &x_low, s, &dropout_rng);
      }
      loss::Terms terms = loss::total(tape, pred, x0, t, T, config_.weights, skel_, fps, mean, std);
      losses.push_back(terms.total);
      row.loss.simple += terms.values.simple;
      row.loss.pos_all += terms.values.pos_all;
      row.loss.pos_key += terms.values.pos_key;
      row.loss.rot_key += terms.values.rot_key;
      lambda_sum += terms.values.lambda_t;
    }
    const double inv = 1.0 / static_cast<double>(config_.batch);
    Var total = ad::scale(ad::sum(ad::concat_rows(losses)), inv);
    row.loss.simple *= inv;
    row.loss.pos_all *= inv;
    row.loss.pos_key *= inv;
    row.loss.rot_key *= inv;
    row.loss.lambda_t = lambda_sum * inv;
    row.loss.total = total.scalar();
    if (!std::isfinite(row.loss.total)) throw NumericError("non-finite loss");
    tape.backward(total);
    AdamConfig adam;
    adam.lr = config_.lr;
    adam.weight_decay = config_.weight_decay;
    adam_step(model.params(), model.params().gradients(tape, bound), opt, adam);
  } catch (const NumericError& e) {
    throw NumericError(std::string(stage_name(stage_)) + " training step " + std::to_string(index) + ": " + e.what());
  }
  return row;
}

std::map<std::string, std::string> stage_checkpoint_keys(const RunConfig& config, Stage stage) {
  return {{"schedule", config.schedule},
          {"T", std::to_string(stage == Stage::M2D ? config.m2d_T : config.ssr_T)},
          {"skeleton", config.skeleton},
          {"fps", stage == Stage::M2D ? "15" : "60"}};
}

Denoiser train_stage(const RunConfig& config, const StageTrainer& trainer, const StageRunOptions& options) {
  const Stage stage = trainer.stage();
  const int target = stage == Stage::M2D ? config.m2d_steps : config.ssr_steps;
  std::optional<Denoiser> model;
  AdamState opt;
  if (options.resume) {
    Checkpoint ckpt = load_checkpoint(options.checkpoint);
    if (!ckpt.optimizer) throw FormatError("resume: checkpoint has no optimizer state");
    if (ckpt.config.at("kind") != stage_name(stage)) throw FormatError("resume: checkpoint is for another stage");
    model.emplace(denoiser_from_checkpoint(ckpt));
    opt = *ckpt.optimizer;
  } else {
    model.emplace(trainer.init_model(config.seed ^ 0x1D17ULL));
    opt = AdamState::zeros_like(model->params());
  }

  if (!options.checkpoint.parent_path().empty()) std::filesystem::create_directories(options.checkpoint.parent_path());
  std::ofstream log;
  if (!options.log.empty()) {
    const bool append = options.resume && std::filesystem::exists(options.log);
    log.open(options.log, append ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open log " + options.log.string());
    if (!append) log << train_log_header() << "\n";
  }
  const auto keys = stage_checkpoint_keys(config, stage);
  auto save = [&] { save_checkpoint(denoiser_checkpoint(*model, keys, opt), options.checkpoint); };

  while (opt.step < target) {
    const TrainLogRow row = trainer.step(*model, opt);
    if (log && (row.step % config.log_every == 0 || row.step == target)) log << train_log_line(row) << "\n";
    if (options.progress && (row.step % 100 == 0 || row.step == target)) {
      *options.progress << stage_name(stage) << " step " << row.step << "/" << target << " loss " << row.loss.total
                        << "\n";
    }
    if (config.checkpoint_every > 0 && row.step % config.checkpoint_every == 0) save();
  }
  save();
  return std::move(*model);
}

}  // namespace diffdance
