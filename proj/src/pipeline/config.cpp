#include "diffdance/pipeline/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "diffdance/core/error.hpp"
#include "diffdance/motion/motion_io.hpp"
#include "diffdance/motion/skeleton.hpp"

namespace diffdance {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}
std::string format(int v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(const std::string& v) { return v; }

template <typename T>
void parse_number(const std::string& key, const std::string& text, T& out) {
  T v{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw DomainError("config: cannot parse " + key + " = '" + text + "'");
  }
  out = v;
}
void parse_value(const std::string& key, const std::string& text, double& out) { parse_number(key, text, out); }
void parse_value(const std::string& key, const std::string& text, int& out) { parse_number(key, text, out); }
void parse_value(const std::string& key, const std::string& text, std::uint64_t& out) {
  parse_number(key, text, out);
}
void parse_value(const std::string&, const std::string& text, std::string& out) { out = text; }

// Calls f(key, field) for every serialized field.
template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("skeleton", c.skeleton);
  f("data_seed", c.data_seed);
  f("train_clips", c.train_clips);
  f("heldout_clips", c.heldout_clips);
  f("align_clips", c.align_clips);
  f("align_heldout_clips", c.align_heldout_clips);
  f("min_duration", c.min_duration);
  f("max_duration", c.max_duration);
  f("align_epochs", c.align_epochs);
  f("align_batch", c.align_batch);
  f("align_lr", c.align_lr);
  f("music_encoder_seed", c.music_encoder_seed);
  f("motion_encoder_seed", c.motion_encoder_seed);
  f("schedule", c.schedule);
  f("m2d_T", c.m2d_T);
  f("ssr_T", c.ssr_T);
  f("m2d_inference_steps", c.m2d_inference_steps);
  f("ssr_inference_steps", c.ssr_inference_steps);
  for (auto [prefix, d] : {std::pair{"m2d.", &c.m2d}, std::pair{"ssr.", &c.ssr}}) {
    const std::string p = prefix;
    f(p + "layers", d->layers);
    f(p + "hidden", d->hidden);
    f(p + "heads", d->heads);
    f(p + "dropout", d->dropout);
    f(p + "max_frames", d->max_frames);
  }
  f("lambda1", c.weights.lambda1);
  f("lambda2", c.weights.lambda2);
  f("lambda3", c.weights.lambda3);
  f("alpha", c.weights.alpha);
  f("cond_dropout", c.cond_dropout);
  f("guidance", c.guidance);
  f("ssr_guidance", c.ssr_guidance);
  f("ssr_aug_max", c.ssr_aug_max);
  f("ssr_aug_infer", c.ssr_aug_infer);
  f("reverse_noise", c.reverse_noise);
  f("low_frames", c.low_frames);
  f("ssr_window", c.ssr_window);
  f("m2d_steps", c.m2d_steps);
  f("ssr_steps", c.ssr_steps);
  f("batch", c.batch);
  f("lr", c.lr);
  f("weight_decay", c.weight_decay);
  f("log_every", c.log_every);
  f("checkpoint_every", c.checkpoint_every);
  f("seed_seconds", c.seed_seconds);
  f("eval_clips", c.eval_clips);
  f("seed", c.seed);
  f("out", c.out);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DomainError("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw DomainError("config line " + std::to_string(number) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw DomainError("config line " + std::to_string(number) + ": duplicate key " + key);
    }
  }
  return kv;
}

void RunConfig::validate() const {
  SkeletonSpec::by_name(skeleton);
  parse_schedule_kind(schedule);
  reverse_noise_mode();
  weights.validate();
  if (!(guidance >= 0.0) || !(ssr_guidance >= 0.0)) throw DomainError("config: guidance weights must be >= 0");
  if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) throw DomainError("config: cond_dropout must be in [0, 1]");
  if (train_clips < 2 || heldout_clips < 1) throw DomainError("config: need >= 2 training clips and 1 held-out clip");
  if (align_clips < 2 || align_heldout_clips < 2) throw DomainError("config: need >= 2 alignment clips per split");
  if (!(min_duration >= 4.0 && max_duration <= 20.0 && min_duration <= max_duration)) {
    throw DomainError("config: durations must satisfy 4 <= min <= max <= 20");
  }
  if (m2d_T < 2 || ssr_T < 2) throw DomainError("config: T must be >= 2");
  if (m2d_inference_steps < 1 || m2d_inference_steps > m2d_T || ssr_inference_steps < 1 ||
      ssr_inference_steps > ssr_T) {
    throw DomainError("config: inference steps must be in [1, T]");
  }
  if (ssr_aug_max < 0 || ssr_aug_max > ssr_T || ssr_aug_infer < 0 || ssr_aug_infer > ssr_T) {
    throw DomainError("config: augmentation steps must be in [0, ssr_T]");
  }
  if (low_frames < 2 || low_frames > m2d.max_frames) throw DomainError("config: low_frames must fit m2d.max_frames");
  if (ssr_window < 4 || ssr_window % 4 != 0 || ssr_window > ssr.max_frames) {
    throw DomainError("config: ssr_window must be a multiple of 4 that fits ssr.max_frames");
  }
  if (4.0 * low_frames / 60.0 > min_duration + 1e-9) throw DomainError("config: low_frames longer than the shortest clip");
  if (ssr_window > 4 * low_frames) throw DomainError("config: ssr_window longer than the cascade output");
  if (m2d_steps < 0 || ssr_steps < 0 || batch < 1 || align_epochs < 0 || align_batch < 2) {
    throw DomainError("config: step counts must be >= 0 and batches positive");
  }
  if (!(lr > 0.0) || !(align_lr > 0.0) || !(weight_decay >= 0.0)) throw DomainError("config: bad learning rate");
  if (log_every < 1 || checkpoint_every < 0) throw DomainError("config: log_every >= 1, checkpoint_every >= 0");
  if (!(seed_seconds >= 0.0) || seed_seconds * 15.0 > low_frames) throw DomainError("config: seed_seconds too long");
  if (eval_clips < 1) throw DomainError("config: eval_clips must be >= 1");
  m2d.validate();
  ssr.validate();
}

ReverseNoise RunConfig::reverse_noise_mode() const {
  if (reverse_noise == "beta") return ReverseNoise::Beta;
  if (reverse_noise == "posterior") return ReverseNoise::PosteriorStd;
  throw DomainError("config: reverse_noise must be 'beta' or 'posterior'");
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> kv;
  visit_fields(*this, [&](const std::string& key, const auto& field) { kv[key] = format(field); });
  return kv;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv, const RunConfig& base) {
  RunConfig c = base;
  std::map<std::string, std::string> remaining = kv;
  visit_fields(c, [&](const std::string& key, auto& field) {
    auto it = remaining.find(key);
    if (it == remaining.end()) return;
    parse_value(key, it->second, field);
    remaining.erase(it);
  });
  if (!remaining.empty()) throw DomainError("config: unknown key " + remaining.begin()->first);
  const int width = SkeletonSpec::by_name(c.skeleton).frame_width();
  c.m2d.frame_width = width;
  c.ssr.frame_width = width;
  c.m2d.cond_dim = 512;
  c.ssr.cond_dim = 512;
  c.m2d.super_resolution = false;
  c.ssr.super_resolution = true;
  c.validate();
  return c;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) { return from_map(kv, RunConfig{}); }
RunConfig RunConfig::parse(const std::string& text) { return parse(text, RunConfig{}); }
RunConfig RunConfig::load(const std::filesystem::path& path) { return load(path, RunConfig{}); }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text, const RunConfig& base) {
  return from_map(parse_key_values(text), base);
}

RunConfig RunConfig::load(const std::filesystem::path& path, const RunConfig& base) {
  const auto bytes = read_file_bytes(path);
  return parse(std::string(bytes.begin(), bytes.end()), base);
}

void RunConfig::save(const std::filesystem::path& path) const {
  const std::string text = to_text();
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace diffdance
