#include "diffdance/pipeline/dataset.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"
#include "diffdance/metrics/metrics.hpp"
#include "diffdance/motion/motion_io.hpp"

namespace diffdance {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string clip_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%03zu", i);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace

std::vector<SyntheticClip> generate_clips(int count, std::uint64_t seed, const GeneratorRanges& ranges,
                                          const SkeletonSpec& skel) {
  if (count < 0) throw DomainError("generate_clips: negative count");
  const Rng root(seed);
  std::vector<SyntheticClip> clips;
  clips.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = root.fork(static_cast<std::uint64_t>(i));
    clips.push_back(generate_synthetic_clip(sample_synthetic_params(rng, ranges), skel));
  }
  return clips;
}

std::string sidecar_json(const SyntheticClip& clip) {
  const SyntheticParams& p = clip.params;
  ordered_json j;
  j["params"] = {{"tempo_bpm", p.tempo_bpm}, {"duration_s", p.duration_s}, {"phase_s", p.phase_s},
                 {"genre", p.genre},         {"accents", p.accents},      {"seed", p.seed},
                 {"fps", p.fps}};
  j["audio_feature"] = std::vector<double>(clip.audio_feature.data(), clip.audio_feature.data() + clip.audio_feature.size());
  j["beats"] = {{"times", clip.beats.times}, {"duration", clip.beats.duration}};
  return j.dump(2);
}

SyntheticClip parse_sidecar(const std::string& text) {
  try {
    const json j = json::parse(text);
    SyntheticClip c;
    const json& p = j.at("params");
    c.params.tempo_bpm = p.at("tempo_bpm").get<double>();
    c.params.duration_s = p.at("duration_s").get<double>();
    c.params.phase_s = p.at("phase_s").get<double>();
    c.params.genre = p.at("genre").get<int>();
    c.params.accents = p.at("accents").get<std::array<double, 2>>();
    c.params.seed = p.at("seed").get<std::uint64_t>();
    c.params.fps = p.at("fps").get<double>();
    const auto f = j.at("audio_feature").get<std::vector<double>>();
    if (f.size() != static_cast<std::size_t>(kAudioFeatureDim)) throw FormatError("sidecar: audio feature length");
    c.audio_feature = Eigen::Map<const Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
    c.beats.times = j.at("beats").at("times").get<std::vector<double>>();
    c.beats.duration = j.at("beats").at("duration").get<double>();
    c.beats.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("sidecar: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("sidecar: ") + e.what());
  }
}

std::string write_clip_set(const fs::path& dir, const std::vector<SyntheticClip>& clips, const std::string& skeleton,
                           std::uint64_t seed) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["format"] = "diffdance-clips-1";
  manifest["skeleton"] = skeleton;
  manifest["seed"] = seed;
  manifest["clips"] = json::array();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string id = clip_id(i);
    save_motion(clips[i].motion, dir / (id + ".motseq"));
    write_text(dir / (id + ".json"), sidecar_json(clips[i]));
    manifest["clips"].push_back({{"id", id},
                                 {"motion", id + ".motseq"},
                                 {"sidecar", id + ".json"},
                                 {"seed", clips[i].params.seed},
                                 {"tempo_bpm", clips[i].params.tempo_bpm},
                                 {"frames", clips[i].motion.length()},
                                 {"fps", clips[i].motion.fps}});
  }
  const std::string text = manifest.dump(2) + "\n";
  write_text(dir / "manifest.json", text);
  return text;
}

std::vector<SyntheticClip> load_clip_set(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError("manifest: " + std::string(e.what()));
  }
  std::vector<SyntheticClip> clips;
  try {
    for (const json& entry : manifest.at("clips")) {
      SyntheticClip c = parse_sidecar(read_text(dir / entry.at("sidecar").get<std::string>()));
      c.motion = load_motion(dir / entry.at("motion").get<std::string>());
      clips.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest: " + std::string(e.what()));
  }
  return clips;
}

double beat_consistency_error(const SyntheticClip& clip, const SkeletonSpec& skel, int margin) {
  const BeatGrid dance = extract_dance_beats(clip.motion, skel);
  const double fps = clip.motion.fps;
  const double last = static_cast<double>(clip.motion.length() - 1);
  double worst = 0.0;
  for (double t : clip.beats.times) {
    const double frame = t * fps;
    if (frame < margin || frame > last - margin) continue;
    double best = std::numeric_limits<double>::infinity();
    for (double d : dance.times) best = std::min(best, std::abs(d * fps - frame));
    worst = std::max(worst, best);
  }
  return worst;
}

AlignmentPair alignment_pair(const SyntheticClip& clip) {
  const Eigen::Index frames = static_cast<Eigen::Index>(std::llround(kAlignSeconds * clip.motion.fps));
  if (clip.motion.length() < frames) throw DomainError("alignment_pair: clip shorter than 6 s");
  const SyntheticClip window = crop_clip(clip, 0, frames);
  return AlignmentPair{window.audio_feature, downsample(window.motion, kAlignFps)};
}

std::vector<SyntheticClip> generate_alignment_clips(int count, std::uint64_t seed, const SkeletonSpec& skel) {
  GeneratorRanges ranges;
  ranges.min_duration = kAlignSeconds;
  ranges.max_duration = kAlignSeconds;
  return generate_clips(count, seed, ranges, skel);
}

}  // namespace diffdance
