#include "diffdance/motion/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"
#include "diffdance/motion/rotation.hpp"

namespace diffdance {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap(double x, double period) {
  double r = std::fmod(x, period);
  if (r < 0.0) r += period;
  return r;
}

/// Swing profile: passes through the beat extremes with zero slope.
double swing(const SyntheticParams& p, double t) {
  const double period = p.beat_period();
  const double x = (t - p.phase_s) / period;
  const double k = std::floor(x);
  const double u = x - k;
  const auto extreme = [&](double idx) {
    const long long i = static_cast<long long>(idx);
    const long long parity = ((i % 2) + 2) % 2;
    return (parity == 0 ? 1.0 : -1.0) * p.accents[parity];
  };
  const double e0 = extreme(k);
  const double e1 = extreme(k + 1.0);
  return e0 + (e1 - e0) * 0.5 * (1.0 - std::cos(kPi * u));
}

/// Deterministic per-genre, per-joint constant in [lo, hi).
double genre_constant(int genre, int joint, int salt, double lo, double hi) {
  Rng r(mix64(static_cast<std::uint64_t>(genre) * 1000003ULL + static_cast<std::uint64_t>(joint) * 7919ULL +
              static_cast<std::uint64_t>(salt)));
  return lo + (hi - lo) * r.uniform();
}

Eigen::Vector3d genre_axis(int genre, int joint) {
  Rng r(mix64(0xA11CE + static_cast<std::uint64_t>(genre) * 131ULL + static_cast<std::uint64_t>(joint)));
  Eigen::Vector3d a(r.normal(), r.normal(), r.normal());
  return a.normalized();
}

}  // namespace

void SyntheticParams::validate() const {
  if (!(tempo_bpm >= 60.0 && tempo_bpm <= 180.0)) throw DomainError("synthetic: tempo outside [60, 180] BPM");
  if (!(duration_s >= 4.0 && duration_s <= 20.0)) throw DomainError("synthetic: duration outside [4, 20] s");
  if (!(phase_s >= 0.0 && phase_s < 2.0 * beat_period())) throw DomainError("synthetic: phase outside [0, 2·period)");
  if (genre < 0 || genre >= kGenreCount) throw DomainError("synthetic: genre out of range");
  for (double a : accents) {
    if (!(a > 0.0 && a <= 2.0)) throw DomainError("synthetic: accent outside (0, 2]");
  }
  if (fps != 15.0 && fps != 30.0 && fps != 60.0) throw DomainError("synthetic: fps must be 15, 30 or 60");
}

BeatGrid beat_grid(const SyntheticParams& p) {
  BeatGrid g;
  g.duration = p.duration_s;
  const double period = p.beat_period();
  const double k0 = std::ceil(-p.phase_s / period);
  for (double k = k0;; k += 1.0) {
    const double t = p.phase_s + k * period;
    if (t > p.duration_s) break;
    if (t >= 0.0) g.times.push_back(t);
  }
  return g;
}

Vector audio_feature(const SyntheticParams& p, double offset_s) {
  const double period = p.beat_period();
  const double phi = wrap(p.phase_s - offset_s, 2.0 * period);
  Vector f = Vector::Zero(kAudioFeatureDim);
  f(0) = (p.tempo_bpm - 120.0) / 60.0;
  f(1) = std::sin(2.0 * kPi * phi / period);
  f(2) = std::cos(2.0 * kPi * phi / period);
  f(3) = std::sin(kPi * phi / period);
  f(4) = std::cos(kPi * phi / period);
  f(5) = p.accents[0];
  f(6) = p.accents[1];
  f(7 + p.genre) = 1.0;
  f(11) = period;
  return f;
}

SyntheticClip generate_synthetic_clip(const SyntheticParams& p, const SkeletonSpec& skel) {
  p.validate();
  skel.validate();
  const int joints = skel.joint_count();
  const Eigen::Index frames = static_cast<Eigen::Index>(std::llround(p.duration_s * p.fps));

  Rng jitter_rng(mix64(p.seed ^ 0x5EED5EEDULL));
  std::vector<double> amplitude(joints);
  std::vector<Eigen::Vector3d> axis(joints);
  std::vector<Eigen::Matrix3d> rest(joints);
  for (int j = 0; j < joints; ++j) {
    const double jitter = 0.9 + 0.2 * jitter_rng.uniform();
    if (j == skel.root) {
      amplitude[j] = genre_constant(p.genre, j, 1, 0.05, 0.25) * jitter;
      axis[j] = Eigen::Vector3d::UnitY();
      rest[j].setIdentity();
    } else {
      amplitude[j] = genre_constant(p.genre, j, 1, 0.15, 0.6) * jitter;
      axis[j] = genre_axis(p.genre, j);
      const double bend = genre_constant(p.genre, j, 2, -0.3, 0.3);
      rest[j] = Eigen::AngleAxisd(bend, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    }
  }
  const double sway = genre_constant(p.genre, 0, 3, 0.02, 0.10);
  const double bounce = genre_constant(p.genre, 0, 4, 0.02, 0.08);

  SyntheticClip clip;
  clip.params = p;
  clip.motion.fps = p.fps;
  clip.motion.frames.resize(frames, skel.frame_width());
  const int toff = skel.translation_offset();
  for (Eigen::Index i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i) / p.fps;
    const double s = swing(p, t);
    for (int j = 0; j < joints; ++j) {
      const Eigen::Matrix3d r = rest[j] * Eigen::AngleAxisd(amplitude[j] * s, axis[j]).toRotationMatrix();
      clip.motion.frames.row(i).segment<6>(6 * j) = matrix_to_rot6d<double>(r).transpose();
    }
    clip.motion.frames(i, toff) = sway * s;
    clip.motion.frames(i, toff + 1) = 0.5 * bounce * (std::cos(2.0 * kPi * (t - p.phase_s) / p.beat_period()) - 1.0);
    clip.motion.frames(i, toff + 2) = 0.0;
  }
  clip.audio_feature = audio_feature(p, 0.0);
  clip.beats = beat_grid(p);
  return clip;
}

SyntheticParams sample_synthetic_params(Rng& rng, const GeneratorRanges& ranges) {
  if (ranges.tempos.empty()) throw DomainError("generator: empty tempo list");
  SyntheticParams p;
  p.tempo_bpm = ranges.tempos[rng.below(ranges.tempos.size())];
  const double d = ranges.min_duration + (ranges.max_duration - ranges.min_duration) * rng.uniform();
  p.duration_s = 4.0 * std::round(d * p.fps / 4.0) / p.fps;
  p.duration_s = std::clamp(p.duration_s, 4.0, 20.0);
  p.phase_s = 2.0 * p.beat_period() * rng.uniform();
  p.genre = static_cast<int>(rng.below(kGenreCount));
  p.accents = {0.5 + 0.5 * rng.uniform(), 0.5 + 0.5 * rng.uniform()};
  p.seed = rng.next_u64();
  return p;
}

SyntheticClip crop_clip(const SyntheticClip& clip, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 2 || start + count > clip.motion.length()) throw ShapeError("crop_clip: window out of range");
  SyntheticClip out;
  const double offset = static_cast<double>(start) / clip.motion.fps;
  out.params = clip.params;
  out.params.phase_s = wrap(clip.params.phase_s - offset, 2.0 * clip.params.beat_period());
  out.params.duration_s = static_cast<double>(count) / clip.motion.fps;
  out.motion.fps = clip.motion.fps;
  out.motion.frames = clip.motion.frames.middleRows(start, count);
  out.audio_feature = audio_feature(clip.params, offset);
  out.beats.duration = static_cast<double>(count) / clip.motion.fps;
  for (double t : clip.beats.times) {
    const double local = t - offset;
    if (local >= 0.0 && local <= out.beats.duration) out.beats.times.push_back(local);
  }
  return out;
}

}  // namespace diffdance
