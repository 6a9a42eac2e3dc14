#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "diffdance/core/tensor.hpp"
#include "diffdance/motion/sequence.hpp"

namespace diffdance {

class Rng;

inline constexpr int kGenreCount = 4;
/// Layout: [tempo, sin/cos beat phase, sin/cos bar phase, 2 accents,
/// genre one-hot (4), beat period].
inline constexpr int kAudioFeatureDim = 12;

/// Generator parameters of one rhythmic clip. Beats fall at
/// phase + k·(60/tempo); even-indexed beats swing one way, odd ones the other,
/// with accent[k mod 2] setting the swing extreme.
struct SyntheticParams {
  double tempo_bpm = 120.0;
  double duration_s = 4.0;
  double phase_s = 0.0;  ///< time of an even beat, in [0, 2·period)
  int genre = 0;
  std::array<double, 2> accents{1.0, 1.0};
  std::uint64_t seed = 0;
  double fps = 60.0;

  double beat_period() const { return 60.0 / tempo_bpm; }
  /// Throws DomainError for tempo outside [60, 180] BPM, duration outside
  /// [4, 20] s, or other out-of-range fields.
  void validate() const;
};

struct SyntheticClip {
  SyntheticParams params;
  MotionSequence motion;
  Vector audio_feature;  ///< kAudioFeatureDim entries
  BeatGrid beats;
};

/// Ranges used when drawing dataset clips.
struct GeneratorRanges {
  std::vector<double> tempos{90.0, 105.0, 120.0, 135.0, 150.0};
  double min_duration = 4.0;
  double max_duration = 8.0;
};

/// Deterministic clip: whole-body oscillation whose root-relative kinetic
/// velocity vanishes exactly on every beat.
SyntheticClip generate_synthetic_clip(const SyntheticParams& params, const SkeletonSpec& skel);

/// Draws parameters; durations are rounded so the 60 fps frame count is a
/// multiple of 4.
SyntheticParams sample_synthetic_params(Rng& rng, const GeneratorRanges& ranges);

/// Audio feature describing the music heard from `offset_s` onwards.
Vector audio_feature(const SyntheticParams& params, double offset_s = 0.0);

/// Beat times of the full clip (no window).
BeatGrid beat_grid(const SyntheticParams& params);

/// Crop of a clip: frames [start, start+count), beats shifted into the window
/// and the audio feature recomputed for the window's phase.
SyntheticClip crop_clip(const SyntheticClip& clip, Eigen::Index start, Eigen::Index count);

}  // namespace diffdance
