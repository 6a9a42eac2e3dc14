#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diffdance/align/alignment.hpp"
#include "diffdance/motion/synthetic.hpp"

namespace diffdance {

/// Clips drawn from `ranges`; clip i uses parameters sampled from
/// Rng(seed).fork(i), so any prefix of a larger set is identical.
std::vector<SyntheticClip> generate_clips(int count, std::uint64_t seed, const GeneratorRanges& ranges,
                                          const SkeletonSpec& skel);

/// Writes `<dir>/clip_NNN.motseq`, the sidecar `<dir>/clip_NNN.json`
/// (generator params, audio feature, beats) and `<dir>/manifest.json`.
/// Returns the manifest text.
std::string write_clip_set(const std::filesystem::path& dir, const std::vector<SyntheticClip>& clips,
                           const std::string& skeleton, std::uint64_t seed);

/// Reads a directory written by write_clip_set (or by sampling, whose
/// sidecars carry the same fields). Throws FormatError on a malformed file.
std::vector<SyntheticClip> load_clip_set(const std::filesystem::path& dir);

std::string sidecar_json(const SyntheticClip& clip);
/// Parses a sidecar into params/audio feature/beats; motion is left empty.
SyntheticClip parse_sidecar(const std::string& text);

/// Largest distance, in frames, between a ground-truth beat and the nearest
/// extracted dance beat, over beats at least `margin` frames from either end.
/// Returns 0 when no beat is far enough from the ends.
double beat_consistency_error(const SyntheticClip& clip, const SkeletonSpec& skel, int margin = 4);

/// 6 s, 30 fps motion paired with the clip's audio feature. Throws
/// DomainError if the clip is shorter than 6 s.
AlignmentPair alignment_pair(const SyntheticClip& clip);

/// Fixed 6 s clips used to train and evaluate the adapter.
std::vector<SyntheticClip> generate_alignment_clips(int count, std::uint64_t seed, const SkeletonSpec& skel);

}  // namespace diffdance
