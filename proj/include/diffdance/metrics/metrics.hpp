#pragma once

#include <string>
#include <vector>

#include "diffdance/core/tensor.hpp"
#include "diffdance/motion/sequence.hpp"
#include "diffdance/motion/skeleton.hpp"

namespace diffdance {

/// Per joint: mean squared horizontal (xz) speed, mean squared vertical (y)
/// speed and mean squared acceleration of absolute FK positions. Length 3J,
/// joint-major. Throws DomainError for L < 3.
Vector kinetic_features(const MotionSequence& seq, const SkeletonSpec& skel);

/// Thresholds for the boolean pose descriptors, metres.
struct GeometricThresholds {
  double foot_lift = 0.03;     ///< above the lowest foot of the frame
  double foot_forward = 0.10;  ///< ahead of the root along +z
  double hand_extended = 0.80; ///< distance from the root
  double hand_forward = 0.10;
  double hands_close = 0.30;
};

/// Frame-averaged activation rates: per foot {lifted, forward}, per hand
/// {above root, extended, forward}, then hands-close for the last two hand
/// joints. Every entry is in [0, 1].
Vector geometric_features(const MotionSequence& seq, const SkeletonSpec& skel,
                          const GeometricThresholds& th = {});

/// Number of geometric descriptors for a skeleton.
int geometric_feature_count(const SkeletonSpec& skel);

struct GaussianStats {
  Vector mean;
  Matrix cov;
};

/// Sample mean and unbiased covariance of the rows of `features` (N x D).
/// A single row gives a zero covariance. Throws DomainError when empty.
GaussianStats gaussian_stats(const Matrix& features);

/// ‖µa − µb‖² + Tr(Σa + Σb − 2(ΣaΣb)^½). The trace of the square root equals
/// the sum of singular values of Σa^½ Σb^½. When taking each Σ^½,
/// eigenvalues at or below the rounding floor (d·ε·max(1, λmax)) count as
/// zero; below −1e-10·max(1, λmax) throws NumericError.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Mean Euclidean distance over unordered row pairs. Needs at least 2 rows.
double diversity(const Matrix& features);

/// k(i) = Σ_j ‖v_j(i)‖ over root-relative joint velocities (central
/// differences), optionally smoothed by a centred moving average truncated
/// at the clip ends.
Vector kinetic_velocity(const MotionSequence& seq, const SkeletonSpec& skel, int smooth_window = 5);

/// Frame indices of strict local minima of `k`. A run of equal values counts
/// once, at its centre, when both neighbours of the run are larger; runs that
/// touch either end never count.
std::vector<double> local_minima(const Vector& k);

/// Dance beats: local minima of the smoothed kinetic velocity, in seconds.
/// Throws DomainError for L < 3.
BeatGrid extract_dance_beats(const MotionSequence& seq, const SkeletonSpec& skel);

/// Mean over music beats of exp(−d²/(2σ²)), d being the distance to the
/// nearest dance beat and σ = sigma_frames / fps seconds. An empty dance grid
/// scores 0. Throws DomainError on an empty music grid.
double beat_align_score(const BeatGrid& dance, const BeatGrid& music, double sigma_frames = 3.0,
                        double fps = 60.0);

struct EvalClip {
  MotionSequence motion;
  BeatGrid music_beats;
};

struct EvalReport {
  double fid_k = 0.0;
  double fid_g = 0.0;
  double div_k = 0.0;
  double div_g = 0.0;
  double bas = 0.0;
  int clips = 0;
};

/// FID of generated vs reference features, diversity within the generated
/// set and the mean BAS of each generated clip against its music beats.
/// Diversity is reported as 0 for a single generated clip.
EvalReport evaluate_suite(const std::vector<EvalClip>& generated, const std::vector<EvalClip>& reference,
                          const SkeletonSpec& skel, double sigma_frames = 3.0);

std::string report_to_json(const EvalReport& report);
/// Throws FormatError on a missing or mistyped field.
EvalReport report_from_json(const std::string& text);

}  // namespace diffdance
