#pragma once

#include <vector>

#include "diffdance/core/tensor.hpp"
#include "diffdance/motion/skeleton.hpp"

namespace diffdance {

/// L frames of J rotation-6d blocks followed by 3 root-translation channels.
struct MotionSequence {
  double fps = 60.0;
  Matrix frames;  ///< L x (6J + 3)

  Eigen::Index length() const { return frames.rows(); }
  double duration() const { return static_cast<double>(frames.rows()) / fps; }

  /// Throws ShapeError/DomainError unless L >= 2, the width matches the
  /// skeleton, fps is one of 15/30/60 and all values are finite.
  void validate(const SkeletonSpec& skel) const;

  bool operator==(const MotionSequence& o) const {
    return fps == o.fps && frames.rows() == o.frames.rows() && frames.cols() == o.frames.cols() &&
           frames == o.frames;
  }
};

/// Ordered beat times in seconds within [0, duration].
struct BeatGrid {
  std::vector<double> times;
  double duration = 0.0;

  /// Throws DomainError unless strictly increasing and inside [0, duration].
  void validate() const;
  std::size_t size() const { return times.size(); }
};

/// Per-frame velocities with forward differences scaled by fps; the last
/// frame repeats the previous value.
struct Velocities {
  /// L x 3(J-1): joint positions relative to the root, differenced. The root
  /// joint itself is excluded.
  Matrix position;
  /// L x 6J: differenced rotation-6d channels, root included.
  Matrix rotation;
};

Velocities compute_velocities(const MotionSequence& seq, const SkeletonSpec& skel);

/// Root-relative joint positions differenced in time: L x 3(J-1). Shared by
/// compute_velocities, the losses and beat extraction.
Matrix relative_position_velocity(const Matrix& positions, int joint_count, double fps);

/// Keeps every k-th frame, k = fps / target_fps (must be an integer).
MotionSequence downsample(const MotionSequence& seq, double target_fps);

/// Inserts k-1 linearly interpolated frames after every input frame,
/// k = target_fps / fps. Output length is k·L; original frames land on
/// multiples of k bit-exactly and the tail past the last frame extends the
/// final segment linearly.
MotionSequence upsample_linear(const MotionSequence& seq, double target_fps);

/// Integer ratio a/b, or DomainError.
int integer_ratio(double a, double b);

}  // namespace diffdance
