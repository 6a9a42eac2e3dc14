#include "diffdance/motion/sequence.hpp"

#include <cmath>
#include <string>

#include "diffdance/core/error.hpp"
#include "diffdance/motion/kinematics.hpp"

namespace diffdance {

void MotionSequence::validate(const SkeletonSpec& skel) const {
  if (frames.rows() < 2) throw ShapeError("motion: need at least 2 frames");
  if (frames.cols() != skel.frame_width()) {
    throw ShapeError("motion: frame width " + std::to_string(frames.cols()) + " != " +
                     std::to_string(skel.frame_width()));
  }
  if (fps != 15.0 && fps != 30.0 && fps != 60.0) throw DomainError("motion: fps must be 15, 30 or 60");
  if (!frames.allFinite()) throw NumericError("motion: non-finite frame data");
}

void BeatGrid::validate() const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0 && times[i] <= duration)) throw DomainError("beat grid: time outside [0, duration]");
    if (i > 0 && !(times[i] > times[i - 1])) throw DomainError("beat grid: times not strictly increasing");
  }
}

Matrix relative_position_velocity(const Matrix& positions, int joint_count, double fps) {
  Matrix rel(positions.rows(), 3 * (joint_count - 1));
  for (int j = 1; j < joint_count; ++j) {
    rel.middleCols(3 * (j - 1), 3) = positions.middleCols(3 * j, 3) - positions.middleCols(0, 3);
  }
  return forward_difference(rel, fps);
}

Velocities compute_velocities(const MotionSequence& seq, const SkeletonSpec& skel) {
  if (seq.length() < 2) throw ShapeError("compute_velocities: need at least 2 frames");
  seq.validate(skel);
  Velocities v;
  v.position = relative_position_velocity(joint_positions(skel, seq.frames), skel.joint_count(), seq.fps);
  v.rotation = forward_difference(seq.frames.leftCols(6 * skel.joint_count()), seq.fps);
  return v;
}

int integer_ratio(double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("fps must be positive");
  const double r = a / b;
  const double k = std::round(r);
  if (k < 1.0 || std::abs(r - k) > 1e-9) throw DomainError("fps ratio is not an integer");
  return static_cast<int>(k);
}

MotionSequence downsample(const MotionSequence& seq, double target_fps) {
  const int k = integer_ratio(seq.fps, target_fps);
  const Eigen::Index n = (seq.length() + k - 1) / k;
  MotionSequence out;
  out.fps = target_fps;
  out.frames.resize(n, seq.frames.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.frames.row(i) = seq.frames.row(i * k);
  return out;
}

MotionSequence upsample_linear(const MotionSequence& seq, double target_fps) {
  const int k = integer_ratio(target_fps, seq.fps);
  const Eigen::Index n = seq.length();
  if (n < 2) throw ShapeError("upsample_linear: need at least 2 frames");
  MotionSequence out;
  out.fps = target_fps;
  out.frames.resize(n * k, seq.frames.cols());
  for (Eigen::Index i = 0; i < n * k; ++i) {
    const Eigen::Index j = i / k;
    const Eigen::Index r = i % k;
    if (r == 0) {
      out.frames.row(i) = seq.frames.row(j);
      continue;
    }
    const double frac = static_cast<double>(r) / static_cast<double>(k);
    if (j + 1 < n) {
      out.frames.row(i) = seq.frames.row(j) + frac * (seq.frames.row(j + 1) - seq.frames.row(j));
    } else {
      out.frames.row(i) = seq.frames.row(j) + frac * (seq.frames.row(j) - seq.frames.row(j - 1));
    }
  }
  return out;
}

}  // namespace diffdance
