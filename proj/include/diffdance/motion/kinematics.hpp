#pragma once

#include <vector>

#include "diffdance/core/autodiff.hpp"
#include "diffdance/motion/rotation.hpp"
#include "diffdance/motion/skeleton.hpp"

namespace diffdance {

/// Forward kinematics of one frame: the root sits at the root translation,
/// every child at parent position + parent global rotation · bone offset.
/// `frame` holds skel.frame_width() scalars, `positions` receives 3J.
/// Optionally returns the local and global rotation of every joint.
template <typename Scalar>
void forward_kinematics_frame(const SkeletonSpec& skel, const Scalar* frame, Scalar* positions,
                              std::vector<Matrix3<Scalar>>* local = nullptr,
                              std::vector<Matrix3<Scalar>>* global = nullptr) {
  const int joints = skel.joint_count();
  std::vector<Matrix3<Scalar>> rl(joints), rg(joints);
  const int t = skel.translation_offset();
  for (int j = 0; j < joints; ++j) {
    rl[j] = rot6d_to_matrix<Scalar>(Eigen::Map<const Vector6<Scalar>>(frame + 6 * j));
    if (j == 0) {
      rg[j] = rl[j];
      positions[0] = frame[t];
      positions[1] = frame[t + 1];
      positions[2] = frame[t + 2];
    } else {
      const int q = skel.parent[j];
      rg[j] = rg[q] * rl[j];
      const Vector3<Scalar> p = Eigen::Map<const Vector3<Scalar>>(positions + 3 * q) +
                                rg[q] * skel.offset[j].template cast<Scalar>();
      Eigen::Map<Vector3<Scalar>>(positions + 3 * j) = p;
    }
  }
  if (local) *local = std::move(rl);
  if (global) *global = std::move(rg);
}

/// J x 3 joint positions of one frame. Throws ShapeError on a malformed frame.
Eigen::MatrixXd forward_kinematics(const SkeletonSpec& skel, const RowVector& frame);

/// L x 3J joint positions (joint-major xyz per row).
Matrix joint_positions(const SkeletonSpec& skel, const Matrix& frames);

/// Gradient of Gram-Schmidt decoding: maps dL/dR to dL/d(6d).
Vector6<double> rot6d_backward(const Vector6<double>& v, const Eigen::Matrix3d& grad_r);

namespace ad {
/// Differentiable joint_positions: [L, 6J+3] -> [L, 3J].
Var joint_positions(Var frames, const SkeletonSpec& skel);
}  // namespace ad

}  // namespace diffdance
