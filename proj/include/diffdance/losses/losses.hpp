#pragma once

#include "diffdance/core/autodiff.hpp"
#include "diffdance/motion/sequence.hpp"

namespace diffdance {

struct LossWeights {
  double lambda1 = 1.0;  ///< all-joint position loss
  double lambda2 = 1.0;  ///< key-joint position loss
  double lambda3 = 1.0;  ///< key-joint rotation loss
  double alpha = 0.1;    ///< decay of the geometric terms over t

  /// Throws DomainError unless all weights >= 0 and alpha <= 1.
  void validate() const;
};

struct LossBreakdown {
  double simple = 0.0;
  double pos_all = 0.0;
  double pos_key = 0.0;
  double rot_key = 0.0;
  double lambda_t = 1.0;
  double total = 0.0;
};

/// 1 - alpha·t/T. Throws DomainError for t outside [0, T] or alpha outside
/// [0, 1].
double dynamic_weight(int t, int T, double alpha);

/// Loss terms on the tape. Reductions: `simple` is a mean over all entries;
/// the key-joint terms sum over tagged joints and average over frames.
namespace loss {

Var simple(Var pred, const Matrix& target);
/// MSE of all FK positions plus MSE of root-relative position velocities
/// (root excluded). Inputs are L x 3J position matrices.
Var pos_all(Var pred_positions, const Matrix& gt_positions, int joint_count, double fps);
/// FK positions with the root transform replaced by the identity, i.e. joint
/// positions expressed in the root's own frame.
Var root_local_positions(Var frames, const SkeletonSpec& skel);
/// Feet and hands, on root-local positions: squared position error plus
/// squared velocity error. Invariant to the root's rotation and translation.
/// Throws DomainError when the skeleton has no such tags.
Var pos_key(Var pred_local, const Matrix& gt_local, const SkeletonSpec& skel, double fps);
/// Feet, hands and root: squared rotation-6d error plus squared error of
/// its frame differences. Inputs are L x (6J+3) frames.
Var rot_key(Var pred_frames, const Matrix& gt_frames, const SkeletonSpec& skel, double fps);

struct Terms {
  Var total;
  LossBreakdown values;
};

/// Combined objective for an x0 prediction in normalized space. Geometric
/// terms are evaluated on denormalized frames (x·std + mean) through FK.
Terms total(Tape& tape, Var x0_pred, const Matrix& x0, int t, int T, const LossWeights& weights,
            const SkeletonSpec& skel, double fps, const RowVector& mean, const RowVector& std);

}  // namespace loss

// Value-only wrappers.
double loss_simple(const Matrix& pred, const Matrix& target);
double loss_pos_all(const MotionSequence& pred, const MotionSequence& gt, const SkeletonSpec& skel);
double loss_pos_key(const MotionSequence& pred, const MotionSequence& gt, const SkeletonSpec& skel);
double loss_rot_key(const MotionSequence& pred, const MotionSequence& gt, const SkeletonSpec& skel);
Matrix root_local_positions(const SkeletonSpec& skel, const Matrix& frames);
/// Key-joint position loss on precomputed L x 3J root-local positions.
double loss_pos_key_positions(const Matrix& pred_local, const Matrix& gt_local, const SkeletonSpec& skel, double fps);

/// total_loss in physical units (identity normalization).
LossBreakdown total_loss(const Matrix& x0_pred, const Matrix& x0, int t, int T, const LossWeights& weights,
                         const SkeletonSpec& skel, double fps);

}  // namespace diffdance
