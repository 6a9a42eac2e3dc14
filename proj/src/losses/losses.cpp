#include "diffdance/losses/losses.hpp"

#include <vector>

#include "diffdance/core/error.hpp"
#include "diffdance/motion/kinematics.hpp"

namespace diffdance {

void LossWeights::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) throw DomainError("loss weights must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("loss decay alpha must be in [0, 1]");
}

double dynamic_weight(int t, int T, double alpha) {
  if (T < 1 || t < 0 || t > T) throw DomainError("dynamic_weight: t outside [0, T]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("dynamic_weight: alpha outside [0, 1]");
  return 1.0 - alpha * static_cast<double>(t) / static_cast<double>(T);
}

namespace loss {

namespace {

/// 3J x 3(J-1) map from absolute to root-relative positions (root dropped).
Matrix relative_map(int joints) {
  Matrix m = Matrix::Zero(3 * joints, 3 * (joints - 1));
  for (int j = 1; j < joints; ++j) {
    for (int k = 0; k < 3; ++k) {
      m(3 * j + k, 3 * (j - 1) + k) = 1.0;
      m(k, 3 * (j - 1) + k) = -1.0;
    }
  }
  return m;
}

Var relative_velocity(Var positions, int joints, double fps) {
  Tape& tape = *positions.tape;
  return ad::forward_difference(ad::matmul(positions, tape.constant(relative_map(joints))), fps);
}

std::vector<int> key_joints(const SkeletonSpec& skel, bool with_root) {
  std::vector<int> keys(skel.feet.begin(), skel.feet.end());
  keys.insert(keys.end(), skel.hands.begin(), skel.hands.end());
  if (keys.empty()) throw DomainError("key-joint loss: skeleton has no foot/hand tags");
  if (with_root) keys.insert(keys.begin(), skel.root);
  return keys;
}

/// Mask and offset that replace the root transform with the identity.
std::pair<RowVector, RowVector> root_reset(Eigen::Index width) {
  RowVector mask = RowVector::Ones(width), offset = RowVector::Zero(width);
  mask.head(6).setZero();
  mask.tail(3).setZero();
  offset(0) = 1.0;
  offset(4) = 1.0;
  return {mask, offset};
}

void check_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

Var simple(Var pred, const Matrix& target) {
  check_shape(pred.value(), target, "loss_simple");
  return ad::mean_sq(ad::sub(pred, pred.tape->constant(target)));
}

Var pos_all(Var pred_positions, const Matrix& gt_positions, int joints, double fps) {
  check_shape(pred_positions.value(), gt_positions, "loss_pos_all");
  Tape& tape = *pred_positions.tape;
  Var gt = tape.constant(gt_positions);
  Var pos = ad::mean_sq(ad::sub(pred_positions, gt));
  Var vel = ad::mean_sq(ad::sub(relative_velocity(pred_positions, joints, fps), relative_velocity(gt, joints, fps)));
  return ad::add(pos, vel);
}

Var root_local_positions(Var frames, const SkeletonSpec& skel) {
  Tape& tape = *frames.tape;
  const auto [mask, offset] = root_reset(frames.cols());
  Var local = ad::add(ad::mul(frames, tape.constant(Matrix(mask))), tape.constant(Matrix(offset)));
  return ad::joint_positions(local, skel);
}

Var pos_key(Var pred_local, const Matrix& gt_local, const SkeletonSpec& skel, double fps) {
  check_shape(pred_local.value(), gt_local, "loss_pos_key");
  Tape& tape = *pred_local.tape;
  std::vector<int> cols;
  for (int j : key_joints(skel, false)) {
    for (int k = 0; k < 3; ++k) cols.push_back(3 * j + k);
  }
  const double inv_frames = 1.0 / static_cast<double>(gt_local.rows());
  Var pred_key = ad::select_cols(pred_local, cols);
  Var gt_key = ad::select_cols(tape.constant(gt_local), cols);
  Var dp = ad::sub(pred_key, gt_key);
  Var dv = ad::sub(ad::forward_difference(pred_key, fps), ad::forward_difference(gt_key, fps));
  return ad::scale(ad::add(ad::sum_sq(dp), ad::sum_sq(dv)), inv_frames);
}

Var rot_key(Var pred_frames, const Matrix& gt_frames, const SkeletonSpec& skel, double fps) {
  check_shape(pred_frames.value(), gt_frames, "loss_rot_key");
  Tape& tape = *pred_frames.tape;
  std::vector<int> cols;
  for (int j : key_joints(skel, true)) {
    for (int k = 0; k < 6; ++k) cols.push_back(6 * j + k);
  }
  const double inv_frames = 1.0 / static_cast<double>(gt_frames.rows());
  Var pred_rot = ad::select_cols(pred_frames, cols);
  Var gt_rot = ad::select_cols(tape.constant(gt_frames), cols);
  Var dr = ad::sub(pred_rot, gt_rot);
  Var dv = ad::sub(ad::forward_difference(pred_rot, fps), ad::forward_difference(gt_rot, fps));
  return ad::scale(ad::add(ad::sum_sq(dr), ad::sum_sq(dv)), inv_frames);
}

Terms total(Tape& tape, Var x0_pred, const Matrix& x0, int t, int T, const LossWeights& weights,
            const SkeletonSpec& skel, double fps, const RowVector& mean, const RowVector& std) {
  weights.validate();
  check_shape(x0_pred.value(), x0, "total_loss");
  if (mean.size() != x0.cols() || std.size() != x0.cols()) throw ShapeError("total_loss: normalization width mismatch");
  Terms out;
  out.values.lambda_t = dynamic_weight(t, T, weights.alpha);
  Var l_simple = simple(x0_pred, x0);

  Matrix gt_frames = x0;
  gt_frames.array().rowwise() *= std.array();
  gt_frames.rowwise() += mean;
  Var pred_frames = ad::add(ad::mul(x0_pred, tape.constant(Matrix(std))), tape.constant(Matrix(mean)));
  const Matrix gt_positions = joint_positions(skel, gt_frames);
  Var pred_positions = ad::joint_positions(pred_frames, skel);

  Var l_all = pos_all(pred_positions, gt_positions, skel.joint_count(), fps);
  Var l_pkey = pos_key(root_local_positions(pred_frames, skel), diffdance::root_local_positions(skel, gt_frames), skel, fps);
  Var l_rkey = rot_key(pred_frames, gt_frames, skel, fps);

  Var geo = ad::add(ad::add(ad::scale(l_all, weights.lambda1), ad::scale(l_pkey, weights.lambda2)),
                    ad::scale(l_rkey, weights.lambda3));
  out.total = ad::add(l_simple, ad::scale(geo, out.values.lambda_t));

  out.values.simple = l_simple.scalar();
  out.values.pos_all = l_all.scalar();
  out.values.pos_key = l_pkey.scalar();
  out.values.rot_key = l_rkey.scalar();
  out.values.total = out.total.scalar();
  return out;
}

}  // namespace loss

double loss_simple(const Matrix& pred, const Matrix& target) {
  Tape tape(false);
  return loss::simple(tape.constant(pred), target).scalar();
}

double loss_pos_all(const MotionSequence& pred, const MotionSequence& gt, const SkeletonSpec& skel) {
  pred.validate(skel);
  gt.validate(skel);
  Tape tape(false);
  Var p = tape.constant(joint_positions(skel, pred.frames));
  return loss::pos_all(p, joint_positions(skel, gt.frames), skel.joint_count(), gt.fps).scalar();
}

Matrix root_local_positions(const SkeletonSpec& skel, const Matrix& frames) {
  const auto [mask, offset] = loss::root_reset(frames.cols());
  Matrix local = frames;
  local.array().rowwise() *= mask.array();
  local.rowwise() += offset;
  return joint_positions(skel, local);
}

double loss_pos_key_positions(const Matrix& pred_positions, const Matrix& gt_positions, const SkeletonSpec& skel,
                              double fps) {
  Tape tape(false);
  return loss::pos_key(tape.constant(pred_positions), gt_positions, skel, fps).scalar();
}

double loss_pos_key(const MotionSequence& pred, const MotionSequence& gt, const SkeletonSpec& skel) {
  pred.validate(skel);
  gt.validate(skel);
  return loss_pos_key_positions(root_local_positions(skel, pred.frames), root_local_positions(skel, gt.frames), skel,
                                gt.fps);
}

double loss_rot_key(const MotionSequence& pred, const MotionSequence& gt, const SkeletonSpec& skel) {
  pred.validate(skel);
  gt.validate(skel);
  Tape tape(false);
  return loss::rot_key(tape.constant(pred.frames), gt.frames, skel, gt.fps).scalar();
}

LossBreakdown total_loss(const Matrix& x0_pred, const Matrix& x0, int t, int T, const LossWeights& weights,
                         const SkeletonSpec& skel, double fps) {
  Tape tape(false);
  const RowVector mean = RowVector::Zero(x0.cols());
  const RowVector std = RowVector::Ones(x0.cols());
  return loss::total(tape, tape.constant(x0_pred), x0, t, T, weights, skel, fps, mean, std).values;
}

}  // namespace diffdance
