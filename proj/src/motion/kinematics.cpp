#include "diffdance/motion/kinematics.hpp"

#include <string>

#include "diffdance/core/error.hpp"

namespace diffdance {

Eigen::MatrixXd forward_kinematics(const SkeletonSpec& skel, const RowVector& frame) {
  if (frame.size() != skel.frame_width()) {
    throw ShapeError("forward_kinematics: frame has " + std::to_string(frame.size()) + " channels, expected " +
                     std::to_string(skel.frame_width()));
  }
  std::vector<double> pos(3 * skel.joint_count());
  forward_kinematics_frame<double>(skel, frame.data(), pos.data());
  Eigen::MatrixXd out(skel.joint_count(), 3);
  for (int j = 0; j < skel.joint_count(); ++j) out.row(j) << pos[3 * j], pos[3 * j + 1], pos[3 * j + 2];
  return out;
}

Matrix joint_positions(const SkeletonSpec& skel, const Matrix& frames) {
  if (frames.cols() != skel.frame_width()) throw ShapeError("joint_positions: frame width mismatch");
  Matrix out(frames.rows(), 3 * skel.joint_count());
  for (Eigen::Index i = 0; i < frames.rows(); ++i) {
    forward_kinematics_frame<double>(skel, frames.row(i).data(), out.row(i).data());
  }
  return out;
}

Vector6<double> rot6d_backward(const Vector6<double>& v, const Eigen::Matrix3d& grad_r) {
  const Eigen::Vector3d a1 = v.head<3>();
  const Eigen::Vector3d a2 = v.tail<3>();
  const double n1 = a1.norm();
  const Eigen::Vector3d b1 = a1 / n1;
  const double d = b1.dot(a2);
  const Eigen::Vector3d u = a2 - d * b1;
  const double nu = u.norm();
  const Eigen::Vector3d b2 = u / nu;

  Eigen::Vector3d gb1 = grad_r.col(0);
  Eigen::Vector3d gb2 = grad_r.col(1);
  const Eigen::Vector3d gb3 = grad_r.col(2);
  // b3 = b1 x b2
  gb1 += b2.cross(gb3);
  gb2 += gb3.cross(b1);
  // b2 = u / |u|
  const Eigen::Vector3d gu = (gb2 - b2 * b2.dot(gb2)) / nu;
  // u = a2 - (b1.a2) b1
  Eigen::Vector3d ga2 = gu;
  const double gd = -b1.dot(gu);
  gb1 += -d * gu + gd * a2;
  ga2 += gd * b1;
  // b1 = a1 / |a1|
  const Eigen::Vector3d ga1 = (gb1 - b1 * b1.dot(gb1)) / n1;

  Vector6<double> out;
  out << ga1, ga2;
  return out;
}

namespace ad {

Var joint_positions(Var frames, const SkeletonSpec& skel) {
  const Matrix& fv = frames.value();
  Matrix out = diffdance::joint_positions(skel, fv);
  const std::size_t id = frames.id;
  const Var in[] = {frames};
  return frames.tape->record(std::move(out), in, [id, skel](Tape& t, const Matrix& g) {
    const Matrix& fr = t.value(id);
    const int joints = skel.joint_count();
    const int toff = skel.translation_offset();
    Matrix gf = Matrix::Zero(fr.rows(), fr.cols());
    std::vector<Eigen::Matrix3d> rl, rg, grg(joints), grl(joints);
    std::vector<double> pos(3 * joints);
    std::vector<Eigen::Vector3d> gp(joints);
    for (Eigen::Index i = 0; i < fr.rows(); ++i) {
      forward_kinematics_frame<double>(skel, fr.row(i).data(), pos.data(), &rl, &rg);
      for (int j = 0; j < joints; ++j) {
        gp[j] = g.row(i).segment<3>(3 * j).transpose();
        grg[j].setZero();
      }
      for (int j = joints - 1; j >= 1; --j) {
        const int q = skel.parent[j];
        gp[q] += gp[j];
        grg[q] += gp[j] * skel.offset[j].transpose();
        grl[j] = rg[q].transpose() * grg[j];
        grg[q] += grg[j] * rl[j].transpose();
      }
      grl[0] = grg[0];
      gf.row(i).segment<3>(toff) = gp[0].transpose();
      for (int j = 0; j < joints; ++j) {
        const Vector6<double> v = fr.row(i).segment<6>(6 * j).transpose();
        gf.row(i).segment<6>(6 * j) = rot6d_backward(v, grl[j]).transpose();
      }
    }
    t.accumulate(id, gf);
  });
}

}  // namespace ad
}  // namespace diffdance
