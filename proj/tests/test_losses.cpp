#include <doctest.h>

#include <cmath>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"
#include "diffdance/losses/losses.hpp"
#include "diffdance/motion/kinematics.hpp"
#include "diffdance/motion/rotation.hpp"
#include "diffdance/motion/skeleton.hpp"
#include "support.hpp"

using namespace diffdance;

namespace {

Matrix random_motion(const SkeletonSpec& skel, Eigen::Index frames, Rng& rng) {
  Matrix m(frames, skel.frame_width());
  for (Eigen::Index i = 0; i < frames; ++i) {
    for (int j = 0; j < skel.joint_count(); ++j) {
      const Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
      m.row(i).segment<6>(6 * j) = matrix_to_rot6d<double>(q.normalized().toRotationMatrix()).transpose();
    }
    m.row(i).tail(3) = rng.normal_matrix(1, 3);
  }
  return m;
}

// Naive per-frame FK oracle: walks the tree with explicit 3x3 products.
Matrix naive_positions(const SkeletonSpec& skel, const Matrix& frames) {
  const int J = skel.joint_count();
  Matrix out(frames.rows(), 3 * J);
  for (Eigen::Index i = 0; i < frames.rows(); ++i) {
    std::vector<Eigen::Matrix3d> world(J);
    std::vector<Eigen::Vector3d> pos(J);
    for (int j = 0; j < J; ++j) {
      Vector6<double> v;
      for (int k = 0; k < 6; ++k) v(k) = frames(i, 6 * j + k);
      // Gram-Schmidt by hand.
      Eigen::Vector3d a(v(0), v(1), v(2)), b(v(3), v(4), v(5));
      const Eigen::Vector3d b1 = a / a.norm();
      Eigen::Vector3d u = b - b1.dot(b) * b1;
      const Eigen::Vector3d b2 = u / u.norm();
      Eigen::Matrix3d r;
      r.col(0) = b1;
      r.col(1) = b2;
      r.col(2) = b1.cross(b2);
      if (j == 0) {
        world[0] = r;
        pos[0] = Eigen::Vector3d(frames(i, 6 * J), frames(i, 6 * J + 1), frames(i, 6 * J + 2));
      } else {
        const int p = skel.parent[j];
        world[j] = world[p] * r;
        pos[j] = pos[p] + world[p] * skel.offset[j];
      }
      for (int k = 0; k < 3; ++k) out(i, 3 * j + k) = pos[j](k);
    }
  }
  return out;
}

// Root-relative velocity of joint j at frame i with the repeated last row.
Eigen::Vector3d naive_rel_velocity(const Matrix& p, int j, Eigen::Index i, double fps) {
  const Eigen::Index L = p.rows();
  const Eigen::Index a = i + 1 < L ? i : L - 2;
  Eigen::Vector3d v;
  for (int k = 0; k < 3; ++k) {
    v(k) = ((p(a + 1, 3 * j + k) - p(a + 1, k)) - (p(a, 3 * j + k) - p(a, k))) * fps;
  }
  return v;
}

double naive_pos_all(const Matrix& pp, const Matrix& gp, int J, double fps) {
  const Eigen::Index L = pp.rows();
  double pos = 0.0, vel = 0.0;
  for (Eigen::Index i = 0; i < L; ++i) {
    for (int c = 0; c < 3 * J; ++c) pos += (pp(i, c) - gp(i, c)) * (pp(i, c) - gp(i, c));
    for (int j = 1; j < J; ++j) vel += (naive_rel_velocity(pp, j, i, fps) - naive_rel_velocity(gp, j, i, fps)).squaredNorm();
  }
  return pos / static_cast<double>(L * 3 * J) + vel / static_cast<double>(L * 3 * (J - 1));
}

// Positions in the root's frame: p_root-local = R_root^T (p - p_root).
Matrix naive_local_positions(const SkeletonSpec& skel, const Matrix& frames) {
  const Matrix world = naive_positions(skel, frames);
  Matrix out(world.rows(), world.cols());
  for (Eigen::Index i = 0; i < frames.rows(); ++i) {
    const Eigen::Vector3d a(frames(i, 0), frames(i, 1), frames(i, 2)), b(frames(i, 3), frames(i, 4), frames(i, 5));
    const Eigen::Vector3d b1 = a.normalized();
    const Eigen::Vector3d b2 = (b - b1.dot(b) * b1).normalized();
    Eigen::Matrix3d r;
    r << b1, b2, b1.cross(b2);
    const Eigen::Vector3d root(world(i, 0), world(i, 1), world(i, 2));
    for (int j = 0; j < skel.joint_count(); ++j) {
      const Eigen::Vector3d p(world(i, 3 * j), world(i, 3 * j + 1), world(i, 3 * j + 2));
      out.row(i).segment<3>(3 * j) = (r.transpose() * (p - root)).transpose();
    }
  }
  return out;
}

double naive_pos_key(const Matrix& pl, const Matrix& gl, const SkeletonSpec& skel, double fps) {
  std::vector<int> keys(skel.feet.begin(), skel.feet.end());
  keys.insert(keys.end(), skel.hands.begin(), skel.hands.end());
  const Eigen::Index L = pl.rows();
  double s = 0.0;
  for (Eigen::Index i = 0; i < L; ++i) {
    const Eigen::Index a = i + 1 < L ? i : L - 2;
    for (int j : keys) {
      for (int k = 0; k < 3; ++k) {
        const int c = 3 * j + k;
        s += std::pow(pl(i, c) - gl(i, c), 2);
        const double vp = (pl(a + 1, c) - pl(a, c)) * fps, vg = (gl(a + 1, c) - gl(a, c)) * fps;
        s += (vp - vg) * (vp - vg);
      }
    }
  }
  return s / static_cast<double>(L);
}

double naive_rot_key(const Matrix& pf, const Matrix& gf, const SkeletonSpec& skel, double fps) {
  std::vector<int> keys{skel.root};
  keys.insert(keys.end(), skel.feet.begin(), skel.feet.end());
  keys.insert(keys.end(), skel.hands.begin(), skel.hands.end());
  const Eigen::Index L = pf.rows();
  double s = 0.0;
  for (Eigen::Index i = 0; i < L; ++i) {
    const Eigen::Index a = i + 1 < L ? i : L - 2;
    for (int j : keys) {
      for (int k = 0; k < 6; ++k) {
        const int c = 6 * j + k;
        s += std::pow(pf(i, c) - gf(i, c), 2);
        const double vp = (pf(a + 1, c) - pf(a, c)) * fps, vg = (gf(a + 1, c) - gf(a, c)) * fps;
        s += (vp - vg) * (vp - vg);
      }
    }
  }
  return s / static_cast<double>(L);
}

}  // namespace

TEST_CASE("simple loss") {
  Rng rng(1);
  const Matrix a = rng.normal_matrix(5, 7), b = rng.normal_matrix(5, 7);
  CHECK(loss_simple(a, a) == 0.0);
  CHECK(loss_simple(Matrix(a.array() + 1.0), a) == doctest::Approx(1.0).epsilon(1e-14));
  double s = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 7; ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  }
  CHECK(std::abs(loss_simple(a, b) - s / 35.0) < 1e-12);
  CHECK_THROWS_AS(loss_simple(a, Matrix::Zero(5, 6)), ShapeError);
}

TEST_CASE("geometric losses match naive oracles") {
  for (const SkeletonSpec& skel : {SkeletonSpec::desk9(), SkeletonSpec::smpl24()}) {
    Rng rng(2);
    const double fps = 15.0;
    const MotionSequence gt{fps, random_motion(skel, 7, rng)};
    const MotionSequence pred{fps, random_motion(skel, 7, rng)};
    const Matrix gp = naive_positions(skel, gt.frames), pp = naive_positions(skel, pred.frames);
    CHECK((gp - joint_positions(skel, gt.frames)).cwiseAbs().maxCoeff() < 1e-12);
    const double all = naive_pos_all(pp, gp, skel.joint_count(), fps);
    CHECK(std::abs(loss_pos_all(pred, gt, skel) - all) < 1e-12 * std::max(1.0, all));
    const Matrix gl = naive_local_positions(skel, gt.frames);
    CHECK((gl - root_local_positions(skel, gt.frames)).cwiseAbs().maxCoeff() < 1e-12);
    const double key = naive_pos_key(naive_local_positions(skel, pred.frames), gl, skel, fps);
    CHECK(std::abs(loss_pos_key(pred, gt, skel) - key) < 1e-12 * std::max(1.0, key));
    const double rot = naive_rot_key(pred.frames, gt.frames, skel, fps);
    CHECK(std::abs(loss_rot_key(pred, gt, skel) - rot) < 1e-12 * std::max(1.0, rot));

    CHECK(loss_pos_all(gt, gt, skel) == 0.0);
    CHECK(loss_pos_key(gt, gt, skel) == 0.0);
    CHECK(loss_rot_key(gt, gt, skel) == 0.0);
  }
}

TEST_CASE("rigid translation only affects world positions") {
  const SkeletonSpec skel = SkeletonSpec::desk9();
  Rng rng(3);
  const MotionSequence gt{15.0, random_motion(skel, 6, rng)};
  MotionSequence moved = gt;
  moved.frames.rightCols(3).rowwise() += RowVector::Constant(3, 0.2);
  CHECK(std::abs(loss_pos_all(moved, gt, skel) - 0.04) < 1e-12);  // velocity term is zero
  CHECK(loss_rot_key(moved, gt, skel) == 0.0);
  CHECK(loss_pos_key(moved, gt, skel) == 0.0);
}

TEST_CASE("key-joint position loss: hand computation for a shifted foot") {
  const SkeletonSpec skel = SkeletonSpec::desk9();
  Rng rng(4);
  const Matrix gp = joint_positions(skel, random_motion(skel, 10, rng));
  Matrix pp = gp;
  const int foot = skel.feet[0];
  pp.col(3 * foot).array() += 0.1;
  // Every frame contributes 0.1² from the position; the velocity is unchanged.
  CHECK(std::abs(loss_pos_key_positions(pp, gp, skel, 60.0) - 0.01) < 1e-14);
  pp.col(3 * foot + 1).array() += 0.1;
  pp.col(3 * foot + 2).array() += 0.1;
  CHECK(std::abs(loss_pos_key_positions(pp, gp, skel, 60.0) - 0.03) < 1e-14);
}

TEST_CASE("key-joint losses ignore untagged joints' channels") {
  for (const SkeletonSpec& skel : {SkeletonSpec::desk9(), SkeletonSpec::smpl24()}) {
    Rng rng(5);
    const MotionSequence gt{60.0, random_motion(skel, 5, rng)};
    std::vector<bool> tagged(skel.joint_count(), false);
    tagged[skel.root] = true;
    for (int j : skel.feet) tagged[j] = true;
    for (int j : skel.hands) tagged[j] = true;

    for (int j = 0; j < skel.joint_count(); ++j) {
      if (tagged[j]) continue;
      // Moving an untagged joint that is not an ancestor of a tagged one
      // cannot change key-joint positions; rotation channels of any untagged
      // joint never enter the rotation loss.
      MotionSequence pert = gt;
      pert.frames.middleCols(6 * j, 6) = random_motion(skel, 5, rng).middleCols(6 * j, 6);
      CHECK(loss_rot_key(pert, gt, skel) == 0.0);
      bool ancestor = false;
      for (int k = 0; k < skel.joint_count(); ++k) {
        if (!tagged[k] || k == skel.root) continue;
        for (int p = skel.parent[k]; p >= 0; p = p == 0 ? -1 : skel.parent[p]) {
          if (p == j) ancestor = true;
        }
      }
      if (!ancestor) CHECK(loss_pos_key(pert, gt, skel) == 0.0);
      CHECK(loss_pos_all(pert, gt, skel) >= 0.0);

      const Matrix gl = root_local_positions(skel, gt.frames);
      Matrix pl = gl;
      pl.middleCols(3 * j, 3) += rng.normal_matrix(5, 3);
      CHECK(loss_pos_key_positions(pl, gl, skel, 60.0) == 0.0);
    }
  }
}

TEST_CASE("root rotation raises the rotation loss but not the key position loss") {
  const SkeletonSpec skel = SkeletonSpec::desk9();
  Rng rng(6);
  const MotionSequence gt{15.0, random_motion(skel, 5, rng)};
  MotionSequence pert = gt;
  pert.frames.leftCols(6) = random_motion(skel, 5, rng).leftCols(6);
  CHECK(loss_rot_key(pert, gt, skel) > 0.0);
  CHECK(loss_pos_key(pert, gt, skel) == 0.0);
  CHECK(loss_pos_all(pert, gt, skel) > 0.0);
}

TEST_CASE("dynamic weight") {
  CHECK(dynamic_weight(0, 1000, 0.1) == 1.0);
  CHECK(dynamic_weight(1000, 1000, 0.1) == 0.9);
  CHECK(dynamic_weight(500, 1000, 0.1) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(dynamic_weight(100, 100, 0.1) == 0.9);
  for (int t = 0; t < 100; ++t) {
    const double step = dynamic_weight(t + 1, 100, 0.3) - dynamic_weight(t, 100, 0.3);
    CHECK(step == doctest::Approx(-0.003).epsilon(1e-9));
  }
  CHECK_THROWS_AS(dynamic_weight(-1, 100, 0.1), DomainError);
  CHECK_THROWS_AS(dynamic_weight(101, 100, 0.1), DomainError);
  CHECK_THROWS_AS(dynamic_weight(5, 100, 1.5), DomainError);
}

TEST_CASE("total loss combines its terms") {
  const SkeletonSpec skel = SkeletonSpec::desk9();
  Rng rng(7);
  const Matrix gt = random_motion(skel, 6, rng);
  const Matrix pred = gt + 0.05 * rng.normal_matrix(6, skel.frame_width());
  LossWeights w;
  w.lambda1 = 0.7;
  w.lambda2 = 1.3;
  w.lambda3 = 0.4;
  const LossBreakdown b = total_loss(pred, gt, 37, 100, w, skel, 15.0);
  CHECK(b.lambda_t == doctest::Approx(1.0 - 0.1 * 0.37).epsilon(1e-15));
  CHECK(std::abs(b.total - (b.simple + b.lambda_t * (0.7 * b.pos_all + 1.3 * b.pos_key + 0.4 * b.rot_key))) < 1e-12);
  CHECK(b.simple == doctest::Approx(loss_simple(pred, gt)).epsilon(1e-14));
  CHECK(b.rot_key == doctest::Approx(loss_rot_key({15.0, pred}, {15.0, gt}, skel)).epsilon(1e-14));

  const LossBreakdown zero = total_loss(gt, gt, 37, 100, w, skel, 15.0);
  CHECK(zero.total == 0.0);
  w.lambda1 = w.lambda2 = w.lambda3 = 0.0;
  const LossBreakdown plain = total_loss(pred, gt, 37, 100, w, skel, 15.0);
  CHECK(plain.total == plain.simple);
  w.lambda1 = -1.0;
  CHECK_THROWS_AS(total_loss(pred, gt, 37, 100, w, skel, 15.0), DomainError);
}

TEST_CASE("losses are differentiable through forward kinematics") {
  const SkeletonSpec skel = SkeletonSpec::desk9();
  Rng rng(8);
  const Matrix gt = random_motion(skel, 5, rng);
  const Matrix pred = gt + 0.1 * rng.normal_matrix(5, skel.frame_width());
  const RowVector mean = 0.1 * rng.normal_matrix(1, skel.frame_width());
  const RowVector std = (rng.normal_matrix(1, skel.frame_width()).array().abs() + 0.5).matrix();
  const Matrix gt_norm = ((gt.rowwise() - mean).array().rowwise() / std.array()).matrix();
  const auto fn = [&](Tape& t, const std::vector<Var>& v) {
    return loss::total(t, v[0], gt_norm, 20, 100, LossWeights{}, skel, 15.0, mean, std).total;
  };
  CHECK(support::gradient_error(fn, {pred}) < 1e-6);
  const auto key = [&](Tape& t, const std::vector<Var>& v) {
    return loss::pos_key(loss::root_local_positions(v[0], skel), root_local_positions(skel, gt), skel, 60.0);
  };
  CHECK(support::gradient_error(key, {pred}) < 1e-6);
}
