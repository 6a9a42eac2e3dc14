#include "diffdance/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "diffdance/core/error.hpp"
#include "diffdance/motion/kinematics.hpp"

namespace diffdance {

namespace {

void require_frames(const MotionSequence& seq, Eigen::Index n, const char* what) {
  if (seq.length() < n) throw DomainError(std::string(what) + ": clip too short");
}

Eigen::Vector3d joint_at(const Matrix& pos, Eigen::Index i, int j) {
  return Eigen::Vector3d(pos(i, 3 * j), pos(i, 3 * j + 1), pos(i, 3 * j + 2));
}

}  // namespace

Vector kinetic_features(const MotionSequence& seq, const SkeletonSpec& skel) {
  require_frames(seq, 3, "kinetic_features");
  const Matrix pos = joint_positions(skel, seq.frames);
  const Eigen::Index n = pos.rows();
  const int joints = skel.joint_count();
  const Matrix vel = (pos.bottomRows(n - 1) - pos.topRows(n - 1)) * seq.fps;
  const Matrix acc = (vel.bottomRows(n - 2) - vel.topRows(n - 2)) * seq.fps;
  Vector f(3 * joints);
  for (int j = 0; j < joints; ++j) {
    const auto vx = vel.col(3 * j).array(), vy = vel.col(3 * j + 1).array(), vz = vel.col(3 * j + 2).array();
    f(3 * j) = (vx.square() + vz.square()).mean();
    f(3 * j + 1) = vy.square().mean();
    f(3 * j + 2) = acc.middleCols(3 * j, 3).rowwise().squaredNorm().mean();
  }
  return f;
}

int geometric_feature_count(const SkeletonSpec& skel) {
  return 2 * static_cast<int>(skel.feet.size()) + 3 * static_cast<int>(skel.hands.size()) +
         (skel.hands.size() >= 2 ? 1 : 0);
}

Vector geometric_features(const MotionSequence& seq, const SkeletonSpec& skel, const GeometricThresholds& th) {
  require_frames(seq, 1, "geometric_features");
  const Matrix pos = joint_positions(skel, seq.frames);
  Vector f = Vector::Zero(geometric_feature_count(skel));
  for (Eigen::Index i = 0; i < pos.rows(); ++i) {
    const Eigen::Vector3d root = joint_at(pos, i, skel.root);
    double lowest = std::numeric_limits<double>::infinity();
    for (int j : skel.feet) lowest = std::min(lowest, pos(i, 3 * j + 1));
    int k = 0;
    for (int j : skel.feet) {
      const Eigen::Vector3d p = joint_at(pos, i, j);
      f(k++) += p.y() > lowest + th.foot_lift;
      f(k++) += p.z() > root.z() + th.foot_forward;
    }
    for (int j : skel.hands) {
      const Eigen::Vector3d p = joint_at(pos, i, j);
      f(k++) += p.y() > root.y();
      f(k++) += (p - root).norm() > th.hand_extended;
      f(k++) += p.z() > root.z() + th.hand_forward;
    }
    if (skel.hands.size() >= 2) {
      const int a = skel.hands[skel.hands.size() - 2], b = skel.hands.back();
      f(k++) += (joint_at(pos, i, a) - joint_at(pos, i, b)).norm() < th.hands_close;
    }
  }
  return f / static_cast<double>(pos.rows());
}

GaussianStats gaussian_stats(const Matrix& features) {
  if (features.rows() == 0) throw DomainError("gaussian_stats: empty feature set");
  GaussianStats s;
  s.mean = features.colwise().mean().transpose();
  const Matrix centred = features.rowwise() - s.mean.transpose();
  if (features.rows() < 2) {
    s.cov = Matrix::Zero(features.cols(), features.cols());
  } else {
    s.cov = centred.transpose() * centred / static_cast<double>(features.rows() - 1);
  }
  return s;
}

namespace {

// Symmetric PSD square root. Eigenvalues below the rounding floor of the
// decomposition are treated as zero; negative ones beyond 1e-10 (relative to
// the largest eigenvalue once that exceeds 1) mean the input was not a
// covariance.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("frechet_distance: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  const double floor = static_cast<double>(ev.size()) * std::numeric_limits<double>::epsilon() * scale;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-10 * scale) throw NumericError("frechet_distance: matrix is not positive semidefinite");
    ev(i) = ev(i) <= floor ? 0.0 : std::sqrt(ev(i));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  const Eigen::MatrixXd sa = a.cov, sb = b.cov;
  // tr sqrt(Ra Sb Ra) is the nuclear norm of Ra Rb; taking singular values
  // of the product avoids squaring the spectrum and losing small directions.
  const Eigen::MatrixXd ra = psd_sqrt(sa), rb = psd_sqrt(sb);
  const double cross = Eigen::JacobiSVD<Eigen::MatrixXd>(ra * rb).singularValues().sum();
  return (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * cross;
}

double diversity(const Matrix& features) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw DomainError("diversity: need at least 2 feature vectors");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) total += (features.row(i) - features.row(j)).norm();
  }
  return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

Vector kinetic_velocity(const MotionSequence& seq, const SkeletonSpec& skel, int smooth_window) {
  require_frames(seq, 3, "kinetic_velocity");
  if (smooth_window < 1 || smooth_window % 2 == 0) throw DomainError("kinetic_velocity: window must be odd");
  // With the root translation removed, FK yields root-relative positions
  // directly, so pure translation leaves no rounding residue.
  Matrix frames = seq.frames;
  frames.rightCols(3).setZero();
  const Matrix pos = joint_positions(skel, frames);
  const int joints = skel.joint_count();
  const Eigen::Index n = pos.rows();
  const Matrix rel = pos.rightCols(3 * (joints - 1));
  // Central differences place speed sample i at time i / fps; the ends fall
  // back to one-sided differences.
  Matrix vel(n, rel.cols());
  vel.row(0) = (rel.row(1) - rel.row(0)) * seq.fps;
  vel.row(n - 1) = (rel.row(n - 1) - rel.row(n - 2)) * seq.fps;
  for (Eigen::Index i = 1; i + 1 < n; ++i) vel.row(i) = (rel.row(i + 1) - rel.row(i - 1)) * (0.5 * seq.fps);
  Vector raw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < vel.cols(); c += 3) s += vel.row(i).segment(c, 3).norm();
    raw(i) = s;
  }
  if (smooth_window == 1) return raw;
  const Eigen::Index half = smooth_window / 2;
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - half), hi = std::min(n - 1, i + half);
    out(i) = raw.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

std::vector<double> local_minima(const Vector& k) {
  std::vector<double> out;
  const Eigen::Index n = k.size();
  Eigen::Index i = 1;
  while (i < n - 1) {
    if (!(k(i) < k(i - 1))) {
      ++i;
      continue;
    }
    Eigen::Index end = i;
    while (end + 1 < n && k(end + 1) == k(i)) ++end;
    if (end + 1 < n && k(end + 1) > k(i)) out.push_back(0.5 * static_cast<double>(i + end));
    i = end + 1;
  }
  return out;
}

BeatGrid extract_dance_beats(const MotionSequence& seq, const SkeletonSpec& skel) {
  BeatGrid g;
  g.duration = seq.duration();
  for (double i : local_minima(kinetic_velocity(seq, skel))) g.times.push_back(i / seq.fps);
  return g;
}

double beat_align_score(const BeatGrid& dance, const BeatGrid& music, double sigma_frames, double fps) {
  if (music.times.empty()) throw DomainError("beat_align_score: no music beats");
  if (!(sigma_frames > 0.0) || !(fps > 0.0)) throw DomainError("beat_align_score: sigma and fps must be positive");
  if (dance.times.empty()) return 0.0;
  const double sigma = sigma_frames / fps;
  double total = 0.0;
  for (double m : music.times) {
    double best = std::numeric_limits<double>::infinity();
    for (double d : dance.times) best = std::min(best, std::abs(d - m));
    total += std::exp(-best * best / (2.0 * sigma * sigma));
  }
  return total / static_cast<double>(music.times.size());
}

EvalReport evaluate_suite(const std::vector<EvalClip>& generated, const std::vector<EvalClip>& reference,
                          const SkeletonSpec& skel, double sigma_frames) {
  if (generated.empty() || reference.empty()) throw DomainError("evaluate_suite: empty clip set");
  auto features = [&](const std::vector<EvalClip>& clips, bool kinetic) {
    const int d = kinetic ? 3 * skel.joint_count() : geometric_feature_count(skel);
    Matrix f(static_cast<Eigen::Index>(clips.size()), d);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      f.row(static_cast<Eigen::Index>(i)) =
          (kinetic ? kinetic_features(clips[i].motion, skel) : geometric_features(clips[i].motion, skel)).transpose();
    }
    return f;
  };
  const Matrix gk = features(generated, true), gg = features(generated, false);
  const Matrix rk = features(reference, true), rg = features(reference, false);

  EvalReport r;
  r.clips = static_cast<int>(generated.size());
  r.fid_k = frechet_distance(gaussian_stats(gk), gaussian_stats(rk));
  r.fid_g = frechet_distance(gaussian_stats(gg), gaussian_stats(rg));
  r.div_k = generated.size() >= 2 ? diversity(gk) : 0.0;
  r.div_g = generated.size() >= 2 ? diversity(gg) : 0.0;
  double bas = 0.0;
  for (const EvalClip& c : generated) {
    bas += beat_align_score(extract_dance_beats(c.motion, skel), c.music_beats, sigma_frames, c.motion.fps);
  }
  r.bas = bas / static_cast<double>(generated.size());
  return r;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["fid_k"] = r.fid_k;
  j["fid_g"] = r.fid_g;
  j["div_k"] = r.div_k;
  j["div_g"] = r.div_g;
  j["bas"] = r.bas;
  j["clips"] = r.clips;
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    EvalReport r;
    for (auto [key, field] : {std::pair{"fid_k", &r.fid_k}, std::pair{"fid_g", &r.fid_g},
                              std::pair{"div_k", &r.div_k}, std::pair{"div_g", &r.div_g}, std::pair{"bas", &r.bas}}) {
      if (!j.at(key).is_number()) throw FormatError(std::string("report: ") + key + " is not a number");
      *field = j.at(key).get<double>();
    }
    if (!j.at("clips").is_number_integer()) throw FormatError("report: clips is not an integer");
    r.clips = j.at("clips").get<int>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

}  // namespace diffdance
