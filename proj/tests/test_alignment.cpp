#include <doctest.h>

#include <cmath>

#include "diffdance/align/alignment.hpp"
#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"
#include "diffdance/model/checkpoint.hpp"
#include "diffdance/motion/skeleton.hpp"
#include "diffdance/pipeline/dataset.hpp"
#include "support.hpp"

using namespace diffdance;

namespace {

double naive_cosine(const RowVector& a, const RowVector& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    ab += a(k) * b(k);
    aa += a(k) * a(k);
    bb += b(k) * b(k);
  }
  return ab / std::sqrt(aa * bb);
}

/// Double-loop symmetric InfoNCE with long-double log-sum-exp.
double naive_infonce(const Matrix& m, const Matrix& d, double tau) {
  const Eigen::Index n = m.rows();
  long double total = 0.0L;
  for (int dir = 0; dir < 2; ++dir) {
    for (Eigen::Index i = 0; i < n; ++i) {
      long double denom = 0.0L;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double s = dir == 0 ? naive_cosine(m.row(i), d.row(j)) : naive_cosine(d.row(i), m.row(j));
        denom += std::exp(static_cast<long double>(s / tau));
      }
      const double own = naive_cosine(m.row(i), d.row(i)) / tau;
      total += -(static_cast<long double>(own) - std::log(denom));
    }
  }
  return static_cast<double>(total / (2.0L * n));
}

std::vector<AlignmentPair> pairs_from(const std::vector<SyntheticClip>& clips) {
  std::vector<AlignmentPair> out;
  for (const SyntheticClip& c : clips) out.push_back(alignment_pair(c));
  return out;
}

}  // namespace

TEST_CASE("cosine similarity") {
  Rng rng(1);
  const RowVector a = rng.normal_matrix(1, 512), b = rng.normal_matrix(1, 512);
  CHECK(std::abs(cosine_similarity(a, b) - naive_cosine(a, b)) < 1e-14);
  CHECK(std::abs(cosine_similarity(3.7 * a, b) - cosine_similarity(a, b)) < 1e-12);
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS(cosine_similarity(RowVector::Zero(512), b));
}

TEST_CASE("InfoNCE matches a naive double loop") {
  Rng rng(2);
  for (double tau : {0.07, 0.5, 2.0}) {
    const Matrix m = rng.normal_matrix(4, 512), d = rng.normal_matrix(4, 512);
    CHECK(std::abs(infonce_loss(m, d, tau) - naive_infonce(m, d, tau)) < 1e-12);
  }
}

TEST_CASE("InfoNCE equals log N for uniform similarities") {
  for (int n : {2, 8, 64}) {
    const Matrix ones = Matrix::Ones(n, 512);
    CHECK(std::abs(infonce_loss(ones, ones, 0.07) - std::log(static_cast<double>(n))) < 1e-9);
  }
  CHECK_THROWS_AS(infonce_loss(Matrix::Ones(1, 4), Matrix::Ones(1, 4), 0.1), ShapeError);
  CHECK_THROWS_AS(infonce_loss(Matrix::Ones(3, 4), Matrix::Ones(2, 4), 0.1), ShapeError);
  Matrix zero_row = Matrix::Ones(3, 4);
  zero_row.row(1).setZero();
  CHECK_THROWS_AS(infonce_loss(zero_row, Matrix::Ones(3, 4), 0.1), NumericError);
}

TEST_CASE("InfoNCE limits and monotonicity") {
  const Matrix eye = Matrix::Identity(8, 512);
  CHECK(infonce_loss(eye, eye, 1e-3) < 1e-12);
  Rng rng(3);
  Matrix m = rng.normal_matrix(6, 16), d = rng.normal_matrix(6, 16);
  const double before = infonce_loss(m, d, 0.2);
  // Pulling one matched pair together, everything else fixed, lowers the loss.
  d.row(2) = 0.5 * d.row(2) + 0.5 * m.row(2) * (d.row(2).norm() / m.row(2).norm());
  CHECK(infonce_loss(m, d, 0.2) < before);
}

TEST_CASE("InfoNCE gradient including the temperature") {
  Rng rng(4);
  const Matrix m = rng.normal_matrix(5, 12), d = rng.normal_matrix(5, 12);
  const Matrix log_tau = Matrix::Constant(1, 1, std::log(0.3));
  const auto fn = [](Tape&, const std::vector<Var>& v) { return infonce_loss(v[0], v[1], v[2]); };
  CHECK(support::gradient_error(fn, {m, d, log_tau}) < 1e-6);
}

TEST_CASE("frozen encoders are deterministic and 512-wide") {
  const SkeletonSpec skel = SkeletonSpec::desk9();
  const MusicEncoder music;
  const MotionEncoder motion(skel.frame_width());
  SyntheticParams p;
  p.duration_s = 6.0;
  p.tempo_bpm = 90.0;
  SyntheticParams q = p;
  q.tempo_bpm = 150.0;
  const RowVector e1 = music.encode(audio_feature(p));
  CHECK(e1.size() == kEmbeddingDim);
  CHECK(e1 == MusicEncoder().encode(audio_feature(p)));
  CHECK(e1 != music.encode(audio_feature(q)));
  CHECK_THROWS_AS(music.encode(Vector::Zero(5)), ShapeError);

  const AlignmentPair a = alignment_pair(generate_synthetic_clip(p, skel));
  const AlignmentPair b = alignment_pair(generate_synthetic_clip(q, skel));
  CHECK(a.motion.fps == kAlignFps);
  CHECK(a.motion.length() == 180);
  const RowVector m1 = motion.encode(a.motion);
  CHECK(m1.size() == kEmbeddingDim);
  CHECK(m1 == MotionEncoder(skel.frame_width()).encode(a.motion));
  CHECK(cosine_similarity(m1, motion.encode(b.motion)) < 0.999);
  CHECK_THROWS_AS(motion.encode(MotionSequence{60.0, a.motion.frames}), DomainError);
  CHECK_THROWS_AS(motion.encode(MotionSequence{30.0, a.motion.frames.topRows(100)}), DomainError);
}

TEST_CASE("adapter forward and gradient") {
  Adapter ad(5);
  CHECK(ad.tau() == doctest::Approx(0.07).epsilon(1e-14));
  Rng rng(6);
  const Matrix x = rng.normal_matrix(3, 512);
  CHECK(ad.forward(x).cols() == 512);
  CHECK(ad.forward(x).rows() == 3);

  Adapter zero(5);
  zero.params()["w1"].setZero();
  zero.params()["w2"].setZero();
  zero.params()["b2"] = rng.normal_matrix(1, 512);
  const Matrix out = zero.forward(x);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(out.row(i) == zero.params()["b2"].row(0));

  ParamStore& p = ad.params();
  const Matrix small = rng.normal_matrix(2, 512);
  const auto fn = [&](Tape& tape, const std::vector<Var>& v) {
    std::vector<Var> bound = p.bind(tape);
    bound[p.index_of("w2")] = v[0];
    bound[p.index_of("b1")] = v[1];
    return support::weighted_sum(tape, ad.forward(tape, bound, tape.constant(small)));
  };
  CHECK(support::directional_error(fn, {p["w2"], p["b1"]}, 20, 7, 1e-6) < 1e-6);

  p["log_tau"](0, 0) = 10.0;
  ad.clamp_tau();
  CHECK(ad.tau() == doctest::Approx(100.0).epsilon(1e-12));
  p["log_tau"](0, 0) = -20.0;
  ad.clamp_tau();
  CHECK(ad.tau() == doctest::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("alignment training keeps encoders frozen and learns") {
  const SkeletonSpec skel = SkeletonSpec::desk9();
  const MusicEncoder music;
  const MotionEncoder motion(skel.frame_width());
  const ParamStore music_before = music.params(), motion_before = motion.params();
  const auto train = pairs_from(generate_alignment_clips(192, 7, skel));
  const auto heldout = pairs_from(generate_alignment_clips(64, 8, skel));

  AlignmentTrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch = 32;
  cfg.seed = 9;
  const AlignmentResult r = train_alignment(music, motion, train, cfg);
  CHECK(music.params() == music_before);
  CHECK(motion.params() == motion_before);
  REQUIRE(r.epoch_loss.size() == 12);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  const double before = retrieval_recall_at1(music, motion, Adapter(cfg.seed), heldout);
  const double after = retrieval_recall_at1(music, motion, r.adapter, heldout);
  MESSAGE("recall@1 untrained " << before << ", trained " << after);
  CHECK(after > 2.0 / 64.0);

  const AlignmentResult again = train_alignment(music, motion, train, cfg);
  CHECK(again.adapter.params() == r.adapter.params());
  CHECK_THROWS_AS(train_alignment(music, motion, {}, cfg), DomainError);

  const RowVector c = condition_embedding(music, r.adapter, train[0].audio_feature);
  CHECK(c.norm() == doctest::Approx(std::sqrt(512.0)).epsilon(1e-12));
}

TEST_CASE("adapter checkpoint round trip") {
  const MusicEncoder music(42);
  const MotionEncoder motion(57, 43);
  Adapter ad(7);
  Rng rng(8);
  ad.params()["b1"] = rng.normal_matrix(1, 512);
  const Checkpoint ck = adapter_checkpoint(ad, music, motion);
  const Checkpoint back = decode_checkpoint(encode_checkpoint(ck));
  CHECK(adapter_from_checkpoint(back).params() == ad.params());
  CHECK(music_encoder_from_checkpoint(back).seed() == 42);
  CHECK(music_encoder_from_checkpoint(back).params() == music.params());
  Checkpoint wrong = back;
  wrong.config["kind"] = "m2d";
  CHECK_THROWS(adapter_from_checkpoint(wrong));
}
