#include "diffdance/align/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"
#include "diffdance/model/checkpoint.hpp"
#include "diffdance/motion/synthetic.hpp"

namespace diffdance {

namespace {
constexpr int kMusicHidden = 256;
constexpr int kMotionHidden = 128;
constexpr int kMotionSegments = 6;
constexpr double kMinTau = 1e-3;
constexpr double kMaxTau = 100.0;
}  // namespace

MusicEncoder::MusicEncoder(std::uint64_t seed) : seed_(seed) {
  Rng rng(seed);
  params_.add("w1", rng.normal_matrix(kAudioFeatureDim, kMusicHidden) / std::sqrt(double(kAudioFeatureDim)), false);
  params_.add("b1", rng.normal_matrix(1, kMusicHidden) * 0.1, false);
  params_.add("w2", rng.normal_matrix(kMusicHidden, kEmbeddingDim) / std::sqrt(double(kMusicHidden)), false);
}

RowVector MusicEncoder::encode(const Vector& f) const {
  if (f.size() != kAudioFeatureDim) throw ShapeError("music encoder: wrong feature length");
  RowVector h = (f.transpose() * params_["w1"] + params_["b1"]).array().tanh().matrix();
  return h * params_["w2"];
}

MotionEncoder::MotionEncoder(int frame_width, std::uint64_t seed) : seed_(seed), frame_width_(frame_width) {
  Rng rng(seed);
  const int in = 2 * frame_width;
  params_.add("w_in", rng.normal_matrix(in, kMotionHidden) / std::sqrt(double(in)), false);
  params_.add("b_in", rng.normal_matrix(1, kMotionHidden) * 0.1, false);
  params_.add("w_qkv", rng.normal_matrix(kMotionHidden, 3 * kMotionHidden) / std::sqrt(double(kMotionHidden)), false);
  params_.add("query", rng.normal_matrix(1, kMotionHidden), false);
  const int pooled = (1 + kMotionSegments) * kMotionHidden;
  params_.add("w_out", rng.normal_matrix(pooled, kEmbeddingDim) / std::sqrt(double(pooled)), false);
}

RowVector MotionEncoder::encode(const MotionSequence& motion) const {
  const Eigen::Index frames = static_cast<Eigen::Index>(std::llround(kAlignFps * kAlignSeconds));
  if (motion.fps != kAlignFps || motion.length() != frames) {
    throw DomainError("motion encoder: expects 6 s of 30 fps motion");
  }
  if (motion.frames.cols() != frame_width_) throw ShapeError("motion encoder: frame width mismatch");
  Matrix feat(frames, 2 * frame_width_);
  feat.leftCols(frame_width_) = motion.frames;
  // Velocities in units of change per 1/10 s keep both halves comparable.
  feat.rightCols(frame_width_) = forward_difference(motion.frames, kAlignFps / 10.0);
  Matrix tok = feat * params_["w_in"];
  tok.rowwise() += params_["b_in"].row(0);
  tok = tok.array().tanh().matrix();
  for (Eigen::Index i = 0; i < frames; ++i) tok.row(i) += 0.5 * sinusoidal_position(static_cast<int>(i));

  const Matrix qkv = tok * params_["w_qkv"];
  const Matrix q = qkv.leftCols(kMotionHidden);
  const Matrix k = qkv.middleCols(kMotionHidden, kMotionHidden);
  const Matrix v = qkv.rightCols(kMotionHidden);
  const Matrix att = softmax_rows(q * k.transpose() / std::sqrt(double(kMotionHidden)));
  const Matrix h = tok + att * v;

  const Matrix pool_w = softmax_rows(params_["query"] * h.transpose() / std::sqrt(double(kMotionHidden)));
  // Attention pool plus one mean per 1 s segment, which keeps the timing of
  // the movement inside the clip.
  RowVector pooled((1 + kMotionSegments) * kMotionHidden);
  pooled.head(kMotionHidden) = pool_w * h;
  const Eigen::Index seg = frames / kMotionSegments;
  for (int k = 0; k < kMotionSegments; ++k) {
    pooled.segment((1 + k) * kMotionHidden, kMotionHidden) = h.middleRows(k * seg, seg).colwise().mean();
  }
  return pooled * params_["w_out"];
}

RowVector MotionEncoder::sinusoidal_position(int i) const {
  RowVector e(kMotionHidden);
  const int half = kMotionHidden / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    e(k) = std::sin(i * freq);
    e(half + k) = std::cos(i * freq);
  }
  return e;
}

Adapter::Adapter(std::uint64_t seed, double init_tau) {
  Rng rng(seed);
  params_.add("w1", xavier_uniform(kEmbeddingDim, kEmbeddingDim, rng));
  params_.add("b1", Matrix::Zero(1, kEmbeddingDim));
  params_.add("w2", xavier_uniform(kEmbeddingDim, kEmbeddingDim, rng));
  params_.add("b2", Matrix::Zero(1, kEmbeddingDim));
  params_.add("log_tau", Matrix::Constant(1, 1, std::log(init_tau)));
  w1_ = 0;
  b1_ = 1;
  w2_ = 2;
  b2_ = 3;
  log_tau_ = 4;
}

Adapter::Adapter(ParamStore params) : params_(std::move(params)) {
  w1_ = params_.index_of("w1");
  b1_ = params_.index_of("b1");
  w2_ = params_.index_of("w2");
  b2_ = params_.index_of("b2");
  log_tau_ = params_.index_of("log_tau");
  if (params_.value(w1_).rows() != kEmbeddingDim || params_.value(w2_).cols() != kEmbeddingDim) {
    throw ShapeError("adapter: parameter shapes do not match the embedding width");
  }
}

double Adapter::tau() const { return std::exp(params_.value(log_tau_)(0, 0)); }

void Adapter::clamp_tau() {
  double& lt = params_.value(log_tau_)(0, 0);
  lt = std::clamp(lt, std::log(kMinTau), std::log(kMaxTau));
}

Var Adapter::forward(Tape&, const std::vector<Var>& b, Var music) const {
  if (music.cols() != kEmbeddingDim) throw ShapeError("adapter: input width must be 512");
  Var h = ad::gelu(ad::add(ad::matmul(music, b[w1_]), b[b1_]));
  return ad::add(ad::matmul(h, b[w2_]), b[b2_]);
}

Matrix Adapter::forward(const Matrix& music) const {
  Tape tape(false);
  const std::vector<Var> bound = params_.bind(tape);
  return forward(tape, bound, tape.constant(music)).value();
}

double cosine_similarity(const RowVector& a, const RowVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0 && nb > 0.0)) throw NumericError("cosine_similarity: zero vector");
  return a.dot(b) / (na * nb);
}

Var infonce_loss(Var music, Var dance, Var log_tau) {
  if (music.rows() != dance.rows() || music.cols() != dance.cols()) throw ShapeError("infonce: batch shapes differ");
  if (music.rows() < 2) throw ShapeError("infonce: need at least 2 pairs");
  Tape& tape = *music.tape;
  const Eigen::Index n = music.rows();
  Var sims = ad::matmul(ad::normalize_rows(music), ad::transpose(ad::normalize_rows(dance)));
  Var logits = ad::mul(sims, ad::exp(ad::scale(log_tau, -1.0)));
  Var eye = tape.constant(Matrix::Identity(n, n));
  Var m2d = ad::sum(ad::mul(ad::log_softmax_rows(logits), eye));
  Var d2m = ad::sum(ad::mul(ad::log_softmax_rows(ad::transpose(logits)), eye));
  return ad::scale(ad::add(m2d, d2m), -0.5 / static_cast<double>(n));
}

double infonce_loss(const Matrix& music, const Matrix& dance, double tau) {
  if (!(tau > 0.0)) throw DomainError("infonce: tau must be positive");
  Tape tape(false);
  return infonce_loss(tape.constant(music), tape.constant(dance), tape.constant(Matrix::Constant(1, 1, std::log(tau))))
      .scalar();
}

AlignmentResult train_alignment(const MusicEncoder& music, const MotionEncoder& motion,
                                const std::vector<AlignmentPair>& pairs, const AlignmentTrainConfig& config) {
  if (pairs.empty()) throw DomainError("train_alignment: empty dataset");
  if (pairs.size() < 2) throw DomainError("train_alignment: need at least 2 pairs");
  const Eigen::Index n = static_cast<Eigen::Index>(pairs.size());
  Matrix m(n, kEmbeddingDim), d(n, kEmbeddingDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.row(i) = music.encode(pairs[i].audio_feature);
    d.row(i) = motion.encode(pairs[i].motion);
  }

  AlignmentResult result{Adapter(config.seed), {}};
  Adapter& adapter = result.adapter;
  AdamState state = AdamState::zeros_like(adapter.params());
  AdamConfig adam{.lr = config.lr, .weight_decay = config.weight_decay};
  Rng rng(mix64(config.seed ^ 0xA119ULL));
  std::vector<Eigen::Index> order(n);
  const Eigen::Index batch = std::max<Eigen::Index>(2, std::min<Eigen::Index>(config.batch, n));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (Eigen::Index i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    double total = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start + batch <= n; start += batch) {
      Matrix mb(batch, kEmbeddingDim), db(batch, kEmbeddingDim);
      for (Eigen::Index k = 0; k < batch; ++k) {
        mb.row(k) = m.row(order[start + k]);
        db.row(k) = d.row(order[start + k]);
      }
      Tape tape;
      const std::vector<Var> bound = adapter.params().bind(tape);
      Var out = adapter.forward(tape, bound, tape.constant(mb));
      Var loss = infonce_loss(out, tape.constant(db), adapter.log_tau(bound));
      tape.backward(loss);
      adam_step(adapter.params(), adapter.params().gradients(tape, bound), state, adam);
      adapter.clamp_tau();
      total += loss.scalar();
      ++batches;
    }
    result.epoch_loss.push_back(total / std::max(1, batches));
  }
  return result;
}

double retrieval_recall_at1(const MusicEncoder& music, const MotionEncoder& motion, const Adapter& adapter,
                            const std::vector<AlignmentPair>& pairs) {
  if (pairs.empty()) throw DomainError("retrieval: empty set");
  const Eigen::Index n = static_cast<Eigen::Index>(pairs.size());
  Matrix m(n, kEmbeddingDim), d(n, kEmbeddingDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.row(i) = music.encode(pairs[i].audio_feature);
    d.row(i) = motion.encode(pairs[i].motion);
  }
  const Matrix a = adapter.forward(m);
  int hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double best_sim = -2.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double s = cosine_similarity(a.row(i), d.row(j));
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

RowVector condition_embedding(const MusicEncoder& music, const Adapter& adapter, const Vector& audio_feature) {
  const RowVector a = adapter.forward(Matrix(music.encode(audio_feature))).row(0);
  const double norm = a.norm();
  if (!(norm > 0.0)) throw NumericError("condition_embedding: zero adapter output");
  return a * (std::sqrt(static_cast<double>(kEmbeddingDim)) / norm);
}

Checkpoint adapter_checkpoint(const Adapter& adapter, const MusicEncoder& music, const MotionEncoder& motion,
                              const std::optional<AdamState>& optimizer) {
  Checkpoint c;
  c.config["kind"] = "adapter";
  c.config["music_encoder_seed"] = std::to_string(music.seed());
  c.config["motion_encoder_seed"] = std::to_string(motion.seed());
  c.params = adapter.params();
  c.optimizer = optimizer;
  return c;
}

Adapter adapter_from_checkpoint(const Checkpoint& ckpt) {
  auto it = ckpt.config.find("kind");
  if (it == ckpt.config.end() || it->second != "adapter") throw FormatError("checkpoint is not an adapter");
  return Adapter(ckpt.params);
}

MusicEncoder music_encoder_from_checkpoint(const Checkpoint& ckpt) {
  auto it = ckpt.config.find("music_encoder_seed");
  if (it == ckpt.config.end()) throw FormatError("adapter checkpoint: missing music_encoder_seed");
  return MusicEncoder(std::stoull(it->second));
}

}  // namespace diffdance
