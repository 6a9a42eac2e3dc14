#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "diffdance/core/adam.hpp"
#include "diffdance/core/autodiff.hpp"
#include "diffdance/core/params.hpp"
#include "diffdance/motion/sequence.hpp"

namespace diffdance {

struct Checkpoint;

inline constexpr int kEmbeddingDim = 512;
inline constexpr double kAlignFps = 30.0;
inline constexpr double kAlignSeconds = 6.0;

/// Frozen stand-in for the pretrained audio encoder: a fixed-seed random
/// two-layer tanh network over the synthetic audio feature.
class MusicEncoder {
 public:
  explicit MusicEncoder(std::uint64_t seed = 0x5EEDA0D10ULL);
  /// Throws ShapeError if the feature length is wrong.
  RowVector encode(const Vector& audio_feature) const;
  const ParamStore& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  ParamStore params_;
};

/// Frozen stand-in for the pretrained motion encoder: fixed-seed random
/// token projection, one self-attention block, then an attention pool and
/// per-second mean pools over 6 s of 30 fps motion.
class MotionEncoder {
 public:
  MotionEncoder(int frame_width, std::uint64_t seed = 0x5EED0D0CULL);
  /// Throws DomainError unless the clip is 30 fps and 180 frames long.
  RowVector encode(const MotionSequence& motion) const;
  const ParamStore& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

 private:
  RowVector sinusoidal_position(int i) const;

  std::uint64_t seed_;
  int frame_width_;
  ParamStore params_;
};

/// Trainable two-layer MLP (512 hidden, GELU) plus the log-temperature.
class Adapter {
 public:
  explicit Adapter(std::uint64_t seed = 0, double init_tau = 0.07);
  explicit Adapter(ParamStore params);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  double tau() const;

  /// [N, 512] -> [N, 512] on the tape with bound params.
  Var forward(Tape& tape, const std::vector<Var>& bound, Var music) const;
  Matrix forward(const Matrix& music) const;
  Var log_tau(const std::vector<Var>& bound) const { return bound[log_tau_]; }
  /// Keeps tau within [1e-3, 100].
  void clamp_tau();

 private:
  ParamStore params_;
  std::size_t w1_, b1_, w2_, b2_, log_tau_;
};

/// Cosine similarity of two nonzero vectors.
double cosine_similarity(const RowVector& a, const RowVector& b);

/// Symmetric InfoNCE: mean over rows of the music->dance and dance->music
/// cross-entropies of cosine similarities divided by tau, averaged.
/// Throws ShapeError for N < 2 or mismatched shapes, NumericError on a zero row.
Var infonce_loss(Var music, Var dance, Var log_tau);
double infonce_loss(const Matrix& music, const Matrix& dance, double tau);

struct AlignmentPair {
  Vector audio_feature;
  MotionSequence motion;  ///< 30 fps, 6 s
};

struct AlignmentTrainConfig {
  int epochs = 60;
  int batch = 32;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct AlignmentResult {
  Adapter adapter;
  std::vector<double> epoch_loss;
};

/// Trains only the adapter (and tau) with InfoNCE; encoder outputs are
/// computed once and the encoders are never modified. Throws DomainError on
/// an empty dataset.
AlignmentResult train_alignment(const MusicEncoder& music, const MotionEncoder& motion,
                                const std::vector<AlignmentPair>& pairs, const AlignmentTrainConfig& config);

/// Fraction of pairs whose adapted music embedding is closest (cosine) to
/// its own motion embedding among all motion embeddings.
double retrieval_recall_at1(const MusicEncoder& music, const MotionEncoder& motion, const Adapter& adapter,
                            const std::vector<AlignmentPair>& pairs);

/// Condition vector fed to the denoisers: adapted music embedding scaled to
/// unit RMS (norm sqrt(512)).
RowVector condition_embedding(const MusicEncoder& music, const Adapter& adapter, const Vector& audio_feature);

Checkpoint adapter_checkpoint(const Adapter& adapter, const MusicEncoder& music, const MotionEncoder& motion,
                              const std::optional<AdamState>& optimizer = std::nullopt);
Adapter adapter_from_checkpoint(const Checkpoint& ckpt);
MusicEncoder music_encoder_from_checkpoint(const Checkpoint& ckpt);

}  // namespace diffdance
