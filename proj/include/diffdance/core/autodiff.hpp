#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "diffdance/core/tensor.hpp"

namespace diffdance {

class Rng;
class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 var.
  double scalar() const;
};

/// Define-by-run reverse-mode tape. Each primitive appends one node holding
/// its output and a closure that pushes the output gradient to its inputs.
/// A tape is single-threaded; independent tapes may live on separate threads.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  /// With `grad_enabled == false` no closures are stored and backward() is
  /// unavailable; used for inference.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  /// Appends an op output. `fn` runs only if some input requires grad.
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn fn);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Accumulated gradient; a zero matrix if nothing reached the node.
  Matrix grad(Var v) const;
  /// Adds `g` into the gradient buffer of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Matrix& g);

  /// Replays the tape in reverse from a 1x1 loss. Each op runs at most once.
  void backward(Var loss);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  /// Number of op closures run by the last backward().
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
  std::size_t visits_ = 0;
};

namespace ad {

/// Standard matrix product; throws ShapeError if inner dims differ.
Var matmul(Var a, Var b);

// Elementwise binary ops. `b` may match `a`, be a 1xN row broadcast over
// rows, or be 1x1 broadcast over everything.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var a, double c);
Var transpose(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// Gathers the listed columns in order.
Var select_cols(Var a, std::span<const int> cols);

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
/// Row-wise layer norm; gain and bias are 1xN.
Var layernorm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
/// Exact (erf) GELU.
Var gelu(Var x);
Var tanh(Var x);
Var exp(Var x);
/// Rows scaled to unit L2 norm; throws NumericError on a zero row.
Var normalize_rows(Var x);
/// Inverted dropout; identity when p == 0.
Var dropout(Var x, double p, Rng& rng);
/// Row forward differences (see diffdance::forward_difference).
Var forward_difference(Var x, double scale);

Var sum(Var a);
Var mean(Var a);
Var sum_sq(Var a);
Var mean_sq(Var a);

}  // namespace ad

// Plain-matrix counterparts used by inference and tests.
Matrix softmax_rows(const Matrix& x);
Matrix layernorm_rows(const Matrix& x, const RowVector& gain, const RowVector& bias,
                      double eps = 1e-5);
Matrix gelu(const Matrix& x);

}  // namespace diffdance
