#include "diffdance/core/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"

namespace diffdance {

Matrix forward_difference(const Matrix& x, double scale) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw ShapeError("forward_difference: need at least 2 rows");
  Matrix out(n, x.cols());
  for (Eigen::Index i = 0; i + 1 < n; ++i) out.row(i) = (x.row(i + 1) - x.row(i)) * scale;
  out.row(n - 1) = out.row(n - 2);
  return out;
}

bool all_finite(const Matrix& x) { return x.allFinite(); }

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("Var::scalar on non-1x1 value");
  return v(0, 0);
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  if (!value.allFinite()) throw NumericError("leaf value is not finite");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.tape != this) throw std::logic_error("Tape::record: input from another tape");
      if (nodes_[v.id].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (!grad_enabled_) throw std::logic_error("Tape::backward on a no-grad tape");
  if (loss.tape != this) throw std::logic_error("Tape::backward: loss from another tape");
  if (nodes_[loss.id].value.size() != 1) throw ShapeError("backward: loss is not a scalar");
  for (Node& n : nodes_) n.has_grad = false;
  visits_ = 0;
  accumulate(loss.id, Matrix::Ones(1, 1));
  for (std::size_t k = loss.id + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.has_grad || !n.backward) continue;
    // Copy: the closure may grow other nodes' buffers but never this one.
    const Matrix g = n.grad;
    n.backward(*this, g);
    ++visits_;
  }
}

namespace ad {
namespace {

void check_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) throw NumericError(std::string(op) + ": non-finite output");
}

enum class Broadcast { Same, Row, Scalar };

Broadcast classify(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  throw ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                   std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                   std::to_string(b.cols()));
}

Matrix expand(const Matrix& b, Broadcast kind, Eigen::Index rows, Eigen::Index cols) {
  switch (kind) {
    case Broadcast::Same:
      return b;
    case Broadcast::Row:
      return b.replicate(rows, 1);
    case Broadcast::Scalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Matrix reduce(const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::Same:
      return g;
    case Broadcast::Row:
      return g.colwise().sum();
    case Broadcast::Scalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

Var unary(Var x, Matrix y, const char* op, Tape::BackwardFn fn) {
  check_finite(y, op);
  const Var in[] = {x};
  return x.tape->record(std::move(y), in, std::move(fn));
}

}  // namespace

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(av.cols()) + " vs " +
                     std::to_string(bv.rows()));
  }
  Matrix out = av * bv;
  check_finite(out, "matmul");
  const Var in[] = {a, b};
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), in, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  const Broadcast kind = classify(a.value(), b.value(), "add");
  Matrix out = a.value();
  switch (kind) {
    case Broadcast::Same: out += b.value(); break;
    case Broadcast::Row: out.rowwise() += b.value().row(0); break;
    case Broadcast::Scalar: out.array() += b.value()(0, 0); break;
  }
  check_finite(out, "add");
  const Var in[] = {a, b};
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), in, [ia, ib, kind](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, reduce(g, kind));
  });
}

Var sub(Var a, Var b) {
  const Broadcast kind = classify(a.value(), b.value(), "sub");
  Matrix out = a.value();
  switch (kind) {
    case Broadcast::Same: out -= b.value(); break;
    case Broadcast::Row: out.rowwise() -= b.value().row(0); break;
    case Broadcast::Scalar: out.array() -= b.value()(0, 0); break;
  }
  check_finite(out, "sub");
  const Var in[] = {a, b};
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), in, [ia, ib, kind](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, -reduce(g, kind));
  });
}

Var mul(Var a, Var b) {
  const Matrix& av = a.value();
  const Broadcast kind = classify(av, b.value(), "mul");
  Matrix out = av.cwiseProduct(expand(b.value(), kind, av.rows(), av.cols()));
  check_finite(out, "mul");
  const Var in[] = {a, b};
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), in, [ia, ib, kind](Tape& t, const Matrix& g) {
    const Matrix& a_val = t.value(ia);
    if (t.requires_grad(ia)) {
      t.accumulate(ia, g.cwiseProduct(expand(t.value(ib), kind, a_val.rows(), a_val.cols())));
    }
    if (t.requires_grad(ib)) t.accumulate(ib, reduce(g.cwiseProduct(a_val), kind));
  });
}

Var scale(Var a, double c) {
  const std::size_t ia = a.id;
  return unary(a, a.value() * c, "scale",
               [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, g * c); });
}

Var transpose(Var a) {
  const std::size_t ia = a.id;
  return unary(a, a.value().transpose(), "transpose",
               [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  return parts[0].tape->record(std::move(out), parts, [ids, widths](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.accumulate(ids[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> heights;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    ids.push_back(p.id);
    heights.push_back(p.rows());
  }
  return parts[0].tape->record(std::move(out), parts, [ids, heights](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.accumulate(ids[k], g.middleRows(off, heights[k]));
      off += heights[k];
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows()) throw ShapeError("slice_rows: out of range");
  const std::size_t ia = a.id;
  const Eigen::Index rows = av.rows();
  return unary(a, av.middleRows(start, count), "slice_rows",
               [ia, start, count, rows](Tape& t, const Matrix& g) {
                 Matrix full = Matrix::Zero(rows, g.cols());
                 full.middleRows(start, count) = g;
                 t.accumulate(ia, full);
               });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols()) throw ShapeError("slice_cols: out of range");
  const std::size_t ia = a.id;
  const Eigen::Index cols = av.cols();
  return unary(a, av.middleCols(start, count), "slice_cols",
               [ia, start, count, cols](Tape& t, const Matrix& g) {
                 Matrix full = Matrix::Zero(g.rows(), cols);
                 full.middleCols(start, count) = g;
                 t.accumulate(ia, full);
               });
}

Var select_cols(Var a, std::span<const int> cols) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] < 0 || cols[k] >= av.cols()) throw ShapeError("select_cols: index out of range");
    out.col(static_cast<Eigen::Index>(k)) = av.col(cols[k]);
  }
  const std::size_t ia = a.id;
  const Eigen::Index width = av.cols();
  std::vector<int> idx(cols.begin(), cols.end());
  return unary(a, std::move(out), "select_cols", [ia, width, idx](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(g.rows(), width);
    for (std::size_t k = 0; k < idx.size(); ++k) full.col(idx[k]) += g.col(static_cast<Eigen::Index>(k));
    t.accumulate(ia, full);
  });
}

Var softmax_rows(Var x) {
  const std::size_t ix = x.id;
  Matrix y = diffdance::softmax_rows(x.value());
  return unary(x, y, "softmax_rows", [ix, y](Tape& t, const Matrix& g) {
    Matrix dot = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(ix, y.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

Var log_softmax_rows(Var x) {
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double m = xv.row(r).maxCoeff();
    const double lse = m + std::log((xv.row(r).array() - m).exp().sum());
    y.row(r) = xv.row(r).array() - lse;
  }
  const std::size_t ix = x.id;
  return unary(x, std::move(y), "log_softmax_rows", [ix](Tape& t, const Matrix& g) {
    const Matrix p = diffdance::softmax_rows(t.value(ix));
    Matrix rowsum = g.rowwise().sum();
    t.accumulate(ix, g - p.cwiseProduct(rowsum.replicate(1, g.cols())));
  });
}

Var layernorm_rows(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layernorm_rows: gain/bias must be 1xN");
  }
  Matrix xhat(xv.rows(), n);
  Vector inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix y = xhat;
  y.array().rowwise() *= gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  check_finite(y, "layernorm_rows");
  const Var in[] = {x, gain, bias};
  const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->record(std::move(y), in,
                        [ix, ig, ib, xhat, inv_std](Tape& t, const Matrix& g) {
                          if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                          if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                          if (!t.requires_grad(ix)) return;
                          Matrix gxh = g;
                          gxh.array().rowwise() *= t.value(ig).row(0).array();
                          const double n_inv = 1.0 / static_cast<double>(g.cols());
                          Matrix gx(g.rows(), g.cols());
                          for (Eigen::Index r = 0; r < g.rows(); ++r) {
                            const double m1 = gxh.row(r).sum() * n_inv;
                            const double m2 = gxh.row(r).dot(xhat.row(r)) * n_inv;
                            gx.row(r) = (gxh.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
                          }
                          t.accumulate(ix, gx);
                        });
}

Var gelu(Var x) {
  const std::size_t ix = x.id;
  return unary(x, diffdance::gelu(x.value()), "gelu", [ix](Tape& t, const Matrix& g) {
    const Matrix& xv = t.value(ix);
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = xv.unaryExpr([&](double v) {
      return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
    });
    t.accumulate(ix, g.cwiseProduct(d));
  });
}

Var tanh(Var x) {
  Matrix y = x.value().array().tanh().matrix();
  const std::size_t ix = x.id;
  return unary(x, y, "tanh", [ix, y](Tape& t, const Matrix& g) {
    t.accumulate(ix, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var exp(Var x) {
  Matrix y = x.value().array().exp().matrix();
  const std::size_t ix = x.id;
  return unary(x, y, "exp", [ix, y](Tape& t, const Matrix& g) { t.accumulate(ix, g.cwiseProduct(y)); });
}

Var normalize_rows(Var x) {
  const Matrix& xv = x.value();
  Vector norms = xv.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0)) throw NumericError("normalize_rows: zero-norm row");
  }
  Matrix y = norms.cwiseInverse().asDiagonal() * xv;
  const std::size_t ix = x.id;
  return unary(x, y, "normalize_rows", [ix, y, norms](Tape& t, const Matrix& g) {
    Matrix gx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      gx.row(r) = (g.row(r) - y.row(r) * y.row(r).dot(g.row(r))) / norms(r);
    }
    t.accumulate(ix, gx);
  });
}

Var dropout(Var x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw DomainError("dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  const Matrix& xv = x.value();
  Matrix mask(xv.rows(), xv.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep;
  const std::size_t ix = x.id;
  return unary(x, xv.cwiseProduct(mask), "dropout",
               [ix, mask](Tape& t, const Matrix& g) { t.accumulate(ix, g.cwiseProduct(mask)); });
}

Var forward_difference(Var x, double scale) {
  const std::size_t ix = x.id;
  return unary(x, diffdance::forward_difference(x.value(), scale), "forward_difference",
               [ix, scale](Tape& t, const Matrix& g) {
                 const Eigen::Index n = g.rows();
                 Matrix gx = Matrix::Zero(n, g.cols());
                 for (Eigen::Index i = 0; i + 1 < n; ++i) {
                   gx.row(i + 1) += g.row(i) * scale;
                   gx.row(i) -= g.row(i) * scale;
                 }
                 // Last row duplicates the (n-2) difference.
                 gx.row(n - 1) += g.row(n - 1) * scale;
                 gx.row(n - 2) -= g.row(n - 1) * scale;
                 t.accumulate(ix, gx);
               });
}

Var sum(Var a) {
  const std::size_t ia = a.id;
  const Eigen::Index r = a.rows(), c = a.cols();
  return unary(a, Matrix::Constant(1, 1, a.value().sum()), "sum", [ia, r, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) {
  const std::size_t ia = a.id;
  const Eigen::Index r = a.rows(), c = a.cols();
  const double n = static_cast<double>(a.value().size());
  return unary(a, Matrix::Constant(1, 1, a.value().mean()), "mean",
               [ia, r, c, n](Tape& t, const Matrix& g) {
                 t.accumulate(ia, Matrix::Constant(r, c, g(0, 0) / n));
               });
}

Var sum_sq(Var a) {
  const std::size_t ia = a.id;
  return unary(a, Matrix::Constant(1, 1, a.value().squaredNorm()), "sum_sq",
               [ia](Tape& t, const Matrix& g) { t.accumulate(ia, t.value(ia) * (2.0 * g(0, 0))); });
}

Var mean_sq(Var a) {
  const std::size_t ia = a.id;
  const double n = static_cast<double>(a.value().size());
  return unary(a, Matrix::Constant(1, 1, a.value().squaredNorm() / n), "mean_sq",
               [ia, n](Tape& t, const Matrix& g) { t.accumulate(ia, t.value(ia) * (2.0 * g(0, 0) / n)); });
}

}  // namespace ad

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

Matrix layernorm_rows(const Matrix& x, const RowVector& gain, const RowVector& bias, double eps) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    y.row(r) = ((x.row(r).array() - mu) / std::sqrt(var + eps)) * gain.array() + bias.array();
  }
  return y;
}

Matrix gelu(const Matrix& x) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  return x.unaryExpr([&](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); });
}

}  // namespace diffdance
