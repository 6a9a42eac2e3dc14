#include "diffdance/core/adam.hpp"

#include <cmath>

#include "diffdance/core/error.hpp"

namespace diffdance {

AdamState AdamState::zeros_like(const ParamStore& params) {
  AdamState s;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& p = params.value(i);
    s.m.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.v.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

void adam_step(ParamStore& params, const std::vector<Matrix>& grads, AdamState& state,
               const AdamConfig& config) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw ShapeError("adam_step: parameter/gradient/state counts differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& p = params.value(i);
    const bool same = grads[i].rows() == p.rows() && grads[i].cols() == p.cols() &&
                      state.m[i].rows() == p.rows() && state.m[i].cols() == p.cols() &&
                      state.v[i].rows() == p.rows() && state.v[i].cols() == p.cols();
    if (!same) throw ShapeError("adam_step: shape mismatch for " + params.name(i));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    if (!params.trainable(i)) continue;
    Matrix& p = params.value(i);
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    const Matrix& g = grads[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    if (config.weight_decay != 0.0) p *= (1.0 - config.lr * config.weight_decay);
    p.array() -= config.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config.eps);
  }
}

}  // namespace diffdance
