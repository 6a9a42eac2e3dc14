#pragma once

#include <algorithm>
#include <atomic>
#include <unistd.h>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "diffdance/core/autodiff.hpp"
#include "diffdance/core/rng.hpp"

namespace support {

using diffdance::Matrix;
using diffdance::Tape;
using diffdance::Var;

/// Builds a scalar from leaves bound to `inputs`.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Reduces a matrix-valued result to a scalar with fixed random weights so
/// every output entry contributes a distinct amount to the gradient.
inline Var weighted_sum(Tape& tape, Var out, std::uint64_t seed = 99) {
  diffdance::Rng rng(seed);
  return diffdance::ad::sum(diffdance::ad::mul(out, tape.constant(rng.normal_matrix(out.rows(), out.cols()))));
}

inline double evaluate(const ScalarFn& f, const std::vector<Matrix>& inputs) {
  Tape tape(false);
  std::vector<Var> leaves;
  for (const Matrix& m : inputs) leaves.push_back(tape.constant(m));
  return f(tape, leaves).scalar();
}

/// Largest norm-relative gap between the tape gradient and central finite
/// differences, over all inputs: ‖g_ad − g_fd‖ / max(‖g_ad‖ + ‖g_fd‖, 1e-12).
inline double gradient_error(const ScalarFn& f, const std::vector<Matrix>& inputs, double h = 1e-6) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
  tape.backward(f(tape, leaves));
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix ga = tape.grad(leaves[k]);
    Matrix gn(ga.rows(), ga.cols());
    for (Eigen::Index i = 0; i < ga.size(); ++i) {
      std::vector<Matrix> plus = inputs, minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      gn.data()[i] = (evaluate(f, plus) - evaluate(f, minus)) / (2.0 * h);
    }
    worst = std::max(worst, (ga - gn).norm() / std::max(ga.norm() + gn.norm(), 1e-12));
  }
  return worst;
}

/// Worst relative gap between the analytic directional derivative g·d and
/// its central difference, over `directions` random unit directions spanning
/// all inputs at once. `f` evaluates the scalar for given input values on a
/// tape; gradients are taken with respect to every input.
inline double directional_error(const ScalarFn& f, const std::vector<Matrix>& inputs, int directions,
                                std::uint64_t seed, double h = 1e-5) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
  tape.backward(f(tape, leaves));
  std::vector<Matrix> grads;
  for (const Var& v : leaves) grads.push_back(tape.grad(v));

  diffdance::Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < directions; ++k) {
    std::vector<Matrix> dir;
    double norm2 = 0.0;
    for (const Matrix& m : inputs) {
      dir.push_back(rng.normal_matrix(m.rows(), m.cols()));
      norm2 += dir.back().squaredNorm();
    }
    double analytic = 0.0;
    std::vector<Matrix> plus = inputs, minus = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      dir[i] /= std::sqrt(norm2);
      analytic += grads[i].cwiseProduct(dir[i]).sum();
      plus[i] += h * dir[i];
      minus[i] -= h * dir[i];
    }
    const double numeric = (evaluate(f, plus) - evaluate(f, minus)) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-12));
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("diffdance_test_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
