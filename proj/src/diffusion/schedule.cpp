#include "diffdance/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"

namespace diffdance {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "cosine") return ScheduleKind::Cosine;
  throw DomainError("unknown schedule kind '" + name + "'");
}

namespace {

NoiseSchedule from_betas(const std::vector<double>& betas) {
  NoiseSchedule s;
  const std::size_t n = betas.size();
  s.beta.assign(n + 1, 0.0);
  s.alpha.assign(n + 1, 1.0);
  s.alpha_bar.assign(n + 1, 1.0);
  s.model_t.resize(n + 1);
  for (std::size_t t = 0; t <= n; ++t) s.model_t[t] = static_cast<int>(t);
  for (std::size_t t = 1; t <= n; ++t) {
    s.beta[t] = betas[t - 1];
    s.alpha[t] = 1.0 - betas[t - 1];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

void check_t(int t, const NoiseSchedule& sched, int lo, const char* op) {
  if (t < lo || t > sched.steps()) {
    throw DomainError(std::string(op) + ": timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                      ", " + std::to_string(sched.steps()) + "]");
  }
}

void check_same(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

NoiseSchedule NoiseSchedule::build(int T, ScheduleKind kind) {
  if (T < 2) throw DomainError("noise schedule: T must be >= 2");
  std::vector<double> betas(T);
  if (kind == ScheduleKind::Linear) {
    const double scale = 1000.0 / static_cast<double>(T);
    const double lo = 1e-4 * scale;
    const double hi = std::min(0.02 * scale, 0.999);
    for (int i = 0; i < T; ++i) betas[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(T - 1);
  } else {
    constexpr double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int i = 0; i < T; ++i) {
      betas[i] = std::min(1.0 - f(i + 1.0) / f(static_cast<double>(i)), 0.999);
    }
  }
  return from_betas(betas);
}

NoiseSchedule NoiseSchedule::respaced(int count) const {
  const int T = steps();
  if (count < 1 || count > T) throw DomainError("respaced: step count outside [1, T]");
  std::vector<int> picks(count);
  for (int k = 0; k < count; ++k) {
    picks[k] = count == 1 ? T
                          : 1 + static_cast<int>(std::llround(static_cast<double>(k) * (T - 1) / (count - 1)));
  }
  std::vector<double> betas(count);
  double prev = 1.0;
  for (int k = 0; k < count; ++k) {
    const double ab = alpha_bar[picks[k]];
    betas[k] = 1.0 - ab / prev;
    prev = ab;
  }
  NoiseSchedule s = from_betas(betas);
  // Keep the exact original marginals rather than re-multiplied ones.
  for (int k = 0; k < count; ++k) {
    s.alpha_bar[k + 1] = alpha_bar[picks[k]];
    s.model_t[k + 1] = model_t[picks[k]];
  }
  return s;
}

Matrix q_sample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& sched) {
  check_t(t, sched, 0, "q_sample");
  check_same(x0, eps, "q_sample");
  if (t == 0) return x0;
  const double ab = sched.alpha_bar[t];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Matrix q_step(const Matrix& x_prev, int t, const Matrix& eps, const NoiseSchedule& sched) {
  check_t(t, sched, 1, "q_step");
  check_same(x_prev, eps, "q_step");
  return std::sqrt(sched.alpha[t]) * x_prev + std::sqrt(sched.beta[t]) * eps;
}

Matrix posterior_mean(const Matrix& x0_pred, const Matrix& x_t, int t, const NoiseSchedule& sched) {
  check_t(t, sched, 1, "posterior_mean");
  check_same(x0_pred, x_t, "posterior_mean");
  // With alpha_bar_{t-1} = 1 the posterior collapses onto x0.
  if (t == 1) return x0_pred;
  const double ab = sched.alpha_bar[t];
  const double ab_prev = sched.alpha_bar[t - 1];
  const double beta = 1.0 - ab / ab_prev;
  const double c0 = beta * std::sqrt(ab_prev) / (1.0 - ab);
  const double ct = (1.0 - ab_prev) * std::sqrt(ab / ab_prev) / (1.0 - ab);
  return c0 * x0_pred + ct * x_t;
}

double reverse_sigma(int t, const NoiseSchedule& sched, ReverseNoise mode) {
  check_t(t, sched, 1, "reverse_sigma");
  if (t == 1) return 0.0;
  const double beta = sched.beta[t];
  if (mode == ReverseNoise::Beta) return beta;
  const double tilde = beta * (1.0 - sched.alpha_bar[t - 1]) / (1.0 - sched.alpha_bar[t]);
  return std::sqrt(tilde);
}

Matrix p_sample_step(const Matrix& x0_pred, const Matrix& x_t, int t, const NoiseSchedule& sched, Rng* rng,
                     ReverseNoise mode) {
  Matrix mean = posterior_mean(x0_pred, x_t, t, sched);
  if (t == 1 || rng == nullptr) return mean;
  const double sigma = reverse_sigma(t, sched, mode);
  return mean + sigma * rng->normal_matrix(mean.rows(), mean.cols());
}

Matrix cfg_combine(const Matrix& pred_cond, const Matrix& pred_uncond, double w) {
  check_same(pred_cond, pred_uncond, "cfg_combine");
  if (w == 1.0) return pred_cond;
  if (w == 0.0) return pred_uncond;
  // Exact when both predictions agree.
  return pred_uncond + w * (pred_cond - pred_uncond);
}

Matrix conditioning_augment(const Matrix& x_low, int s, const NoiseSchedule& sched, Rng& rng) {
  check_t(s, sched, 0, "conditioning_augment");
  if (s == 0) return x_low;
  return q_sample(x_low, s, rng.normal_matrix(x_low.rows(), x_low.cols()), sched);
}

}  // namespace diffdance
