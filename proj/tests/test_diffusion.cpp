#include <doctest.h>

#include <cmath>

#include "diffdance/core/error.hpp"
#include "diffdance/core/rng.hpp"
#include "diffdance/diffusion/sampler.hpp"
#include "diffdance/diffusion/schedule.hpp"

using namespace diffdance;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size() - 1);
  return m;
}

/// |sample mean - mu| and |sample var - var| inside three standard errors,
/// using the Gaussian fourth moment for the variance error.
void check_gaussian(const std::vector<double>& xs, double mu, double var) {
  const Moments m = moments(xs);
  const double n = static_cast<double>(xs.size());
  CHECK(std::abs(m.mean - mu) <= 3.0 * std::sqrt(var / n) + 1e-15);
  CHECK(std::abs(m.var - var) <= 3.0 * var * std::sqrt(2.0 / (n - 1)) + 1e-15);
}

}  // namespace

TEST_CASE("linear schedule") {
  const NoiseSchedule s = NoiseSchedule::build(1000, ScheduleKind::Linear);
  REQUIRE(s.steps() == 1000);
  CHECK(s.beta[1] == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.beta[1000] == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(s.alpha_bar[1] == 1.0 - s.beta[1]);
  CHECK(s.alpha_bar[0] == 1.0);
  // Direct product of (1 - beta) for the standard linear range.
  long double prod = 1.0L;
  for (int t = 1; t <= 1000; ++t) prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L);
  CHECK(s.alpha_bar[1000] == doctest::Approx(static_cast<double>(prod)).epsilon(1e-9));
  CHECK(s.alpha_bar[1000] == doctest::Approx(4.0358e-5).epsilon(1e-3));
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.beta[t] > 0.0);
    CHECK(s.beta[t] < 1.0);
    CHECK(s.alpha[t] == 1.0 - s.beta[t]);
    CHECK(s.model_t[t] == t);
    if (t > 1) CHECK(s.beta[t] >= s.beta[t - 1]);
    if (t > 1) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
  }
}

TEST_CASE("cosine schedule") {
  for (int T : {100, 1000}) {
    const NoiseSchedule s = NoiseSchedule::build(T, ScheduleKind::Cosine);
    CHECK(s.alpha_bar[1] > 0.99);
    CHECK(s.alpha_bar[T] < 1e-3);
    for (int t = 1; t <= T; ++t) {
      CHECK(s.beta[t] > 0.0);
      CHECK(s.beta[t] < 1.0);
      CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
      if (t > 1) CHECK(s.beta[t] >= s.beta[t - 1]);
    }
  }
  CHECK_THROWS_AS(NoiseSchedule::build(1, ScheduleKind::Cosine), DomainError);
  CHECK(parse_schedule_kind("linear") == ScheduleKind::Linear);
  CHECK(parse_schedule_kind("cosine") == ScheduleKind::Cosine);
  CHECK_THROWS_AS(parse_schedule_kind("sigmoid"), DomainError);
}

TEST_CASE("respaced schedule keeps the original marginals") {
  const NoiseSchedule s = NoiseSchedule::build(1000, ScheduleKind::Cosine);
  const NoiseSchedule r = s.respaced(100);
  REQUIRE(r.steps() == 100);
  CHECK(r.model_t[100] == 1000);
  CHECK(r.model_t[1] >= 1);
  for (int k = 1; k <= 100; ++k) {
    CHECK(r.alpha_bar[k] == doctest::Approx(s.alpha_bar[r.model_t[k]]).epsilon(1e-12));
    CHECK(r.model_t[k] > r.model_t[k - 1]);
  }
  const NoiseSchedule same = s.respaced(1000);
  for (int t = 1; t <= 1000; ++t) CHECK(same.beta[t] == doctest::Approx(s.beta[t]).epsilon(1e-12));
  CHECK_THROWS(s.respaced(1001));
  CHECK_THROWS(s.respaced(0));
}

TEST_CASE("q_sample closed form") {
  const NoiseSchedule s = NoiseSchedule::build(100, ScheduleKind::Cosine);
  Rng rng(1);
  const Matrix x0 = rng.normal_matrix(3, 4);
  CHECK(q_sample(x0, 0, rng.normal_matrix(3, 4), s) == x0);
  const Matrix zero = Matrix::Zero(3, 4);
  CHECK((q_sample(x0, 40, zero, s) - std::sqrt(s.alpha_bar[40]) * x0).norm() < 1e-15);
  CHECK_THROWS_AS(q_sample(x0, 101, zero, s), DomainError);
  CHECK_THROWS_AS(q_sample(x0, -1, zero, s), DomainError);
  CHECK_THROWS_AS(q_sample(x0, 3, Matrix::Zero(2, 4), s), ShapeError);
}

TEST_CASE("q_sample marginals match the closed form by Monte-Carlo") {
  for (ScheduleKind kind : {ScheduleKind::Cosine, ScheduleKind::Linear}) {
    const NoiseSchedule s = NoiseSchedule::build(1000, kind);
    Rng rng(2);
    const double x0 = 0.7;
    for (int t : {1, 500, 1000}) {
      std::vector<double> xs(100000);
      Matrix m(1, 1);
      m(0, 0) = x0;
      for (double& x : xs) x = q_sample(m, t, rng.normal_matrix(1, 1), s)(0, 0);
      check_gaussian(xs, std::sqrt(s.alpha_bar[t]) * x0, 1.0 - s.alpha_bar[t]);
    }
  }
}

TEST_CASE("q_sample at T is close to a standard normal per channel") {
  const NoiseSchedule s = NoiseSchedule::build(1000, ScheduleKind::Cosine);
  Rng rng(3);
  const int n = 100000;
  Matrix x0(1, 4);
  x0 << 1.0, -1.0, 0.5, 0.0;
  Matrix draws = q_sample(x0.replicate(n, 1), 1000, rng.normal_matrix(n, 4), s);
  for (int c = 0; c < 4; ++c) {
    std::vector<double> col(draws.col(c).data(), draws.col(c).data() + n);
    Moments m;
    {
      Eigen::VectorXd v = draws.col(c);
      m.mean = v.mean();
      m.var = (v.array() - m.mean).square().sum() / (n - 1);
    }
    CHECK(std::abs(m.mean) < 0.02);
    CHECK(m.var > 0.95);
    CHECK(m.var < 1.05);
  }
}

TEST_CASE("composed single steps match the marginal") {
  const NoiseSchedule s = NoiseSchedule::build(50, ScheduleKind::Linear);
  Rng rng(4);
  const int t = 20;
  std::vector<double> xs(100000);
  for (double& x : xs) {
    Matrix v = Matrix::Constant(1, 1, -0.4);
    for (int k = 1; k <= t; ++k) v = q_step(v, k, rng.normal_matrix(1, 1), s);
    x = v(0, 0);
  }
  check_gaussian(xs, std::sqrt(s.alpha_bar[t]) * -0.4, 1.0 - s.alpha_bar[t]);
}

TEST_CASE("posterior mean and reverse step") {
  const NoiseSchedule s = NoiseSchedule::build(100, ScheduleKind::Linear);
  const int t = 37;
  const double x0 = 0.3, xt = -1.2;
  // Standard DDPM posterior coefficients, derived by hand.
  const double ab = s.alpha_bar[t], abp = s.alpha_bar[t - 1], b = s.beta[t], a = s.alpha[t];
  const double expected = std::sqrt(abp) * b / (1 - ab) * x0 + std::sqrt(a) * (1 - abp) / (1 - ab) * xt;
  const Matrix got = posterior_mean(Matrix::Constant(1, 1, x0), Matrix::Constant(1, 1, xt), t, s);
  CHECK(got(0, 0) == doctest::Approx(expected).epsilon(1e-13));

  // At t = 1 the posterior collapses onto the prediction with no noise.
  Rng rng(5);
  const Matrix pred = rng.normal_matrix(2, 3), x_t = rng.normal_matrix(2, 3);
  CHECK(p_sample_step(pred, x_t, 1, s, &rng) == pred);
  // Without an rng the step is the posterior mean.
  CHECK(p_sample_step(pred, x_t, t, s, nullptr) == posterior_mean(pred, x_t, t, s));

  CHECK(reverse_sigma(t, s, ReverseNoise::Beta) == s.beta[t]);
  CHECK(reverse_sigma(t, s, ReverseNoise::PosteriorStd) ==
        doctest::Approx(std::sqrt((1 - abp) / (1 - ab) * b)).epsilon(1e-13));

  // Noise has standard deviation beta_t around the mean.
  std::vector<double> xs(100000);
  const Matrix p1 = Matrix::Constant(1, 1, x0), x1 = Matrix::Constant(1, 1, xt);
  for (double& x : xs) x = p_sample_step(p1, x1, t, s, &rng)(0, 0);
  check_gaussian(xs, expected, b * b);

  CHECK_THROWS_AS(p_sample_step(pred, x_t, 0, s, nullptr), DomainError);
  CHECK_THROWS_AS(p_sample_step(pred, x_t, 101, s, nullptr), DomainError);
  CHECK_THROWS_AS(p_sample_step(pred, Matrix::Zero(1, 3), 3, s, nullptr), ShapeError);
}

TEST_CASE("posterior mean fixed point") {
  // When x0_pred equals x_t and alpha_t = 1 - beta_t, the mean is
  // (sqrt(ab_{t-1}) b + sqrt(a)(1 - ab_{t-1})) / (1 - ab_t) times x_t.
  // With a single step from ab_0 = 1 this coefficient is exactly 1.
  const NoiseSchedule s = NoiseSchedule::build(10, ScheduleKind::Linear);
  const Matrix x = Matrix::Constant(2, 2, 0.9);
  const Matrix mean = posterior_mean(x, x, 1, s);
  CHECK((mean - x).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("classifier-free guidance combine") {
  Rng rng(6);
  const Matrix c = rng.normal_matrix(4, 5), u = rng.normal_matrix(4, 5);
  CHECK(cfg_combine(c, u, 1.0) == c);
  CHECK(cfg_combine(c, u, 0.0) == u);
  CHECK(cfg_combine(c, c, 2.5) == c);
  for (double w : {0.3, 1.7, 2.5, 4.0}) {
    const Matrix expected = w * c + (1.0 - w) * u;
    CHECK((cfg_combine(c, u, w) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  // w = 2.5 on scalars 1.0 (conditional) and 0.2 (unconditional).
  CHECK(cfg_combine(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.2), 2.5)(0, 0) ==
        doctest::Approx(2.2).epsilon(1e-15));
}

TEST_CASE("condition dropout") {
  Rng rng(7);
  const RowVector c = RowVector::Constant(8, 0.5);
  for (int i = 0; i < 100; ++i) {
    CHECK(condition_dropout(c, 0.0, rng).has_value());
    CHECK_FALSE(condition_dropout(c, 1.0, rng).has_value());
  }
  int dropped = 0;
  for (int i = 0; i < 100000; ++i) dropped += condition_dropout(c, 0.1, rng).has_value() ? 0 : 1;
  CHECK(std::abs(dropped / 1e5 - 0.1) < 0.005);
  CHECK(*condition_dropout(c, 0.0, rng) == c);
  CHECK_THROWS_AS(condition_dropout(c, 1.5, rng), DomainError);
  CHECK_THROWS_AS(condition_dropout(c, -0.1, rng), DomainError);
}

TEST_CASE("conditioning augmentation") {
  const NoiseSchedule s = NoiseSchedule::build(100, ScheduleKind::Cosine);
  Rng rng(8);
  const Matrix x = rng.normal_matrix(6, 3);
  CHECK(conditioning_augment(x, 0, s, rng) == x);
  CHECK_THROWS_AS(conditioning_augment(x, 101, s, rng), DomainError);
  CHECK_THROWS_AS(conditioning_augment(x, -1, s, rng), DomainError);
  std::vector<double> xs(100000);
  const Matrix zero = Matrix::Zero(1, 1);
  for (double& v : xs) v = conditioning_augment(zero, 30, s, rng)(0, 0);
  check_gaussian(xs, 0.0, 1.0 - s.alpha_bar[30]);
}

TEST_CASE("sample loop with an oracle model") {
  const NoiseSchedule s = NoiseSchedule::build(200, ScheduleKind::Cosine);
  Rng rng(9);
  const Matrix truth = rng.normal_matrix(12, 5);
  const X0Model oracle = [&](const Matrix& x_t, int, const Condition&) {
    CHECK(x_t.rows() == truth.rows());
    return truth;
  };
  SamplerConfig cfg;
  cfg.inference_steps = 20;
  cfg.stochastic = false;
  CHECK(sample_loop(oracle, RowVector::Zero(4), 12, 5, cfg, s) == truth);
  CHECK(sample_loop(oracle, std::nullopt, 12, 5, cfg, s) == truth);

  cfg.stochastic = true;
  cfg.seed = 11;
  const Matrix a = sample_loop(oracle, RowVector::Zero(4), 12, 5, cfg, s);
  const Matrix b = sample_loop(oracle, RowVector::Zero(4), 12, 5, cfg, s);
  CHECK(a == b);
  // The final step adds no noise, so even the stochastic run lands on x0.
  CHECK(a == truth);
}

TEST_CASE("sample loop honours seed frames and determinism") {
  const NoiseSchedule s = NoiseSchedule::build(100, ScheduleKind::Cosine);
  Rng rng(10);
  const Matrix target = rng.normal_matrix(10, 3);
  const Matrix seed = rng.normal_matrix(4, 3);
  int calls = 0;
  // A model that does not know the seed: it pulls everything to `target`,
  // blended with the current prefix so seed replacement is visible to it.
  const X0Model model = [&](const Matrix& x_t, int t, const Condition& c) {
    ++calls;
    CHECK(t >= 1);
    CHECK(t <= 100);
    Matrix out = target;
    out.topRows(4) = 0.5 * out.topRows(4) + 0.5 * x_t.topRows(4);
    if (c) out.array() += 0.01;
    return out;
  };
  SamplerConfig cfg;
  cfg.inference_steps = 25;
  cfg.seed_frames = seed;
  cfg.seed = 3;
  const Matrix a = sample_loop(model, RowVector::Zero(2), 10, 3, cfg, s);
  CHECK(a.topRows(4) == seed);
  CHECK(calls == 50);  // conditional + unconditional each step
  const Matrix b = sample_loop(model, RowVector::Zero(2), 10, 3, cfg, s);
  CHECK(a == b);
  // A model that keeps part of x_t makes the result depend on the sampler seed.
  const X0Model leaky = [&](const Matrix& x_t, int, const Condition&) { return Matrix(0.5 * x_t + 0.5 * target); };
  const Matrix l3 = sample_loop(leaky, RowVector::Zero(2), 10, 3, cfg, s);
  cfg.seed = 4;
  const Matrix l4 = sample_loop(leaky, RowVector::Zero(2), 10, 3, cfg, s);
  CHECK(l3.topRows(4) == l4.topRows(4));
  CHECK(l3.bottomRows(6) != l4.bottomRows(6));

  calls = 0;
  cfg.guidance_weight = 1.0;
  sample_loop(model, RowVector::Zero(2), 10, 3, cfg, s);
  CHECK(calls == 25);
  calls = 0;
  sample_loop(model, std::nullopt, 10, 3, cfg, s);
  CHECK(calls == 25);
}

TEST_CASE("sample loop rejects bad configurations") {
  const NoiseSchedule s = NoiseSchedule::build(50, ScheduleKind::Cosine);
  const X0Model wrong = [](const Matrix&, int, const Condition&) { return Matrix::Zero(2, 2); };
  SamplerConfig cfg;
  cfg.inference_steps = 10;
  CHECK_THROWS_AS(sample_loop(wrong, std::nullopt, 4, 3, cfg, s), ShapeError);
  cfg.inference_steps = 60;
  CHECK_THROWS(cfg.validate(50));
  cfg.inference_steps = 10;
  cfg.guidance_weight = -1.0;
  CHECK_THROWS(cfg.validate(50));
  cfg.guidance_weight = 2.5;
  cfg.seed_frames = Matrix::Zero(5, 2);
  const X0Model ok = [](const Matrix& x, int, const Condition&) { return x; };
  CHECK_THROWS_AS(sample_loop(ok, std::nullopt, 4, 3, cfg, s), ShapeError);
}
