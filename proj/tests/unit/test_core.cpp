#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "test_util.hpp"
#include "wlmix/core.hpp"

using namespace wlmix;

TEST_CASE("log_sum_exp") {
  const std::vector<double> v{1000.0, 1000.0};
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)));
  CHECK(log_sum_exp(-1000.0, -1001.0) == doctest::Approx(-1000.0 + std::log1p(std::exp(-1.0))));
  CHECK(log_sum_exp(kNegInf, 2.0) == 2.0);
  CHECK(log_sum_exp(kNegInf, kNegInf) == kNegInf);
  CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), std::domain_error);
  const std::vector<double> w{std::log(1.0), std::log(3.0)};
  CHECK(log_mean_exp(w) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("mean_sd uses the n-1 normalization") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const MeanSd m = mean_sd(v);
  CHECK(m.mean == doctest::Approx(2.5));
  CHECK(m.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(m.n == 4);
}

TEST_CASE("diagonal gaussian surrogate is normalized") {
  Vec mean(1), sd(1);
  mean << 0.7;
  sd << 1.3;
  const Surrogate s = make_diagonal_gaussian(mean, sd);
  CHECK(s.log_z_q == 0.0);
  // Trapezoid over +-12 sd.
  double integral = 0.0;
  const int n = 20000;
  const double lo = 0.7 - 12 * 1.3, h = 24 * 1.3 / n;
  for (int i = 0; i <= n; ++i) {
    Vec x(1);
    x << lo + i * h;
    integral += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(s.log_q(x));
  }
  CHECK(integral * h == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.mode.has_value());
}

TEST_CASE("full gaussian surrogate matches the diagonal one on a diagonal covariance") {
  Vec mean(3);
  mean << 1.0, -2.0, 0.5;
  Vec sd(3);
  sd << 0.5, 2.0, 1.0;
  const Surrogate a = make_diagonal_gaussian(mean, sd);
  const Surrogate b = make_gaussian(mean, sd.cwiseAbs2().asDiagonal().toDenseMatrix());
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vec x = a.sample(rng);
    CHECK(a.log_q(x) == doctest::Approx(b.log_q(x)).epsilon(1e-12));
    const Vec ga = a.grad_log_q(x), gb = b.grad_log_q(x);
    CHECK((ga - gb).norm() < 1e-10);
  }
}

TEST_CASE("make_gaussian rejects a non-SPD covariance") {
  Mat c(2, 2);
  c << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(make_gaussian(Vec::Zero(2), c), std::invalid_argument);
}

TEST_CASE("geometric path ends are the end densities") {
  const TargetDensity t = testing::std_normal_target(2);
  Vec mean(2), sd(2);
  mean << 1.0, 1.0;
  sd << 2.0, 2.0;
  const Surrogate q = make_diagonal_gaussian(mean, sd);
  Vec x(2);
  x << 0.3, -0.4;
  CHECK(geometric_path_density(t, q, 0.0).log_density(x) == q.log_q(x));
  CHECK(geometric_path_density(t, q, 1.0).log_density(x) == t.log_gamma(x));
  const PathDensity mid = geometric_path_density(t, q, 0.25);
  CHECK(mid.log_density(x) == doctest::Approx(0.75 * q.log_q(x) + 0.25 * t.log_gamma(x)));
  REQUIRE(mid.grad);
  const Vec g = mid.grad(x);
  CHECK((g - (0.75 * q.grad_log_q(x) + 0.25 * t.grad_log_gamma(x))).norm() < 1e-12);
}

TEST_CASE("check_gradient accepts a correct gradient and flags a wrong one") {
  TargetDensity t;
  t.dim = 3;
  t.log_gamma = [](const Vec& x) { return -0.5 * x.squaredNorm() + std::sin(x[0]) * x[1] - 0.1 * std::pow(x[2], 4); };
  t.grad_log_gamma = [](const Vec& x) -> Vec {
    Vec g = -x;
    g[0] += std::cos(x[0]) * x[1];
    g[1] += std::sin(x[0]);
    g[2] -= 0.4 * std::pow(x[2], 3);
    return g;
  };
  Vec p(3);
  p << 0.4, -1.1, 0.9;
  const GradientReport ok = check_gradient(t, p, 1e-5);
  CHECK(ok.ok());
  CHECK(ok.max_rel_error < 1e-4);

  TargetDensity bad = t;
  bad.grad_log_gamma = [g = t.grad_log_gamma](const Vec& x) -> Vec {
    Vec v = g(x);
    v[1] *= 1.01;
    return v;
  };
  const GradientReport r = check_gradient(bad, p, 1e-5);
  CHECK_FALSE(r.ok());
  REQUIRE(r.flagged.size() == 1);
  CHECK(r.flagged[0] == 1);
}

TEST_CASE("normal helpers") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-10));
  CHECK(log_normal_pdf(1.0, 0.0, 2.0) == doctest::Approx(-std::log(2.0) - 0.5 * kLogTwoPi - 0.125));
}
