#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "wlmix/models.hpp"
#include "wlmix/surrogate.hpp"

using namespace wlmix;

namespace {

NormalNormalModel correlated_oracle() {
  Mat obs(2, 2);
  obs << 1.2, 0.4, 0.3, -0.2;
  Mat prior(2, 2);
  prior << 4.0, 3.6, 3.6, 4.0;
  return normal_normal(obs, Vec::Zero(2), prior, Mat::Identity(2, 2));
}

void check_monotone(const ElboTrace& tr) {
  REQUIRE(tr.values.size() >= 2);
  for (std::size_t i = 1; i < tr.values.size(); ++i) {
    CHECK(tr.values[i] >= tr.values[i - 1] - 1e-10 * (1.0 + std::fabs(tr.values[i - 1])));
  }
}

}  // namespace

TEST_CASE("closed-form CAVI raises the ELBO every sweep") {
  SUBCASE("correlated Gaussian") {
    const NormalNormalModel nn = correlated_oracle();
    REQUIRE(nn.target.cavi);
    const CaviResult r = cavi_fit(nn.target, MeanFieldGaussian{Vec::Constant(2, 3.0), Vec::Ones(2)});
    CHECK(r.trace.closed_form);
    CHECK(r.trace.converged);
    check_monotone(r.trace);
  }
  SUBCASE("Bayesian lasso") {
    const RegressionData d = lasso_synthetic(60, 8, 3.0, 4);
    const LassoModel lm = lasso_build(d.X, d.y, 5.0);
    REQUIRE(lm.target.cavi);
    const auto [m0, s0] = lm.cavi_init();
    const CaviResult r = cavi_fit(lm.target, MeanFieldGaussian{m0, s0});
    CHECK(r.trace.closed_form);
    check_monotone(r.trace);
  }
}

TEST_CASE("ELBO never exceeds log Z on oracle models") {
  Rng rng(8);
  SUBCASE("normal-normal") {
    const NormalNormalModel nn = correlated_oracle();
    const CaviResult r = cavi_fit(nn.target, MeanFieldGaussian{Vec::Zero(2), Vec::Ones(2)});
    CHECK(r.trace.values.back() <= nn.log_evidence + 1e-12);
    // A mean-field fit of a correlated posterior leaves a strictly positive gap.
    CHECK(nn.log_evidence - r.trace.values.back() > 0.02);
  }
  SUBCASE("Gaussian pair") {
    const MvnPair p = mvn_pair(3, 1.0);
    Vec m = Vec::Constant(3, 0.2), s = Vec::Constant(3, 0.8);
    const ElboEstimate e = elbo(p.target, MeanFieldGaussian{m, s}, 4000, rng);
    CHECK(e.value <= 0.0 + 3.0 * e.std_error);
  }
  SUBCASE("normal-inverse-gamma regression") {
    Rng drng(1);
    Mat X(15, 2);
    for (int i = 0; i < 15; ++i) X.row(i) = drng.normal_vector(2).transpose();
    Vec y = X * Vec::Ones(2) + 0.5 * drng.normal_vector(15);
    const NigRegressionModel nig = nig_regression(X, y, 4.0 * Mat::Identity(2, 2), 2.0, 1.0);
    const CaviResult r = cavi_fit(nig.target, MeanFieldGaussian{Vec::Zero(3), Vec::Constant(3, 0.5)});
    const ElboEstimate e = elbo(nig.target, r.q, 20000, rng);
    CHECK(e.value <= nig.log_evidence + 3.0 * e.std_error);
  }
}

TEST_CASE("a factorized Gaussian target is recovered in one sweep") {
  Vec mu(3);
  mu << 1.0, -2.0, 0.5;
  Vec prec(3);
  prec << 4.0, 0.25, 1.0;
  const TargetDensity t = make_gaussian_target(mu, prec.asDiagonal().toDenseMatrix(), 0.7);
  CaviOptions opt;
  opt.max_sweeps = 1;
  const CaviResult r = cavi_fit(t, MeanFieldGaussian{Vec::Zero(3), Vec::Ones(3)}, opt);
  REQUIRE(r.trace.values.size() == 2);
  CHECK((r.q.means - mu).norm() < 1e-12);
  CHECK((r.q.sds - prec.cwiseSqrt().cwiseInverse()).norm() < 1e-12);
  // The ELBO then equals log Z exactly.
  const double log_z = 0.7 + 1.5 * kLogTwoPi - 0.5 * prec.array().log().sum();
  CHECK(r.trace.values.back() == doctest::Approx(log_z).epsilon(1e-12));
}

TEST_CASE("numeric CAVI fallback approaches the Gaussian fixed point") {
  Vec mu(2);
  mu << 0.5, -1.0;
  Mat lam(2, 2);
  lam << 2.0, 0.6, 0.6, 1.0;
  TargetDensity t = make_gaussian_target(mu, lam, 0.0);
  t.cavi.reset();
  // The other coordinates are averaged over fixed draws, so the fixed point carries O(1/sqrt(num_mc)) error.
  CaviOptions opt;
  opt.num_mc = 4000;
  const CaviResult r = cavi_fit(t, MeanFieldGaussian{Vec::Zero(2), Vec::Ones(2)}, opt);
  CHECK_FALSE(r.trace.closed_form);
  CHECK((r.q.means - mu).norm() < 0.03);
  CHECK(r.q.sds[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.02));
  CHECK(r.q.sds[1] == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("Gaussian fit from samples") {
  Vec mean(2);
  mean << 1.0, -1.0;
  Mat cov(2, 2);
  cov << 2.0, 0.5, 0.5, 1.0;
  const Surrogate truth = make_gaussian(mean, cov);
  Rng rng(4);
  std::vector<Vec> xs;
  for (int i = 0; i < 50000; ++i) xs.push_back(truth.sample(rng));
  const Surrogate fit = fit_gaussian_from_samples(xs);
  REQUIRE(fit.mode.has_value());
  CHECK((*fit.mode - mean).norm() < 0.03);
  Vec x(2);
  x << 0.0, 0.0;
  CHECK(fit.log_q(x) == doctest::Approx(truth.log_q(x)).epsilon(0.01));
}

TEST_CASE("Gauss-Hermite moments are exact for low-degree polynomials") {
  std::vector<double> z, w;
  gauss_hermite(10, z, w);
  double m0 = 0, m2 = 0, m4 = 0, m6 = 0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    m0 += w[k];
    m2 += w[k] * std::pow(z[k], 2);
    m4 += w[k] * std::pow(z[k], 4);
    m6 += w[k] * std::pow(z[k], 6);
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(m6 == doctest::Approx(15.0).epsilon(1e-12));
}

TEST_CASE("surrogate json round trip") {
  Vec m(2), s(2);
  m << 0.1, 0.2;
  s << 1.5, 0.5;
  const Surrogate d = make_diagonal_gaussian(m, s);
  const Surrogate d2 = surrogate_from_json(surrogate_to_json(d));
  Mat c(2, 2);
  c << 1.0, 0.3, 0.3, 2.0;
  const Surrogate f = make_gaussian(m, c);
  const Surrogate f2 = surrogate_from_json(surrogate_to_json(f));
  Vec x(2);
  x << -0.4, 1.1;
  CHECK(d2.log_q(x) == doctest::Approx(d.log_q(x)).epsilon(1e-14));
  CHECK(f2.log_q(x) == doctest::Approx(f.log_q(x)).epsilon(1e-14));
  CHECK_THROWS(surrogate_from_json(json{{"family", "student_t"}}));
}
