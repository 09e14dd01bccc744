#include <doctest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "wlmix/baselines.hpp"
#include "wlmix/models.hpp"

using namespace wlmix;

namespace {

struct Oracle {
  NormalNormalModel nn;
  Surrogate q;
};

Oracle oracle() {
  Mat obs(3, 2);
  obs << 1.0, 0.5, 0.2, -0.3, 0.8, 0.1;
  Mat prior(2, 2);
  prior << 4.0, 1.0, 1.0, 4.0;
  Oracle o{normal_normal(obs, Vec::Zero(2), prior, Mat::Identity(2, 2)), {}};
  o.q = make_gaussian(o.nn.post_mean, 2.0 * o.nn.post_cov);
  return o;
}

}  // namespace

TEST_CASE("log_mean_ratio and ESS") {
  const std::vector<double> lg{0.0, std::log(3.0)}, lq{0.0, 0.0};
  CHECK(log_mean_ratio(lg, lq) == doctest::Approx(std::log(2.0)));
  CHECK(log_mean_ratio(lg, lq, 0.5) == doctest::Approx(std::log((1.0 + std::sqrt(3.0)) / 2.0)));
  const std::vector<double> even(10, -3.0);
  CHECK(ess_from_log_weights(even) == doctest::Approx(10.0));
  const std::vector<double> one{0.0, kNegInf, kNegInf};
  CHECK(ess_from_log_weights(one) == doctest::Approx(1.0));
}

TEST_CASE("systematic resampling keeps counts within one of N w_i") {
  Rng rng(3);
  const std::vector<double> w{0.1, 0.25, 0.05, 0.6};
  std::vector<double> lw;
  for (double v : w) lw.push_back(std::log(v));
  for (int rep = 0; rep < 50; ++rep) {
    const auto idx = systematic_resample(lw, rng);
    REQUIRE(idx.size() == 4);
    std::vector<int> c(4, 0);
    for (auto i : idx) ++c[i];
    for (int i = 0; i < 4; ++i) CHECK(std::fabs(c[i] - 4 * w[i]) < 1.0 + 1e-12);
  }
}

TEST_CASE("importance sampling on a Gaussian oracle") {
  const Oracle o = oracle();
  Rng rng(1);
  const Estimate e = importance_sampling(o.nn.target, o.q, 20000, rng);
  REQUIRE(e.ok);
  CHECK(e.log_z == doctest::Approx(o.nn.log_evidence).epsilon(0.002));
  CHECK(e.diagnostics.contains("ess"));
}

TEST_CASE("bridge sampling on a Gaussian oracle") {
  const Oracle o = oracle();
  Rng rng(2);
  std::vector<Vec> xs, qs;
  const Surrogate post = make_gaussian(o.nn.post_mean, o.nn.post_cov);
  for (int i = 0; i < 3000; ++i) {
    xs.push_back(post.sample(rng));
    qs.push_back(o.q.sample(rng));
  }
  const BridgeResult b = bridge_sampling(o.nn.target, o.q, xs, qs);
  CHECK(b.converged);
  CHECK_FALSE(b.root_solved);
  CHECK(b.log_r + o.q.log_z_q == doctest::Approx(o.nn.log_evidence).epsilon(0.002));
  CHECK(b.relative_mse > 0.0);
}

TEST_CASE("bridge sampling with almost no overlap still returns the fixed point") {
  const MvnPair p = mvn_pair(20, 4.0);
  Rng rng(4);
  std::vector<Vec> xs, qs;
  for (int i = 0; i < 500; ++i) {
    xs.push_back(rng.normal_vector(20));
    qs.push_back(p.surrogate.sample(rng));
  }
  const BridgeResult b = bridge_sampling(p.target, p.surrogate, xs, qs, 200, 1e-10);
  CHECK(b.converged);
  CHECK(std::isfinite(b.log_r));
}

TEST_CASE("stepping stone on a Gaussian oracle") {
  const Oracle o = oracle();
  Rng rng(5);
  SteppingStoneConfig c;
  c.ladder = {0.0, 0.25, 0.5, 0.75, 1.0};
  c.per_rung_samples = 5000;
  c.kernel = KernelSpec::rwm(1.0);
  const Estimate e = stepping_stone(o.nn.target, o.q, c, rng);
  REQUIRE(e.ok);
  CHECK(e.log_z == doctest::Approx(o.nn.log_evidence).epsilon(0.005));
  c.ladder = {0.0, 0.6, 0.5, 1.0};
  CHECK_THROWS_AS(stepping_stone(o.nn.target, o.q, c, rng), std::invalid_argument);
}

TEST_CASE("SMC is unbiased for Z in expectation") {
  const TargetDensity t = gauss1d_unnormalized();
  Vec m(1), s(1);
  m << 1.0;
  s << 3.0;
  const Surrogate q = make_diagonal_gaussian(m, s);
  SmcConfig c;
  c.n_particles = 100;
  c.kernel = KernelSpec::rwm(1.5);
  c.kernel_steps = 3;
  const double log_z = 0.5 * kLogTwoPi;
  std::vector<double> ratio;
  int ladders = 0;
  for (int r = 0; r < 200; ++r) {
    Rng rng(77, r);
    const SmcResult res = smc_estimate(t, q, c, rng);
    REQUIRE(res.estimate.ok);
    ratio.push_back(std::exp(res.estimate.log_z - log_z));
    ladders += static_cast<int>(res.ladder.size());
  }
  const MeanSd ms = mean_sd(ratio);
  const double se = ms.sd / std::sqrt(200.0);
  CAPTURE(ms.mean);
  CAPTURE(se);
  CHECK(std::fabs(ms.mean - 1.0) <= 2.0 * se);
  CHECK(ladders > 400);
}

TEST_CASE("SMC ladder is adaptive and ends at one") {
  const Oracle o = oracle();
  SmcConfig c;
  c.n_particles = 300;
  c.kernel = KernelSpec::rwm(0.8);
  Rng rng(9);
  const SmcResult r = smc_estimate(o.nn.target, o.nn.prior, c, rng);
  REQUIRE(r.ladder.size() >= 3);
  CHECK(r.ladder.front() == 0.0);
  CHECK(r.ladder.back() == 1.0);
  CHECK(r.rung_points.size() == r.ladder.size());
  CHECK(r.estimate.log_z == doctest::Approx(o.nn.log_evidence).epsilon(0.01));
}

TEST_CASE("Chib's estimate from Gibbs output") {
  const Oracle o = oracle();
  ChibConfig c;
  c.n = 4000;
  c.init = o.nn.post_mean;
  Rng rng(6);
  const Estimate e = chib_estimate(o.nn.target, c, rng);
  REQUIRE(e.ok);
  CHECK(e.log_z == doctest::Approx(o.nn.log_evidence).epsilon(1e-3));

  TargetDensity no_blocks = o.nn.target;
  no_blocks.gibbs_blocks.clear();
  CHECK_THROWS_AS(chib_estimate(no_blocks, c, rng), std::invalid_argument);
}

TEST_CASE("estimate json leaves timing out by default") {
  Estimate e;
  e.method = "is";
  e.log_z = 1.0;
  e.wall_seconds = 2.0;
  CHECK_FALSE(e.to_json().contains("wall_seconds"));
  CHECK(e.to_json(true).at("wall_seconds") == 2.0);
}
