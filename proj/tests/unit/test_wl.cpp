#include <doctest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "wlmix/models.hpp"
#include "wlmix/wl.hpp"

using namespace wlmix;

TEST_CASE("psi stays normalized after every update") {
  Rng rng(17);
  WlState plain, mom;
  double worst = 0.0;
  for (int t = 1; t <= 100000; ++t) {
    const int ind = rng.bernoulli(0.3) ? 1 : 0;
    const double eta = 1.0 / std::sqrt(static_cast<double>(t));
    plain = wl_update_plain(plain, ind, eta);
    mom = wl_update_momentum(mom, ind, eta, 0.9);
    worst = std::max(worst, std::fabs(std::exp(plain.log_psi_gamma) + std::exp(plain.log_psi_q) - 1.0));
    worst = std::max(worst, std::fabs(std::exp(mom.log_psi_gamma) + std::exp(mom.log_psi_q) - 1.0));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("plain update raises the visited weight by log(1 + eta) before renormalizing") {
  WlState s;
  s = wl_update_plain(s, 1, 1.0);
  CHECK(s.log_ratio() == doctest::Approx(std::log(2.0)));
  CHECK(s.xi_gamma == 1);
  CHECK(s.xi_q == 0);
  s = wl_update_plain(s, 0, 1.0);
  CHECK(s.log_ratio() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK_THROWS_AS(wl_update_plain(s, 2, 0.5), std::invalid_argument);
}

TEST_CASE("momentum update accumulates persistent gradients") {
  WlState s;
  s = wl_update_momentum(s, 1, 0.1, 0.9);
  CHECK(s.log_ratio() == doctest::Approx(0.1));
  s = wl_update_momentum(s, 1, 0.1, 0.9);
  // m = -0.1 * 0.9 - 0.1
  CHECK(s.log_ratio() == doctest::Approx(0.1 + 0.19));
  CHECK_THROWS_AS(wl_update_momentum(s, 1, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("flatness criterion") {
  WlState s;
  CHECK_FALSE(flatness_check(s, 0.2));
  s.xi_gamma = 6;
  s.xi_q = 4;
  CHECK(flatness_check(s, 0.2));
  s.xi_gamma = 7;
  s.xi_q = 3;
  CHECK_FALSE(flatness_check(s, 0.2));
  CHECK(flatness_check(s, 0.4));
}

TEST_CASE("eta schedules") {
  WlConfig c;
  c.eta0 = 1.0;
  c.eta_schedule = EtaSchedule::harmonic;
  CHECK(c.eta_for_stage(4) == doctest::Approx(0.25));
  c.eta_schedule = EtaSchedule::geometric;
  c.eta_decay = 0.5;
  CHECK(c.eta_for_stage(4) == doctest::Approx(0.125));
  CHECK(eta_schedule_from_string("harmonic") == EtaSchedule::harmonic);
  CHECK_THROWS(eta_schedule_from_string("cosine"));
}

TEST_CASE("config validation and json round trip") {
  WlConfig c;
  c.burn_in = c.total_iters;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = WlConfig{};
  c.flat_threshold = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = WlConfig{};
  c.momentum_beta = 0.9;
  c.kernel_gamma = KernelSpec::hmc(0.2, 7);
  CHECK(WlConfig::from_json(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("mixture estimate of a 1-d Gaussian normalizer") {
  const TargetDensity t = gauss1d_unnormalized();
  Vec m(1), s(1);
  m << 0.5;
  s << 1.5;
  const Surrogate q = make_diagonal_gaussian(m, s);
  WlConfig c;
  c.total_iters = 20000;
  c.burn_in = 10000;
  c.kernel_gamma = KernelSpec::rwm(2.0);
  std::vector<double> est;
  for (int r = 0; r < 10; ++r) {
    Rng rng(100, r);
    est.push_back(wl_estimate(t, q, c, rng).final_log_z);
  }
  const MeanSd ms = mean_sd(est);
  const double truth = 0.5 * kLogTwoPi;
  CAPTURE(ms.mean);
  CAPTURE(ms.sd);
  CHECK(std::fabs(ms.mean - truth) < 3.0 * ms.sd / std::sqrt(10.0) + 0.01);
}

TEST_CASE("reruns with the same seed are byte-identical") {
  const MvnPair p = mvn_pair(5, 1.0);
  WlConfig c;
  c.total_iters = 3000;
  c.burn_in = 1000;
  c.kernel_gamma = KernelSpec::rwm(0.8);
  Rng a(7, 2), b(7, 2);
  const RunRecord r1 = wl_estimate(p.target, p.surrogate, c, a);
  const RunRecord r2 = wl_estimate(p.target, p.surrogate, c, b);
  CHECK(r1.to_json().dump() == r2.to_json().dump());
  std::ostringstream s1, s2;
  r1.write_trace_csv(s1);
  r2.write_trace_csv(s2);
  CHECK(s1.str() == s2.str());
  CHECK(r1.log_ratio_trace.size() == static_cast<std::size_t>(c.total_iters));
  CHECK_FALSE(r1.to_json().contains("wall_seconds"));
  CHECK(r1.to_json(true).contains("wall_seconds"));
}

TEST_CASE("parallel WL sums rung estimates") {
  const TargetDensity t = gauss1d_unnormalized();
  Vec m(1), s(1);
  m << 0.0;
  s << 3.0;
  const Surrogate q = make_diagonal_gaussian(m, s);
  PwlLadder ladder;
  ladder.lambdas = geometric_ladder(3);
  WlConfig c;
  c.total_iters = 10000;
  c.burn_in = 5000;
  c.kernel_gamma = KernelSpec::rwm(1.5);
  c.kernel_q = KernelSpec::rwm(1.5);
  ladder.configs = {c};
  const Rng rng(3, 0);
  const RunRecord r = pwl_estimate(t, q, ladder, rng, 2);
  REQUIRE(r.rungs.size() == 3);
  double sum = 0.0;
  for (const auto& rr : r.rungs) sum += rr.final_log_r;
  CHECK(r.final_log_z == doctest::Approx(sum + q.log_z_q));
  CHECK(r.final_log_z == doctest::Approx(0.5 * kLogTwoPi).epsilon(0.05));
  // Worker count does not change the answer.
  const RunRecord r1 = pwl_estimate(t, q, ladder, rng, 1);
  CHECK(r1.to_json().dump() == r.to_json().dump());
}

TEST_CASE("geometric ladder") {
  const auto l = geometric_ladder(4, 2.0);
  REQUIRE(l.size() == 5);
  CHECK(l.front() == 0.0);
  CHECK(l.back() == 1.0);
  CHECK(l[2] == doctest::Approx(0.25));
  CHECK_THROWS(geometric_ladder(0));
}
