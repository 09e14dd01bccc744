#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "wlmix/kernels.hpp"

using namespace wlmix;
using testing::bin_of;
using testing::total_variation;

namespace {

constexpr int kBins = 20;
constexpr double kLo = -3.0, kHi = 3.0;

/// Mean TV to N(0,1) bin probabilities over several independent chains of n steps.
double mean_tv(const KernelSpec& spec, long n, std::uint64_t seed, int chains = 4) {
  const TargetDensity t = testing::std_normal_target(1);
  const auto probs = testing::normal_bin_probs(0.0, 1.0, kLo, kHi, kBins);
  double tv = 0.0;
  for (int c = 0; c < chains; ++c) {
    Rng rng(seed, c);
    Kernel k(spec, t.log_gamma, t.grad_log_gamma, &t);
    Vec x = Vec::Zero(1);
    double lx = t.log_gamma(x);
    std::vector<double> counts(kBins + 2, 0.0);
    for (long i = 0; i < n; ++i) {
      k.step(x, lx, rng);
      counts[bin_of(x[0], kLo, kHi, kBins)] += 1.0;
    }
    tv += total_variation(counts, probs);
  }
  return tv / chains;
}

void check_mc_rate(const KernelSpec& spec, std::uint64_t seed) {
  const double tv_small = mean_tv(spec, 10000, seed);
  const double tv_large = mean_tv(spec, 160000, seed + 1);
  // 16x the draws should cut the discrepancy by about 4x if the kernel leaves N(0,1) invariant.
  CAPTURE(tv_small);
  CAPTURE(tv_large);
  CHECK(tv_large < 0.5 * tv_small);
  CHECK(tv_large < 0.02);
}

double bimodal(const Vec& x) {
  const double a = -0.5 * x.squaredNorm();
  const double b = -0.5 * (x.array() - 4.0).matrix().squaredNorm();
  return log_sum_exp(a, b);
}

}  // namespace

TEST_CASE("kernels leave the target invariant at the Monte Carlo rate") {
  SUBCASE("rwm") { check_mc_rate(KernelSpec::rwm(2.0), 11); }
  SUBCASE("hmc") { check_mc_rate(KernelSpec::hmc(0.3, 5), 12); }
  SUBCASE("gibbs") { check_mc_rate(KernelSpec::gibbs(), 13); }
  SUBCASE("mtm ii") { check_mc_rate(KernelSpec::mtm(2.0, 5), 14); }
  SUBCASE("mtm inverse sum") { check_mc_rate(KernelSpec::mtm(2.0, 5, LambdaKind::inverse_sum), 15); }
  SUBCASE("directional with symmetric distance") {
    Vec e(1);
    e << 1.0;
    check_mc_rate(KernelSpec::directional({e}, DistanceDist{0.0, 1.5}, 4), 16);
  }
}

TEST_CASE("directional moves with +-e and a shifted distance keep a bimodal target invariant") {
  // Alternate a local random walk with the long jump; the composition must preserve the mixture.
  Vec e(1);
  e << 4.0;
  const KernelSpec jump = KernelSpec::directional({e, -e}, DistanceDist{1.0, 0.05}, 6);
  const KernelSpec local = KernelSpec::rwm(1.5);
  auto run = [&](long n, std::uint64_t seed) {
    Rng rng(seed);
    Kernel kj(jump, bimodal), kl(local, bimodal);
    Vec x = Vec::Zero(1);
    double lx = bimodal(x);
    const int bins = 24;
    std::vector<double> counts(bins + 2, 0.0);
    for (long i = 0; i < n; ++i) {
      kl.step(x, lx, rng);
      kj.step(x, lx, rng);
      counts[bin_of(x[0], -2.0, 6.0, bins)] += 1.0;
    }
    std::vector<double> p(bins + 2, 0.0);
    const auto a = testing::normal_bin_probs(0.0, 1.0, -2.0, 6.0, bins);
    const auto b = testing::normal_bin_probs(4.0, 1.0, -2.0, 6.0, bins);
    for (int i = 0; i < bins + 2; ++i) p[i] = 0.5 * (a[i] + b[i]);
    return std::make_pair(total_variation(counts, p), kj.stats().accept_rate());
  };
  const auto [tv1, acc1] = run(10000, 21);
  const auto [tv2, acc2] = run(160000, 22);
  CAPTURE(tv1);
  CAPTURE(tv2);
  CHECK(tv2 < 0.5 * tv1);
  CHECK(tv2 < 0.02);
  CHECK(acc2 > 0.2);
}

TEST_CASE("mode jumping between 20-d components with m = 8") {
  const int d = 20;
  const double mu = 5.0;
  auto log_mix = [&](const Vec& x) {
    return log_sum_exp(-0.5 * x.squaredNorm(), -0.5 * (x.array() - mu).matrix().squaredNorm());
  };
  const Vec e = Vec::Constant(d, mu);
  const KernelSpec spec = KernelSpec::directional({e, -e}, DistanceDist{1.0, 0.05}, 8);
  Rng rng(99);
  Vec x = rng.normal_vector(d);
  KernelStats stats;
  long switches = 0;
  for (int i = 0; i < 5000; ++i) {
    // Refresh inside the current component, then try the jump.
    const bool upper = x.mean() > mu / 2;
    x = rng.normal_vector(d);
    if (upper) x.array() += mu;
    const StepResult r = mtm_directional_step(log_mix, x, spec, rng, &stats);
    if (r.accepted && (r.point.mean() > mu / 2) != upper) ++switches;
    x = r.point;
  }
  CAPTURE(stats.accept_rate());
  CHECK(stats.accept_rate() > 0.2);
  CHECK(switches > 1000);
}

TEST_CASE("one-try MTM reproduces the Metropolis decisions") {
  auto ld = [](const Vec& x) { return -0.5 * x.squaredNorm() - 0.1 * x.array().pow(4).sum(); };
  SUBCASE("random walk") {
    Rng a(5), b(5);
    Vec x = Vec::Zero(3), y = Vec::Zero(3);
    const KernelSpec m1 = KernelSpec::mtm(1.2, 1);
    const KernelSpec rw = KernelSpec::rwm(1.2);
    for (int i = 0; i < 500; ++i) {
      const StepResult r1 = mtm_step(ld, x, m1, a);
      const StepResult r2 = rwm_step(ld, y, rw, b);
      REQUIRE(r1.accepted == r2.accepted);
      REQUIRE((r1.point - r2.point).norm() == 0.0);
      x = r1.point;
      y = r2.point;
    }
  }
  SUBCASE("directional") {
    Vec e(3);
    e << 1.0, -0.5, 0.25;
    const KernelSpec spec = KernelSpec::directional({e}, DistanceDist{0.0, 1.0}, 1);
    Rng a(6), b(6);
    Vec x = Vec::Zero(3), y = Vec::Zero(3);
    for (int i = 0; i < 500; ++i) {
      const StepResult r1 = mtm_directional_step(ld, x, spec, a);
      // Plain Metropolis along e with the same draws.
      const double r = b.normal(0.0, 1.0);
      const Vec cand = y + r * e;
      const bool acc = std::log(b.uniform()) < ld(cand) - ld(y);
      REQUIRE(r1.accepted == acc);
      if (acc) y = cand;
      x = r1.point;
      REQUIRE((x - y).norm() == 0.0);
    }
  }
}

TEST_CASE("degenerate distance at zero never moves") {
  Vec e(2);
  e << 1.0, 1.0;
  const KernelSpec spec = KernelSpec::directional({e}, DistanceDist{0.0, 0.0}, 3);
  auto ld = [](const Vec& x) { return -0.5 * x.squaredNorm(); };
  Rng rng(1);
  Vec x(2);
  x << 0.3, -0.2;
  KernelStats s;
  for (int i = 0; i < 100; ++i) {
    const StepResult r = mtm_directional_step(ld, x, spec, rng, &s);
    CHECK(r.point == x);
  }
  CHECK(s.accept_rate() == 1.0);
}

TEST_CASE("tiny random-walk steps are almost always accepted") {
  auto ld = [](const Vec& x) { return -0.5 * x.squaredNorm(); };
  Rng rng(2);
  Vec x = Vec::Ones(4);
  KernelStats s;
  for (int i = 0; i < 2000; ++i) x = rwm_step(ld, x, KernelSpec::rwm(1e-6), rng, &s).point;
  CHECK(s.accept_rate() > 0.999);
}

TEST_CASE("leapfrog is reversible and nearly conserves energy") {
  auto grad = [](const Vec& x) -> Vec { return -x - 0.2 * x.array().pow(3).matrix(); };
  auto energy = [](const Vec& x, const Vec& p) {
    return 0.5 * x.squaredNorm() + 0.05 * x.array().pow(4).sum() + 0.5 * p.squaredNorm();
  };
  Vec x0(3), p0(3);
  x0 << 0.5, -1.0, 0.2;
  p0 << 0.3, 0.1, -0.7;
  Vec x = x0, p = p0;
  leapfrog(grad, x, p, 0.01, 100);
  CHECK(std::fabs(energy(x, p) - energy(x0, p0)) < 1e-4);
  p = -p;
  leapfrog(grad, x, p, 0.01, 100);
  CHECK((x - x0).norm() < 1e-10);
  CHECK((p + p0).norm() < 1e-10);
}

TEST_CASE("kernel spec validation and json round trip") {
  KernelSpec bad = KernelSpec::rwm(-1.0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(KernelSpec::mtm(0.5, 0).validate(), std::invalid_argument);
  Vec e(2);
  e << 1.0, 2.0;
  const KernelSpec d = KernelSpec::directional({e, -e}, DistanceDist{1.0, 0.05}, 8);
  const KernelSpec back = KernelSpec::from_json(d.to_json());
  CHECK(back.to_json() == d.to_json());
  CHECK(kernel_kind_from_string(to_string(KernelKind::hmc)) == KernelKind::hmc);
  CHECK_THROWS(kernel_kind_from_string("nuts"));
}

TEST_CASE("a Gibbs kernel needs a target with blocks") {
  auto ld = [](const Vec& x) { return -0.5 * x.squaredNorm(); };
  CHECK_THROWS_AS(Kernel(KernelSpec::gibbs(), ld), std::invalid_argument);
}
