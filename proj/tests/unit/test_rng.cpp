#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "wlmix/rng.hpp"

using wlmix::Rng;

TEST_CASE("same seed and stream reproduce the sequence") {
  Rng a(42, 3), b(42, 3);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
  Rng c(42, 3), d(42, 3);
  for (int i = 0; i < 200; ++i) REQUIRE(c.normal() == d.normal());
}

TEST_CASE("streams and substreams are distinct") {
  std::set<std::uint64_t> first;
  for (std::uint64_t s = 0; s < 64; ++s) first.insert(Rng(7, s).next_u64());
  CHECK(first.size() == 64);

  const Rng parent(7, 1);
  Rng s1 = parent.substream(1), s1b = parent.substream(1), s2 = parent.substream(2);
  CHECK(s1.next_u64() == s1b.next_u64());
  CHECK(Rng(7, 1).substream(1).next_u64() != s2.next_u64());

  // Substreams depend on identity, not on how far the parent has advanced.
  Rng moved(7, 1);
  for (int i = 0; i < 10; ++i) moved.next_u64();
  CHECK(moved.substream(5).next_u64() == parent.substream(5).next_u64());
}

TEST_CASE("uniform stays in the open interval") {
  Rng r(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

namespace {
struct Moments {
  double mean = 0.0, var = 0.0;
};
template <class F>
Moments moments(F draw, int n) {
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = draw();
    s += x;
    s2 += x * x;
  }
  Moments m;
  m.mean = s / n;
  m.var = s2 / n - m.mean * m.mean;
  return m;
}
}  // namespace

TEST_CASE("distribution moments") {
  Rng r(2024);
  const int n = 200000;
  // Tolerances are about 5 standard errors.
  SUBCASE("normal") {
    const auto m = moments([&] { return r.normal(); }, n);
    CHECK(std::fabs(m.mean) < 0.012);
    CHECK(m.var == doctest::Approx(1.0).epsilon(0.012));
  }
  SUBCASE("exponential") {
    const auto m = moments([&] { return r.exponential(2.0); }, n);
    CHECK(m.mean == doctest::Approx(0.5).epsilon(0.012));
    CHECK(m.var == doctest::Approx(0.25).epsilon(0.03));
  }
  SUBCASE("gamma small and large shape") {
    const auto a = moments([&] { return r.gamma(0.3, 2.0); }, n);
    CHECK(a.mean == doctest::Approx(0.6).epsilon(0.03));
    CHECK(a.var == doctest::Approx(1.2).epsilon(0.06));
    const auto b = moments([&] { return r.gamma(5.0, 0.5); }, n);
    CHECK(b.mean == doctest::Approx(2.5).epsilon(0.01));
    CHECK(b.var == doctest::Approx(1.25).epsilon(0.03));
  }
  SUBCASE("inverse gaussian") {
    // mean mu, variance mu^3 / shape
    const auto m = moments([&] { return r.inverse_gaussian(1.5, 4.0); }, n);
    CHECK(m.mean == doctest::Approx(1.5).epsilon(0.01));
    CHECK(m.var == doctest::Approx(1.5 * 1.5 * 1.5 / 4.0).epsilon(0.05));
  }
  SUBCASE("poisson") {
    const auto a = moments([&] { return static_cast<double>(r.poisson(3.5)); }, n);
    CHECK(a.mean == doctest::Approx(3.5).epsilon(0.01));
    CHECK(a.var == doctest::Approx(3.5).epsilon(0.03));
    const auto b = moments([&] { return static_cast<double>(r.poisson(250.0)); }, n);
    CHECK(b.mean == doctest::Approx(250.0).epsilon(0.002));
    CHECK(b.var == doctest::Approx(250.0).epsilon(0.03));
  }
}

TEST_CASE("categorical_log frequencies") {
  Rng r(5);
  const std::vector<double> lw{std::log(1.0), std::log(2.0), -std::numeric_limits<double>::infinity(), std::log(7.0)};
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[r.categorical_log(lw)];
  CHECK(counts[2] == 0);
  CHECK(counts[0] / double(n) == doctest::Approx(0.1).epsilon(0.05));
  CHECK(counts[1] / double(n) == doctest::Approx(0.2).epsilon(0.04));
  CHECK(counts[3] / double(n) == doctest::Approx(0.7).epsilon(0.01));
}

TEST_CASE("uniform_index covers the range") {
  Rng r(9);
  std::vector<int> c(5, 0);
  for (int i = 0; i < 50000; ++i) ++c.at(r.uniform_index(5));
  for (int k : c) CHECK(k / 50000.0 == doctest::Approx(0.2).epsilon(0.05));
}
