#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "wlmix/models.hpp"
#include "wlmix/rjmcmc.hpp"

using namespace wlmix;

namespace {

/// Member with log joint log w + log N(theta; m 1, s^2 I), so p(M_k | y) is proportional to w_k.
FiniteModelFamily::Member gaussian_member(int dim, double log_w, double m, double s, std::string name) {
  FiniteModelFamily::Member mem;
  mem.dim = dim;
  mem.name = std::move(name);
  mem.log_joint = [dim, log_w, m, s](const Vec& th) {
    double v = log_w;
    for (int i = 0; i < dim; ++i) v += log_normal_pdf(th[i], m, s);
    return v;
  };
  return mem;
}

ChainState start_at(const ModelFamily& fam, ModelId k) {
  ChainState st;
  st.model = k;
  st.shared = Vec(0);
  st.theta = fam.mode(k, st.shared);
  return st;
}

}  // namespace

TEST_CASE("adaptive jump log Jacobian") {
  Rng rng(4);
  for (int D : {1, 2, 5, 9}) {
    for (double r : {0.3, 1.7, 4.0}) {
      const Vec x = rng.normal_vector(D);
      const Vec a = rng.normal_vector(D) * 2.0;
      const Vec diff = a - x;
      const double rho = diff.norm();
      const Vec u = diff / rho;
      // Closed-form Jacobian of x + r (a - x)/|a - x|.
      const Mat J = (1.0 - r / rho) * Mat::Identity(D, D) + (r / rho) * u * u.transpose();
      const double ld = std::log(std::fabs(J.fullPivLu().determinant()));
      CAPTURE(D);
      CAPTURE(r);
      CHECK(std::fabs(adaptive_jump_log_jacobian(x, a, r) - ld) < 1e-10);
      // The map itself against central differences.
      Mat Jfd(D, D);
      const double h = 1e-6;
      for (int j = 0; j < D; ++j) {
        Vec up = x, dn = x;
        up[j] += h;
        dn[j] -= h;
        Jfd.col(j) = (adaptive_jump_map(up, a, r) - adaptive_jump_map(dn, a, r)) / (2 * h);
      }
      CHECK((Jfd - J).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((adaptive_jump_map(x, a, r) - (x + r * u)).norm() < 1e-12);
    }
  }
}

TEST_CASE("RJ samplers recover posterior model probabilities") {
  const std::vector<double> w{0.2, 0.5, 0.3};
  FiniteModelFamily fam({gaussian_member(1, std::log(w[0]), 0.5, 1.0, "a"),
                         gaussian_member(2, std::log(w[1]), -1.0, 0.7, "b"),
                         gaussian_member(3, std::log(w[2]), 2.0, 1.3, "c")});
  struct Case {
    const char* name;
    TransDimConfig cfg;
  };
  std::vector<Case> cases{{"mtm fixed", TransDimConfig::mtm_fixed(5, 1.0, 1.0)},
                          {"mtm one try", TransDimConfig::mtm_fixed(1, 1.0, 1.0)},
                          {"mtm adaptive", TransDimConfig::mtm_adaptive(5, 1.0)},
                          {"birth-death", TransDimConfig::birth_death(1.0)}};
  for (auto& c : cases) {
    CAPTURE(c.name);
    Rng rng(17);
    const ModelSelectionResult res = run_model_selection(fam, c.cfg, 300000, 0.1, start_at(fam, 0), rng);
    double tv = 0.0;
    for (ModelId k = 0; k < 3; ++k) {
      const double occ = res.occupancy(k);
      CHECK(std::fabs(occ - w[k]) < 4.0 * res.occupancy_mc_sd(k) + 0.005);
      tv += 0.5 * std::fabs(occ - w[k]);
    }
    CHECK(tv < 0.02);
    const auto bf = res.bayes_factor(fam, 1, 0);
    REQUIRE(bf.has_value());
    CHECK(*bf == doctest::Approx(w[1] / w[0]).epsilon(0.1));
  }
}

TEST_CASE("within-model draws follow the model's density") {
  FiniteModelFamily fam({gaussian_member(1, 0.0, 0.0, 1.0, "a"), gaussian_member(1, 0.0, 3.0, 0.5, "b")});
  Rng rng(8);
  ChainState st = start_at(fam, 0);
  const TransDimConfig cfg = TransDimConfig::mtm_fixed(5, 2.0, 1.0);
  std::vector<double> a, b;
  for (long t = 0; t < 400000; ++t) {
    if (rng.uniform() < cfg.move_mix) {
      mtm_rj_step(fam, st, cfg, rng);
    } else {
      within_model_sweep(fam, st, cfg.within_sd, rng);
    }
    (st.model == 0 ? a : b).push_back(st.theta[0]);
  }
  const double frac = static_cast<double>(a.size()) / 400000.0;
  CHECK(frac == doctest::Approx(0.5).epsilon(0.04));
  // 15-bin histograms against the exact normals.
  auto tv_of = [](const std::vector<double>& xs, double m, double s) {
    const auto probs = testing::normal_bin_probs(0.0, 1.0, -3.0, 3.0, 13);
    std::vector<double> h(probs.size(), 0.0);
    for (double x : xs) h[testing::bin_of((x - m) / s, -3.0, 3.0, 13)] += 1.0;
    return testing::total_variation(h, probs);
  };
  CHECK(tv_of(a, 0.0, 1.0) < 0.03);
  CHECK(tv_of(b, 3.0, 0.5) < 0.03);
}

TEST_CASE("two identical models are visited equally") {
  FiniteModelFamily fam({gaussian_member(2, 0.0, 1.0, 1.0, "a"), gaussian_member(2, 0.0, 1.0, 1.0, "b")});
  Rng rng(21);
  const auto res = run_model_selection(fam, TransDimConfig::mtm_fixed(5, 1.0, 1.0), 200000, 0.1, start_at(fam, 0), rng);
  CHECK(std::fabs(res.occupancy(0) - 0.5) < 0.02);
}

TEST_CASE("nested Gaussian Bayes factor") {
  // y_i ~ N(theta, 1) with theta ~ N(0, 1) against the fixed theta = 0 model. The point model gets a
  // dummy N(0,1) coordinate so both members integrate to their evidences.
  const Vec y = (Vec(5) << 0.8, 1.4, 0.2, 1.1, 0.9).finished();
  const double n = 5.0, s = y.sum(), ss = y.squaredNorm();
  const double log_m0 = -0.5 * n * kLogTwoPi - 0.5 * ss;
  const double log_m1 = -0.5 * n * kLogTwoPi - 0.5 * std::log1p(n) - 0.5 * (ss - s * s / (n + 1.0));
  FiniteModelFamily::Member m0, m1;
  m0.dim = 1;
  m0.log_joint = [log_m0](const Vec& th) { return log_m0 + log_normal_pdf(th[0], 0.0, 1.0); };
  m1.dim = 1;
  m1.log_joint = [y](const Vec& th) {
    double v = log_normal_pdf(th[0], 0.0, 1.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) v += log_normal_pdf(y[i], th[0], 1.0);
    return v;
  };
  FiniteModelFamily fam({m0, m1});
  Rng rng(33);
  const auto res = run_model_selection(fam, TransDimConfig::mtm_fixed(5, 1.0, 1.0), 300000, 0.1, start_at(fam, 0), rng);
  const double p1 = 1.0 / (1.0 + std::exp(log_m0 - log_m1));
  CHECK(std::fabs(res.occupancy(1) - p1) < 3.0 * res.occupancy_mc_sd(1) + 0.003);
}

TEST_CASE("g-prior boundary moves are counted, not attempted") {
  const RegressionData d = gprior_synthetic(40, 3, 1, 5);
  const GPriorFamily fam(gprior_build(d.X, d.y, 50.0));
  Rng rng(2);
  ChainState st{7, fam.mode(7, fam.default_shared()), fam.default_shared()};
  int boundary = 0;
  for (int i = 0; i < 200; ++i) {
    ChainState tmp = st;
    const TransResult r = mtm_rj_step(fam, tmp, TransDimConfig::mtm_fixed(), rng);
    if (r.diagnostic == "boundary") {
      ++boundary;
      CHECK(tmp.model == st.model);
    }
  }
  CHECK(boundary > 50);
  CHECK(boundary < 150);
}

TEST_CASE("g-prior within-model posterior moments") {
  const RegressionData d = gprior_synthetic(50, 5, 2, 9);
  const GPriorModel model = gprior_build(d.X, d.y, 20.0);
  const GPriorFamily fam(model);
  const ModelId k = 0b10011;
  const auto idx = mask_to_indices(k, 5);
  ChainState st{k, fam.mode(k, fam.default_shared()), fam.default_shared()};
  Rng rng(12);
  Vec beta_sum = Vec::Zero(3);
  double s2_sum = 0.0;
  const long burn = 2000, iters = 200000;
  for (long t = 0; t < iters; ++t) {
    within_model_sweep(fam, st, 0.4, rng);
    fam.update_shared(k, st.theta, st.shared, rng);
    if (t >= burn) {
      beta_sum += st.theta;
      s2_sum += st.shared[0];
    }
  }
  const double kept = static_cast<double>(iters - burn);
  const Vec expect_beta = model.posterior_mean_beta(idx);
  const double expect_s2 = model.residual_quadratic(idx) / (model.n - 2.0);
  CHECK((beta_sum / kept - expect_beta).cwiseAbs().maxCoeff() < 0.01 * (1.0 + expect_beta.cwiseAbs().maxCoeff()));
  CHECK(s2_sum / kept == doctest::Approx(expect_s2).epsilon(0.01));
}

TEST_CASE("g-prior RJ inclusion matches enumeration") {
  const RegressionData d = gprior_synthetic(60, 6, 3, 3);
  const GPriorFamily fam(gprior_build(d.X, d.y, std::exp(6.0)));
  const EnumerationResult exact = gprior_enumerate(fam.model());
  for (auto cfg : {TransDimConfig::mtm_fixed(5, 1.0, 1.0), TransDimConfig::mtm_adaptive(5, 1.0)}) {
    CAPTURE(to_string(cfg.jump_kind));
    Rng rng(40);
    ChainState st{fam.default_start(), {}, fam.default_shared()};
    st.theta = fam.mode(st.model, st.shared);
    const auto res = run_model_selection(fam, cfg, 60000, 0.1, st, rng);
    for (int j = 0; j < 6; ++j) {
      CAPTURE(j);
      CHECK(std::fabs(res.inclusion[j] - exact.inclusion[j]) < 3.0 * res.inclusion_mc_sd[j] + 0.01);
    }
    CHECK(res.shared_mean[0] == doctest::Approx(exact.expected_sigma2).epsilon(0.03));
  }
}

TEST_CASE("TransDimConfig validation and json") {
  TransDimConfig c = TransDimConfig::mtm_fixed(3, 2.0, 0.5);
  CHECK_NOTHROW(c.validate());
  const TransDimConfig back = TransDimConfig::from_json(c.to_json());
  CHECK(back.num_tries == 3);
  CHECK(back.distance.mean == 2.0);
  CHECK(back.jump_kind == JumpKind::fixed);
  c.num_tries = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(jump_kind_from_string("birth_death") == JumpKind::birth_death);
  CHECK_THROWS(jump_kind_from_string("teleport"));
}
