#include "wlmix/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace wlmix {

namespace {
using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }
}  // namespace

json Estimate::to_json(bool include_timing) const {
  json j{{"method", method}, {"log_z", log_z}, {"diagnostics", diagnostics}, {"ok", ok}};
  if (!error.empty()) j["error"] = error;
  if (include_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

double log_mean_ratio(const std::vector<double>& log_gamma, const std::vector<double>& log_q, double power) {
  if (log_gamma.size() != log_q.size() || log_gamma.empty()) throw std::invalid_argument("log_mean_ratio: bad input sizes");
  std::vector<double> w(log_gamma.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = log_gamma[i] - log_q[i];
    w[i] = std::isnan(d) ? kNegInf : power * d;
  }
  return log_sum_exp(w) - std::log(static_cast<double>(w.size()));
}

double ess_from_log_weights(const std::vector<double>& log_w) {
  const double a = log_sum_exp(log_w);
  if (a == kNegInf) return 0.0;
  std::vector<double> sq(log_w.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = 2.0 * log_w[i];
  return std::exp(2.0 * a - log_sum_exp(sq));
}

Estimate importance_sampling(const TargetDensity& target, const Surrogate& surrogate, long n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("importance_sampling: n must be >= 1");
  if (!surrogate.has_sampler()) throw std::invalid_argument("importance_sampling: surrogate has no exact sampler");
  const auto t0 = Clock::now();
  std::vector<double> lg(n), lq(n), lw(n);
  for (long i = 0; i < n; ++i) {
    const Vec x = surrogate.sample(rng);
    lg[i] = target.log_gamma(x);
    lq[i] = surrogate.log_q(x);
    lw[i] = lg[i] - lq[i];
  }
  Estimate e;
  e.method = "is";
  e.log_z = log_mean_ratio(lg, lq) + surrogate.log_z_q;
  e.diagnostics["n"] = n;
  e.diagnostics["ess"] = ess_from_log_weights(lw);
  if (e.log_z == kNegInf) {
    e.diagnostics["warning"] = "all importance weights are zero";
  }
  e.wall_seconds = seconds_since(t0);
  return e;
}

BridgeResult bridge_sampling(const TargetDensity& target, const Surrogate& surrogate,
                             const std::vector<Vec>& samples_gamma, const std::vector<Vec>& samples_q, int max_iters,
                             double tol) {
  if (samples_gamma.empty() || samples_q.empty()) throw std::invalid_argument("bridge_sampling: empty sample set");
  const double n1 = static_cast<double>(samples_gamma.size());
  const double n2 = static_cast<double>(samples_q.size());
  std::vector<double> l1, l2;
  l1.reserve(samples_gamma.size());
  l2.reserve(samples_q.size());
  for (const Vec& x : samples_gamma) l1.push_back(target.log_gamma(x) - surrogate.log_q(x));
  for (const Vec& x : samples_q) l2.push_back(target.log_gamma(x) - surrogate.log_q(x));
  const double ls1 = std::log(n1 / (n1 + n2));
  const double ls2 = std::log(n2 / (n1 + n2));

  // Geometric bridge start.
  std::vector<double> a(l2.size()), b(l1.size());
  for (std::size_t j = 0; j < l2.size(); ++j) a[j] = 0.5 * l2[j];
  for (std::size_t i = 0; i < l1.size(); ++i) b[i] = -0.5 * l1[i];
  double log_r = (log_sum_exp(a) - std::log(n2)) - (log_sum_exp(b) - std::log(n1));

  BridgeResult res;
  for (int it = 1; it <= max_iters; ++it) {
    for (std::size_t j = 0; j < l2.size(); ++j) a[j] = l2[j] - log_sum_exp(ls1 + l2[j], ls2 + log_r);
    for (std::size_t i = 0; i < l1.size(); ++i) b[i] = -log_sum_exp(ls1 + l1[i], ls2 + log_r);
    const double next = (log_sum_exp(a) - std::log(n2)) - (log_sum_exp(b) - std::log(n1));
    res.iterations = it;
    const double rel = std::fabs(std::expm1(next - log_r));
    log_r = next;
    if (rel < tol) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged) {
    // With little overlap the iteration crawls. The fixed point is the root of a function
    // increasing in log r, so bisect on it instead.
    auto score = [&](double lr) {
      for (std::size_t i = 0; i < l1.size(); ++i) b[i] = lr - log_sum_exp(ls1 + l1[i], ls2 + lr);
      for (std::size_t j = 0; j < l2.size(); ++j) a[j] = l2[j] - log_sum_exp(ls1 + l2[j], ls2 + lr);
      return (log_sum_exp(b) - std::log(n1)) - (log_sum_exp(a) - std::log(n2));
    };
    double lo = log_r - 1.0, hi = log_r + 1.0;
    for (int k = 0; k < 200 && score(lo) > 0.0; ++k) lo -= 2.0 * (hi - lo);
    for (int k = 0; k < 200 && score(hi) < 0.0; ++k) hi += 2.0 * (hi - lo);
    if (score(lo) <= 0.0 && score(hi) >= 0.0) {
      for (int k = 0; k < 200 && hi - lo > 1e-12 * std::max(1.0, std::fabs(lo)); ++k) {
        const double mid = 0.5 * (lo + hi);
        (score(mid) < 0.0 ? lo : hi) = mid;
      }
      log_r = 0.5 * (lo + hi);
      res.converged = true;
      res.root_solved = true;
    }
  }
  res.log_r = log_r;

  // Delta-method relative variance of the numerator and denominator averages at the fixed point.
  auto rel_var = [&](const std::vector<double>& l, bool numerator) {
    std::vector<double> f(l.size());
    for (std::size_t k = 0; k < l.size(); ++k) {
      const double den = log_sum_exp(ls1 + l[k], ls2 + log_r);
      f[k] = std::exp((numerator ? l[k] : 0.0) - den);
    }
    const MeanSd ms = mean_sd(f);
    return ms.mean > 0.0 ? (ms.sd * ms.sd) / (ms.mean * ms.mean) : 0.0;
  };
  res.relative_mse = rel_var(l2, true) / n2 + rel_var(l1, false) / n1;
  return res;
}

Estimate stepping_stone(const TargetDensity& target, const Surrogate& surrogate, const SteppingStoneConfig& config,
                        Rng& rng) {
  const auto& lam = config.ladder;
  if (lam.size() < 2 || lam.front() != 0.0 || lam.back() != 1.0) {
    throw std::invalid_argument("stepping_stone: ladder must run from 0 to 1");
  }
  for (std::size_t j = 1; j < lam.size(); ++j) {
    if (!(lam[j] > lam[j - 1])) throw std::invalid_argument("stepping_stone: ladder must be strictly increasing");
  }
  if (config.per_rung_samples < 1) throw std::invalid_argument("stepping_stone: per_rung_samples must be >= 1");
  const auto t0 = Clock::now();
  const long n = config.per_rung_samples;
  Estimate e;
  e.method = "ss";
  double total = 0.0;
  json rungs = json::array();
  Vec x;
  if (config.init) x = *config.init;
  else if (surrogate.has_sampler()) x = surrogate.sample(rng);
  else x = surrogate.mode.value_or(Vec::Zero(target.dim));

  std::vector<double> lg(n), lq(n);
  for (std::size_t j = 1; j < lam.size(); ++j) {
    const double from = lam[j - 1];
    const double dl = lam[j] - from;
    json rinfo{{"lambda_from", from}, {"lambda_to", lam[j]}};
    try {
      if (from == 0.0 && surrogate.has_sampler()) {
        for (long i = 0; i < n; ++i) {
          const Vec y = surrogate.sample(rng);
          lg[i] = target.log_gamma(y);
          lq[i] = surrogate.log_q(y);
          if (i == n - 1) x = y;
        }
      } else {
        PathDensity pd = geometric_path_density(target, surrogate, from);
        Kernel k(config.kernel, pd.log_density, pd.grad, nullptr);
        if (config.init_points.size() == lam.size()) x = config.init_points[j - 1];
        double lx = pd.log_density(x);
        if (!std::isfinite(lx)) throw std::domain_error("rung chain started outside the support");
        for (long b = 0; b < config.burn_in; ++b) k.step(x, lx, rng);
        for (long i = 0; i < n; ++i) {
          for (int s = 0; s < std::max(1, config.thin); ++s) k.step(x, lx, rng);
          lg[i] = target.log_gamma(x);
          lq[i] = surrogate.log_q(x);
        }
        rinfo["accept_rate"] = k.stats().accept_rate();
      }
      const double lr = log_mean_ratio(lg, lq, dl);
      if (!std::isfinite(lr)) throw std::domain_error("non-finite rung ratio");
      rinfo["log_r"] = lr;
      total += lr;
    } catch (const std::exception& ex) {
      rinfo["error"] = ex.what();
      e.ok = false;
      e.error = "rung " + std::to_string(j) + " failed: " + ex.what();
    }
    rungs.push_back(rinfo);
  }
  e.log_z = total + surrogate.log_z_q;
  e.diagnostics["rungs"] = rungs;
  e.diagnostics["ladder_length"] = lam.size();
  e.wall_seconds = seconds_since(t0);
  return e;
}

std::vector<std::size_t> systematic_resample(const std::vector<double>& log_w, Rng& rng) {
  const std::size_t n = log_w.size();
  const double z = log_sum_exp(log_w);
  std::vector<std::size_t> idx(n);
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t i = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double target = (static_cast<double>(k) + u) / static_cast<double>(n);
    while (i < n - 1 && cum + std::exp(log_w[i] - z) < target) {
      cum += std::exp(log_w[i] - z);
      ++i;
    }
    idx[k] = i;
  }
  return idx;
}

namespace {

/// Conditional ESS of the incremental weights delta * d_i under normalized weights W (log).
double cess(const std::vector<double>& log_W, const std::vector<double>& d, double delta) {
  const std::size_t n = d.size();
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = log_W[i] + delta * d[i];
    b[i] = log_W[i] + 2.0 * delta * d[i];
  }
  return static_cast<double>(n) * std::exp(2.0 * log_sum_exp(a) - log_sum_exp(b));
}

}  // namespace

SmcResult smc_estimate(const TargetDensity& target, const Surrogate& proposal, const SmcConfig& config, Rng& rng) {
  if (config.n_particles < 2) throw std::invalid_argument("smc_estimate: need at least 2 particles");
  if (!(config.cess_threshold > 0.0 && config.cess_threshold < 1.0)) throw std::invalid_argument("smc_estimate: kappa must lie in (0,1)");
  if (!proposal.has_sampler()) throw std::invalid_argument("smc_estimate: proposal has no exact sampler");
  const auto t0 = Clock::now();
  const int N = config.n_particles;
  SmcResult res;
  res.estimate.method = "smc";

  std::vector<Vec> xs(N);
  std::vector<double> lg(N), lq(N), d(N);
  const double log_inv_n = -std::log(static_cast<double>(N));
  std::vector<double> log_W(N, log_inv_n);
  for (int i = 0; i < N; ++i) {
    xs[i] = proposal.sample(rng);
    lg[i] = target.log_gamma(xs[i]);
    lq[i] = proposal.log_q(xs[i]);
  }
  double lambda = 0.0;
  double log_z = 0.0;
  res.ladder.push_back(0.0);
  res.rung_points.push_back(xs[0]);
  KernelStats stats;
  std::size_t fixed_pos = 1;
  bool bisection_failed = false;

  while (lambda < 1.0) {
    for (int i = 0; i < N; ++i) {
      d[i] = lg[i] - lq[i];
      if (std::isnan(d[i])) d[i] = kNegInf;
    }
    double next;
    if (!config.fixed_ladder.empty()) {
      if (fixed_pos >= config.fixed_ladder.size()) throw std::invalid_argument("smc_estimate: fixed ladder must end at 1");
      next = config.fixed_ladder[fixed_pos++];
    } else {
      const double goal = config.cess_threshold * N;
      if (cess(log_W, d, 1.0 - lambda) >= goal) {
        next = 1.0;
      } else {
        double lo = lambda, hi = 1.0;
        if (!(cess(log_W, d, 0.0) >= goal)) {
          bisection_failed = true;
          next = 1.0;
        } else {
          while (hi - lo > config.bisection_tol) {
            const double mid = 0.5 * (lo + hi);
            if (cess(log_W, d, mid - lambda) >= goal) lo = mid;
            else hi = mid;
          }
          next = std::max(lo, lambda + config.bisection_tol);
          if (next > 1.0) next = 1.0;
        }
      }
    }
    const double delta = next - lambda;
    std::vector<double> lw(N);
    for (int i = 0; i < N; ++i) lw[i] = log_W[i] + (delta == 0.0 ? 0.0 : delta * d[i]);
    const double inc = log_sum_exp(lw);
    log_z += inc;
    for (int i = 0; i < N; ++i) log_W[i] = lw[i] - inc;
    lambda = next;
    res.ladder.push_back(lambda);

    if (ess_from_log_weights(log_W) < config.resample_threshold * N) {
      const auto idx = systematic_resample(log_W, rng);
      std::vector<Vec> nx(N);
      std::vector<double> ng(N), nq(N);
      for (int i = 0; i < N; ++i) {
        nx[i] = xs[idx[i]];
        ng[i] = lg[idx[i]];
        nq[i] = lq[idx[i]];
      }
      xs.swap(nx);
      lg.swap(ng);
      lq.swap(nq);
      std::fill(log_W.begin(), log_W.end(), log_inv_n);
      ++res.resamples;
    }

    if (config.kernel_steps > 0) {
      PathDensity pd = geometric_path_density(target, proposal, lambda);
      // Gibbs blocks sample the target's conditionals, so they are only valid at lambda = 1.
      Kernel k(config.kernel, pd.log_density, pd.grad, lambda == 1.0 ? &target : nullptr);
      for (int i = 0; i < N; ++i) {
        double lx = lambda == 1.0 ? lg[i] : (lambda == 0.0 ? lq[i] : (1.0 - lambda) * lq[i] + lambda * lg[i]);
        if (!std::isfinite(lx)) continue;
        bool moved = false;
        for (int s = 0; s < config.kernel_steps; ++s) moved = k.step(xs[i], lx, rng) || moved;
        if (moved) {
          lg[i] = target.log_gamma(xs[i]);
          lq[i] = proposal.log_q(xs[i]);
        }
      }
      stats.merge(k.stats());
    }
    res.rung_points.push_back(xs[0]);
  }

  res.particles = xs;
  res.estimate.log_z = log_z + proposal.log_z_q;
  res.estimate.diagnostics["ladder_length"] = res.ladder.size();
  res.estimate.diagnostics["resamples"] = res.resamples;
  res.estimate.diagnostics["accept_rate"] = stats.accept_rate();
  res.estimate.diagnostics["bisection"] = {{"tol", config.bisection_tol}, {"kappa", config.cess_threshold},
                                           {"failed_to_bracket", bisection_failed}};
  res.estimate.diagnostics["ladder"] = res.ladder;
  res.estimate.wall_seconds = seconds_since(t0);
  return res;
}

Estimate chib_estimate(const TargetDensity& target, const ChibConfig& config, Rng& rng) {
  if (!target.has_conditionals()) {
    throw std::invalid_argument("chib_estimate: every Gibbs block needs an evaluable conditional density");
  }
  if (config.n < 1) throw std::invalid_argument("chib_estimate: n must be >= 1");
  const auto t0 = Clock::now();
  const auto& blocks = target.gibbs_blocks;
  const std::size_t K = blocks.size();
  Vec x = config.init.value_or(Vec::Zero(target.dim));

  auto sweep_from = [&](std::size_t first, Vec& p) {
    for (std::size_t b = first; b < K; ++b) blocks[b].sample(p, rng);
  };

  // Main run.
  for (long i = 0; i < config.burn_in; ++i) sweep_from(0, x);
  std::vector<Vec> draws;
  draws.reserve(config.n);
  Vec mean = Vec::Zero(target.dim);
  for (long i = 0; i < config.n; ++i) {
    sweep_from(0, x);
    draws.push_back(x);
    mean += x;
  }
  mean /= static_cast<double>(config.n);
  const Vec anchor = config.anchor.value_or(mean);

  auto set_block = [&](Vec& p, std::size_t b) {
    for (auto c : blocks[b].coords) p[c] = anchor[c];
  };

  Estimate e;
  e.method = "chib";
  const double log_gamma_star = target.log_gamma(anchor);
  if (!std::isfinite(log_gamma_star)) throw std::domain_error("chib_estimate: anchor has zero density");
  double sum_ord = 0.0;
  json ords = json::array();
  double min_ess = static_cast<double>(config.n);
  for (std::size_t b = 0; b < K; ++b) {
    double lo;
    if (b + 1 == K) {
      lo = blocks[b].log_conditional(anchor);
    } else {
      std::vector<Vec> reduced;
      if (b == 0) {
        reduced = std::move(draws);
      } else {
        Vec p = x;
        for (std::size_t f = 0; f < b; ++f) set_block(p, f);
        for (long i = 0; i < config.burn_in; ++i) sweep_from(b, p);
        reduced.reserve(config.n);
        for (long i = 0; i < config.n; ++i) {
          sweep_from(b, p);
          reduced.push_back(p);
        }
      }
      std::vector<double> v(reduced.size());
      for (std::size_t i = 0; i < reduced.size(); ++i) {
        Vec p = reduced[i];
        for (std::size_t f = 0; f <= b; ++f) set_block(p, f);
        v[i] = blocks[b].log_conditional(p);
      }
      lo = log_mean_exp(v);
      min_ess = std::min(min_ess, ess_from_log_weights(v));
    }
    ords.push_back({{"block", blocks[b].name}, {"log_ordinate", lo}});
    sum_ord += lo;
  }
  e.log_z = log_gamma_star - sum_ord;
  e.diagnostics["ordinates"] = ords;
  e.diagnostics["log_gamma_anchor"] = log_gamma_star;
  e.diagnostics["ordinate_ess_min"] = min_ess;
  if (min_ess < 10.0) e.diagnostics["warning"] = "anchor lies where the ordinate average has tiny ESS; estimate has large variance";
  e.wall_seconds = seconds_since(t0);
  return e;
}

}  // namespace wlmix
