#include "wlmix/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "wlmix/io.hpp"
#include "wlmix/models.hpp"
#include "wlmix/surrogate.hpp"

namespace wlmix {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<T>() : fallback;
}

Vec json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Mat json_mat(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Mat m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
  }
  return m;
}

/// Gaussian fitted to draws with the covariance scaled by scale^2.
Surrogate scaled_gaussian_fit(const std::vector<Vec>& samples, double scale) {
  const Surrogate fit = fit_gaussian_from_samples(samples);
  if (scale == 1.0) return fit;
  return make_gaussian(json_vec(fit.params.at("mean")), scale * scale * json_mat(fit.params.at("cov")));
}

std::vector<Vec> run_chain(const TargetDensity& target, const KernelSpec& spec, Vec x, long n, long burn, int thin,
                           Rng& rng) {
  Kernel kernel(spec, target.log_gamma, target.grad_log_gamma, &target);
  double lx = target.log_gamma(x);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(std::max(0L, n)));
  for (long t = 0; t < burn; ++t) kernel.step(x, lx, rng);
  for (long i = 0; i < n; ++i) {
    for (int s = 0; s < thin; ++s) kernel.step(x, lx, rng);
    out.push_back(x);
  }
  return out;
}

std::string resolve(const json& spec, const char* key, const fs::path& base_dir) {
  fs::path p = spec.at(key).get<std::string>();
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return p.string();
}

// ---- individual model builders ----------------------------------------------

/// Random walk scaled to the surrogate's spread, 2.38 / sqrt(d) times the average coordinate sd.
KernelSpec default_path_kernel(const ModelInstance& m) {
  const int d = m.target.dim;
  double sd = 1.0;
  if (m.surrogate.has_sampler()) {
    Rng rng(0, 0);
    std::vector<Vec> xs;
    for (int i = 0; i < 400; ++i) xs.push_back(m.surrogate.sample(rng));
    Vec mean = Vec::Zero(d), sq = Vec::Zero(d);
    for (const Vec& x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (const Vec& x : xs) sq += (x - mean).cwiseAbs2();
    sd = (sq / static_cast<double>(xs.size() - 1)).cwiseSqrt().mean();
  }
  return KernelSpec::rwm(2.38 / std::sqrt(static_cast<double>(d)) * sd);
}

ModelInstance build_mvn(const json& s) {
  const int dim = get_or(s, "dim", 20);
  const double mu = get_or(s, "mu", 3.0);
  MvnPair pair = mvn_pair(dim, mu);
  ModelInstance m;
  m.target = pair.target;
  m.surrogate = pair.surrogate;
  m.prior = pair.surrogate;
  m.target_mode = Vec::Zero(dim);
  m.log_z_true = 0.0;
  m.kernel = KernelSpec::gibbs();
  m.init = Vec::Zero(dim);
  return m;
}

ModelInstance build_gauss1d(const json& s) {
  ModelInstance m;
  m.target = gauss1d_unnormalized();
  m.surrogate = make_diagonal_gaussian(Vec::Constant(1, get_or(s, "q_mean", 0.5)), Vec::Constant(1, get_or(s, "q_sd", 1.5)));
  m.target_mode = Vec::Zero(1);
  m.log_z_true = 0.5 * kLogTwoPi;
  m.kernel = KernelSpec::gibbs();
  m.init = Vec::Zero(1);
  return m;
}

ModelInstance build_normal_normal(const json& s) {
  const int dim = get_or(s, "dim", 1);
  const int n = get_or(s, "n_obs", 5);
  const double prior_sd = get_or(s, "prior_sd", 2.0);
  const double noise_sd = get_or(s, "noise_sd", 1.0);
  const double scale = get_or(s, "surrogate_scale", 1.5);
  Rng rng(get_or<std::uint64_t>(s, "seed", 1), 0);
  const Vec theta = prior_sd * rng.normal_vector(dim);
  Mat obs(n, dim);
  for (int i = 0; i < n; ++i) obs.row(i) = (theta + noise_sd * rng.normal_vector(dim)).transpose();
  const double rho = get_or(s, "prior_corr", 0.0);
  if (!(rho > -1.0 / std::max(1, dim - 1) && rho < 1.0)) throw std::invalid_argument("prior_corr out of range");
  Mat prior_cov = Mat::Constant(dim, dim, rho);
  prior_cov.diagonal().setOnes();
  prior_cov *= prior_sd * prior_sd;
  NormalNormalModel nn = normal_normal(obs, Vec::Zero(dim), prior_cov, noise_sd * noise_sd * Mat::Identity(dim, dim));
  ModelInstance m;
  m.target = nn.target;
  MeanFieldGaussian init{Vec::Zero(dim), Vec::Ones(dim)};
  CaviResult fit = cavi_fit(nn.target, init);
  MeanFieldGaussian q = fit.q;
  q.sds *= scale;
  m.surrogate = q.to_surrogate();
  m.prior = nn.prior;
  m.target_mode = nn.post_mean;
  m.log_z_true = nn.log_evidence;
  m.kernel = KernelSpec::gibbs();
  m.init = nn.post_mean;
  m.summary["elbo"] = fit.trace.values.back();
  return m;
}

ModelInstance build_nig(const json& s) {
  const int n = get_or(s, "n", 20);
  const int p = get_or(s, "p", 2);
  const double a0 = get_or(s, "a0", 2.0), b0 = get_or(s, "b0", 1.0), v0 = get_or(s, "v0", 4.0);
  const double scale = get_or(s, "surrogate_scale", 1.2);
  const std::uint64_t seed = get_or<std::uint64_t>(s, "seed", 1);
  Rng rng(seed, 0);
  Mat X(n, p);
  for (int i = 0; i < n; ++i) X.row(i) = rng.normal_vector(p).transpose();
  Vec beta(p);
  for (int j = 0; j < p; ++j) beta[j] = j % 2 == 0 ? 1.0 : -0.5;
  const Vec y = X * beta + 0.5 * rng.normal_vector(n);
  NigRegressionModel nig = nig_regression(X, y, v0 * Mat::Identity(p, p), a0, b0);
  ModelInstance m;
  m.target = nig.target;
  m.log_z_true = nig.log_evidence;
  m.kernel = KernelSpec::gibbs();
  Vec init = Vec::Zero(p + 1);
  init[p] = std::log(0.25);
  Rng pilot(seed, 1);
  const auto draws = run_chain(m.target, m.kernel, init, 4000, 500, 1, pilot);
  m.surrogate = scaled_gaussian_fit(draws, scale);
  m.init = draws.back();
  m.target_mode = json_vec(m.surrogate.params.at("mean"));

  // s2 ~ IG(a0, b0), beta | s2 ~ N(0, s2 v0 I), in (beta, log s2).
  Surrogate prior;
  prior.dim = p + 1;
  prior.family = "nig_prior";
  prior.params = {{"a0", a0}, {"b0", b0}, {"v0", v0}};
  prior.log_q = [p, a0, b0, v0](const Vec& th) {
    const double xi = th[p];
    const double s2 = std::exp(xi);
    return -0.5 * p * (kLogTwoPi + std::log(v0) + xi) - 0.5 * th.head(p).squaredNorm() / (v0 * s2) + a0 * std::log(b0) -
           std::lgamma(a0) - a0 * xi - b0 / s2;
  };
  prior.sample = [p, a0, b0, v0](Rng& r) {
    Vec th(p + 1);
    const double s2 = 1.0 / r.gamma(a0, 1.0 / b0);
    th.head(p) = std::sqrt(s2 * v0) * r.normal_vector(p);
    th[p] = std::log(s2);
    return th;
  };
  m.prior = prior;
  return m;
}

ModelInstance build_lgcp(const json& s, const fs::path& base_dir) {
  const int M = get_or(s, "M", 10);
  LgcpData data = s.contains("data") ? lgcp_load_points_csv(M, resolve(s, "data", base_dir))
                                     : lgcp_synthetic(M, get_or<std::uint64_t>(s, "seed", 1));
  LgcpModel lg = lgcp_build(data);
  const double default_sd = M <= 10 ? 1.0 : (M <= 20 ? 1.2 : 1.3);
  const double qsd = get_or(s, "q_sd", default_sd);
  const Vec mode = lg.newton_mode();
  ModelInstance m;
  m.target = lg.target;
  m.surrogate = make_diagonal_gaussian(mode, Vec::Constant(M * M, qsd));
  m.prior = lg.prior_surrogate();
  m.target_mode = mode;
  m.kernel = KernelSpec::hmc(get_or(s, "hmc_step", 0.25), get_or(s, "leapfrog_steps", 10));
  m.init = mode;
  m.summary["total_count"] = data.counts.sum();
  return m;
}

ModelInstance build_lasso(const json& s, const fs::path& base_dir) {
  RegressionData d = s.contains("data")
                         ? load_regression_csv(resolve(s, "data", base_dir))
                         : lasso_synthetic(get_or(s, "n", 150), get_or(s, "p", 30), get_or(s, "snr", 3.0),
                                           get_or<std::uint64_t>(s, "seed", 1));
  const double lambda = get_or(s, "lambda", 10.0);
  const double scale = get_or(s, "surrogate_scale", 1.0);
  LassoModel lm = lasso_build(d.X, d.y, lambda);
  const auto [m0, s0] = lm.cavi_init();
  CaviResult fit = cavi_fit(lm.target, MeanFieldGaussian{m0, s0});
  MeanFieldGaussian q = fit.q;
  q.sds *= scale;
  ModelInstance m;
  m.target = lm.target;
  m.surrogate = q.to_surrogate();
  m.target_mode = fit.q.means;
  m.kernel = KernelSpec::gibbs();
  m.init = fit.q.means;
  m.summary["elbo"] = fit.trace.values.back();
  m.summary["cavi_sweeps"] = static_cast<int>(fit.trace.values.size()) - 1;
  return m;
}

ModelInstance build_logistic(const json& s, const fs::path& base_dir) {
  LogisticData d;
  const double lambda_h = get_or(s, "lambda_h", 1.0);
  const std::uint64_t seed = get_or<std::uint64_t>(s, "seed", 1);
  if (s.contains("data")) {
    RegressionData r = load_regression_csv(resolve(s, "data", base_dir));
    d.X = get_or(s, "interactions", false) ? interaction_expand(r.X) : r.X;
    if (!get_or(s, "interactions", false) && d.X.rows() > 1) standardize_columns(d.X);
    d.y = r.y;
  } else {
    d = logistic_synthetic(get_or(s, "n", 100), get_or(s, "p_raw", 2), get_or(s, "interactions", false), lambda_h,
                           seed);
  }
  LogisticModel lm = logistic_build(d.X, d.y, lambda_h);
  const int p = lm.p;
  ModelInstance m;
  m.target = lm.target;
  m.kernel = KernelSpec::hmc(get_or(s, "hmc_step", p <= 10 ? 0.2 : 0.03), get_or(s, "leapfrog_steps", 10));
  Vec init = Vec::Zero(p + 2);
  init[p + 1] = -std::log(lambda_h);
  init = locate_mode_gradient(m.target, init);
  Rng pilot(seed, 1);
  const long pilot_n = get_or(s, "pilot_draws", 2000L);
  const auto draws = run_chain(m.target, m.kernel, init, pilot_n, pilot_n / 2, 1, pilot);
  m.surrogate = scaled_gaussian_fit(draws, get_or(s, "surrogate_scale", 1.0));
  m.target_mode = init;
  m.init = draws.back();
  const double K = p + 1.0;
  Surrogate prior;
  prior.dim = p + 2;
  prior.family = "logistic_prior";
  prior.params = {{"lambda_h", lambda_h}};
  prior.log_q = [p, K, lambda_h](const Vec& th) {
    const double ell = th[p + 1];
    const double s2 = std::exp(ell);
    const double c2 = th.head(p + 1).squaredNorm();
    return std::log(lambda_h) - lambda_h * s2 + ell - 0.5 * K * (kLogTwoPi + ell) - 0.5 * c2 / s2;
  };
  prior.sample = [p, lambda_h](Rng& r) {
    Vec th(p + 2);
    const double s2 = r.exponential(lambda_h);
    th.head(p + 1) = std::sqrt(s2) * r.normal_vector(p + 1);
    th[p + 1] = std::log(s2);
    return th;
  };
  m.prior = prior;
  if (lm.n == 0) m.log_z_true = 0.0;
  return m;
}

std::string model_label(const json& spec) {
  if (spec.contains("label")) return spec.at("label").get<std::string>();
  std::string out = spec.at("name").get<std::string>();
  std::string args;
  for (const auto& [k, v] : spec.items()) {
    if (k == "name") continue;
    if (!args.empty()) args += ",";
    args += k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
  }
  return args.empty() ? out : out + "[" + args + "]";
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return out;
}

}  // namespace

Vec locate_mode_gradient(const TargetDensity& target, Vec x, int max_iters) {
  if (!target.has_gradient()) return x;
  double f = target.log_gamma(x);
  double step = 0.1;
  for (int it = 0; it < max_iters; ++it) {
    const Vec g = target.grad_log_gamma(x);
    if (g.norm() < 1e-6) break;
    bool moved = false;
    for (int k = 0; k < 50; ++k) {
      const Vec xn = x + step * g;
      const double fn = target.log_gamma(xn);
      if (fn > f) {
        x = xn;
        f = fn;
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return x;
}

std::vector<std::string> registered_models() {
  return {"mvn", "gauss1d", "normal_normal", "nig", "lgcp", "lasso", "logistic"};
}

std::vector<std::string> registered_methods() { return {"wl", "awl", "pwl", "is", "bridge", "ss", "smc", "chib"}; }

ModelInstance build_model(const json& spec, const fs::path& base_dir) {
  if (!spec.is_object() || !spec.contains("name")) throw std::invalid_argument("model spec needs a name");
  const std::string name = spec.at("name").get<std::string>();
  ModelInstance m;
  if (name == "mvn") m = build_mvn(spec);
  else if (name == "gauss1d") m = build_gauss1d(spec);
  else if (name == "normal_normal") m = build_normal_normal(spec);
  else if (name == "nig") m = build_nig(spec);
  else if (name == "lgcp") m = build_lgcp(spec, base_dir);
  else if (name == "lasso") m = build_lasso(spec, base_dir);
  else if (name == "logistic") m = build_logistic(spec, base_dir);
  else throw std::invalid_argument("unknown model: " + name);
  if (spec.contains("path_kernel")) m.path_kernel = KernelSpec::from_json(spec.at("path_kernel"));
  else m.path_kernel = m.kernel.kind == KernelKind::gibbs ? default_path_kernel(m) : m.kernel;
  m.name = name;
  m.label = model_label(spec);
  m.params = spec;
  m.summary["dim"] = m.target.dim;
  if (m.log_z_true) m.summary["log_z_true"] = *m.log_z_true;
  return m;
}

std::vector<Vec> sample_target(const ModelInstance& model, long n, long burn_in, int thin, Rng& rng) {
  return run_chain(model.target, model.kernel, model.init, n, burn_in, std::max(1, thin), rng);
}

std::optional<KernelSpec> mode_jump_spec(const ModelInstance& model, int tries, double r_mean, double r_sd) {
  if (!model.target_mode || !model.surrogate.mode) return std::nullopt;
  const Vec e = *model.surrogate.mode - *model.target_mode;
  if (!(e.norm() > 0.0)) return std::nullopt;
  return KernelSpec::directional({e, Vec(-e)}, DistanceDist{r_mean, r_sd}, tries);
}

// ---- method dispatch ----------------------------------------------------------

namespace {

WlConfig wl_config_for(const ModelInstance& model, const json& cfg, bool momentum) {
  WlConfig base;
  base.kernel_gamma = model.kernel;
  if (momentum) base.momentum_beta = 0.9;
  json j = base.to_json();
  json patch = cfg;
  patch.erase("mode_jump");
  j.merge_patch(patch);
  WlConfig c = WlConfig::from_json(j);
  if (cfg.contains("mode_jump") && !cfg.at("mode_jump").is_null()) {
    const json& mj = cfg.at("mode_jump");
    auto spec = mode_jump_spec(model, get_or(mj, "tries", 8), get_or(mj, "r_mean", 1.0), get_or(mj, "r_sd", 0.05));
    if (!spec) throw std::invalid_argument("mode_jump needs distinct target and surrogate modes");
    c.mtm_jump = *spec;
    c.mtm_jump_prob = get_or(mj, "prob", 0.8);
  }
  c.record_traces = get_or(cfg, "record_traces", false);
  c.validate();
  return c;
}

const Surrogate& reference_for(const ModelInstance& model, const json& cfg) {
  const std::string ref = get_or<std::string>(cfg, "reference", model.prior ? "prior" : "surrogate");
  if (ref == "prior") {
    if (!model.prior) throw std::invalid_argument("model has no proper prior; use reference=surrogate");
    return *model.prior;
  }
  if (ref != "surrogate") throw std::invalid_argument("reference must be prior or surrogate");
  return model.surrogate;
}

SmcConfig smc_config_for(const ModelInstance& model, const json& cfg) {
  SmcConfig c;
  c.kernel = cfg.contains("kernel") ? KernelSpec::from_json(cfg.at("kernel")) : model.path_kernel;
  c.n_particles = get_or(cfg, "n_particles", c.n_particles);
  c.kernel_steps = get_or(cfg, "kernel_steps", c.kernel_steps);
  c.cess_threshold = get_or(cfg, "cess", c.cess_threshold);
  c.resample_threshold = get_or(cfg, "resample_threshold", c.resample_threshold);
  c.bisection_tol = get_or(cfg, "bisection_tol", c.bisection_tol);
  if (cfg.contains("ladder")) c.fixed_ladder = cfg.at("ladder").get<std::vector<double>>();
  return c;
}

MethodOutcome from_estimate(const Estimate& e) {
  MethodOutcome o;
  o.method = e.method;
  o.log_z = e.log_z;
  o.ok = e.ok && std::isfinite(e.log_z);
  o.error = e.ok && !std::isfinite(e.log_z) ? "non-finite estimate" : e.error;
  o.wall_seconds = e.wall_seconds;
  o.record = e.to_json(false);
  return o;
}

MethodOutcome from_record(const RunRecord& r) {
  MethodOutcome o;
  o.method = r.method;
  o.log_z = r.final_log_z;
  o.ok = r.ok && std::isfinite(r.final_log_z);
  o.error = r.ok && !std::isfinite(r.final_log_z) ? "non-finite estimate" : r.error;
  o.wall_seconds = r.wall_seconds;
  o.record = r.to_json(false);
  return o;
}

}  // namespace

MethodOutcome run_method(const ModelInstance& model, const std::string& method, const json& config, Rng& rng) {
  const json cfg = config.is_null() ? json::object() : config;
  const auto t0 = Clock::now();
  MethodOutcome out;
  try {
    if (method == "wl" || method == "awl") {
      const WlConfig c = wl_config_for(model, cfg, method == "awl");
      out = from_record(wl_estimate(model.target, model.surrogate, c, rng));
    } else if (method == "pwl") {
      PwlLadder ladder;
      ladder.lambdas = geometric_ladder(get_or(cfg, "rungs", 4), get_or(cfg, "power", 1.0));
      const json rung_cfg = get_or(cfg, "rung", json::object());
      const WlConfig rung = wl_config_for(model, rung_cfg, false);
      // Only the top pair's upper component is the target itself.
      for (std::size_t j = 0; j + 1 < ladder.lambdas.size(); ++j) {
        WlConfig c = rung;
        if (!rung_cfg.contains("kernel_q")) c.kernel_q = model.path_kernel;
        if (j + 2 < ladder.lambdas.size() && !rung_cfg.contains("kernel_gamma")) c.kernel_gamma = model.path_kernel;
        ladder.configs.push_back(c);
      }
      if (get_or(cfg, "smc_init", false)) {
        SmcConfig sc = smc_config_for(model, get_or(cfg, "smc", json::object()));
        sc.fixed_ladder = ladder.lambdas;
        ladder.init_points = smc_estimate(model.target, model.surrogate, sc, rng).rung_points;
      }
      out = from_record(pwl_estimate(model.target, model.surrogate, ladder, rng, get_or(cfg, "workers", 1)));
    } else if (method == "is") {
      out = from_estimate(importance_sampling(model.target, model.surrogate, get_or(cfg, "n", 10000L), rng));
    } else if (method == "bridge") {
      const long ng = get_or(cfg, "n_gamma", 2500L), nq = get_or(cfg, "n_q", 2500L);
      const auto xs = sample_target(model, ng, get_or(cfg, "burn_in", 500L), get_or(cfg, "thin", 1), rng);
      if (!model.surrogate.has_sampler()) throw std::invalid_argument("bridge needs an exact surrogate sampler");
      std::vector<Vec> qs;
      qs.reserve(nq);
      for (long i = 0; i < nq; ++i) qs.push_back(model.surrogate.sample(rng));
      const BridgeResult br = bridge_sampling(model.target, model.surrogate, xs, qs);
      Estimate e;
      e.method = "bridge";
      e.log_z = br.log_r + model.surrogate.log_z_q;
      e.ok = br.converged;
      if (!br.converged) e.error = "bridge iteration did not converge";
      e.diagnostics = {{"iterations", br.iterations}, {"root_solved", br.root_solved}, {"relative_mse", br.relative_mse}, {"n_gamma", ng}, {"n_q", nq}};
      out = from_estimate(e);
    } else if (method == "ss") {
      const Surrogate& ref = reference_for(model, cfg);
      SteppingStoneConfig c;
      c.kernel = cfg.contains("kernel") ? KernelSpec::from_json(cfg.at("kernel")) : model.path_kernel;
      c.per_rung_samples = get_or(cfg, "per_rung", c.per_rung_samples);
      c.burn_in = get_or(cfg, "burn_in", c.burn_in);
      c.thin = get_or(cfg, "thin", c.thin);
      json ladder_info;
      if (get_or<std::string>(cfg, "ladder", "geometric") == "smc") {
        SmcResult sr = smc_estimate(model.target, ref, smc_config_for(model, get_or(cfg, "smc", json::object())), rng);
        c.ladder = sr.ladder;
        c.init_points = sr.rung_points;
        ladder_info = {{"source", "smc"}, {"smc_log_z", sr.estimate.log_z}};
      } else {
        c.ladder = geometric_ladder(get_or(cfg, "rungs", 10), get_or(cfg, "power", 3.0));
        c.init = model.init;
        ladder_info = {{"source", "geometric"}};
      }
      Estimate e = stepping_stone(model.target, ref, c, rng);
      e.diagnostics["ladder_info"] = ladder_info;
      out = from_estimate(e);
    } else if (method == "smc") {
      const Surrogate& ref = reference_for(model, cfg);
      SmcResult sr = smc_estimate(model.target, ref, smc_config_for(model, cfg), rng);
      out = from_estimate(sr.estimate);
    } else if (method == "chib") {
      ChibConfig c;
      c.n = get_or(cfg, "n", c.n);
      c.burn_in = get_or(cfg, "burn_in", c.burn_in);
      c.init = model.init;
      out = from_estimate(chib_estimate(model.target, c, rng));
    } else {
      throw std::invalid_argument("unknown method: " + method);
    }
  } catch (const std::exception& e) {
    out = MethodOutcome{};
    out.ok = false;
    out.error = e.what();
    out.record = {{"method", method}, {"ok", false}, {"error", e.what()}};
  }
  out.method = method;
  out.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

// ---- experiments ----------------------------------------------------------

void ExperimentConfig::validate() const {
  if (replicates < 1) throw std::invalid_argument("experiment: replicates must be >= 1");
  if (models.empty()) throw std::invalid_argument("experiment: no models");
  if (methods.empty()) throw std::invalid_argument("experiment: no methods");
  const auto known = registered_methods();
  for (const auto& m : methods) {
    if (std::find(known.begin(), known.end(), m.method) == known.end()) {
      throw std::invalid_argument("experiment: unknown method " + m.method);
    }
    for (const char* key : {"total_iters", "n", "n_particles", "per_rung", "n_gamma", "n_q"}) {
      if (m.config.contains(key) && !(m.config.at(key).get<double>() > 0)) {
        throw std::invalid_argument(std::string("experiment: budget ") + key + " must be positive");
      }
    }
  }
  const auto models_known = registered_models();
  for (const auto& m : models) {
    const auto name = m.at("name").get<std::string>();
    if (std::find(models_known.begin(), models_known.end(), name) == models_known.end()) {
      throw std::invalid_argument("experiment: unknown model " + name);
    }
  }
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  c.name = get_or<std::string>(j, "name", c.name);
  c.replicates = get_or(j, "replicates", c.replicates);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.write_traces = get_or(j, "write_traces", c.write_traces);
  fs::path out = get_or<std::string>(j, "output_dir", "results");
  c.output_dir = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
  if (j.contains("models")) {
    for (const auto& m : j.at("models")) c.models.push_back(m);
  }
  if (j.contains("model")) {
    std::vector<json> specs{j.at("model")};
    if (j.contains("grid")) {
      for (const auto& [key, values] : j.at("grid").items()) {
        std::vector<json> next;
        for (const auto& s : specs) {
          for (const auto& v : values) {
            json t = s;
            t[key] = v;
            next.push_back(t);
          }
        }
        specs = std::move(next);
      }
    }
    for (auto& s : specs) c.models.push_back(s);
  }
  for (auto& m : c.models) {
    if (m.contains("data") && !base_dir.empty()) {
      fs::path p = m.at("data").get<std::string>();
      if (p.is_relative()) m["data"] = (base_dir / p).string();
    }
  }
  if (j.contains("methods")) {
    for (const auto& m : j.at("methods")) {
      MethodEntry e;
      if (m.is_string()) {
        e.method = m.get<std::string>();
      } else {
        e.method = m.at("method").get<std::string>();
        e.config = get_or(m, "config", json::object());
        e.label = get_or<std::string>(m, "label", "");
      }
      if (e.label.empty()) e.label = e.method;
      c.methods.push_back(e);
    }
  }
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  json ms = json::array();
  for (const auto& m : methods) ms.push_back({{"label", m.label}, {"method", m.method}, {"config", m.config}});
  return {{"name", name}, {"models", models}, {"methods", ms}, {"replicates", replicates}, {"seed", seed},
          {"output_dir", output_dir.string()}, {"write_traces", write_traces}};
}

std::uint64_t task_stream(std::size_t model_index, std::size_t method_index, std::size_t replicate) {
  return (static_cast<std::uint64_t>(model_index) << 40) | (static_cast<std::uint64_t>(method_index) << 24) |
         static_cast<std::uint64_t>(replicate);
}

int default_workers() {
  if (const char* env = std::getenv("WLMIX_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void finish_row(ResultRow& row, const std::vector<double>& walls) {
  row.succeeded = static_cast<int>(row.log_z.size());
  if (!row.log_z.empty()) {
    const MeanSd ms = mean_sd(row.log_z);
    row.mean_log_z = ms.mean;
    row.sd_log_z = row.log_z.size() > 1 ? ms.sd : std::numeric_limits<double>::quiet_NaN();
  }
  if (!walls.empty()) {
    const MeanSd ws = mean_sd(walls);
    row.mean_wall = ws.mean;
    row.sd_wall = walls.size() > 1 ? ws.sd : 0.0;
  }
}

std::string status_of(const ResultRow& r) {
  if (r.succeeded == 0) return "failed";
  return r.partial() ? "partial" : "ok";
}

std::string csv_num(double v) { return std::isfinite(v) ? format_sig(v, 6) : ""; }

}  // namespace

std::string ResultTable::to_csv() const {
  std::ostringstream out;
  out << "model,method,replicates,succeeded,mean_log_z,sd_log_z,log_z_true,status\n";
  for (const auto& r : rows) {
    out << '"' << r.model << '"' << ',' << r.method << ',' << r.replicates << ',' << r.succeeded << ','
        << csv_num(r.mean_log_z) << ',' << csv_num(r.sd_log_z) << ','
        << (r.log_z_true ? format_sig(*r.log_z_true, 6) : "") << ',' << status_of(r) << '\n';
  }
  return out.str();
}

std::string ResultTable::timing_csv() const {
  std::ostringstream out;
  out << "model,method,mean_wall_seconds,sd_wall_seconds\n";
  for (const auto& r : rows) {
    out << '"' << r.model << '"' << ',' << r.method << ',' << format_sig(r.mean_wall, 6) << ','
        << format_sig(r.sd_wall, 6) << '\n';
  }
  return out.str();
}

json ResultTable::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) {
    rs.push_back({{"model", r.model},
                  {"method", r.method},
                  {"replicates", r.replicates},
                  {"succeeded", r.succeeded},
                  {"mean_log_z", nullable(r.mean_log_z)},
                  {"sd_log_z", nullable(r.sd_log_z)},
                  {"log_z_true", r.log_z_true ? json(*r.log_z_true) : json(nullptr)},
                  {"log_z", r.log_z},
                  {"errors", r.errors},
                  {"status", status_of(r)},
                  {"runs_dir", "runs/" + sanitize(r.model) + "/" + sanitize(r.method)}});
  }
  return {{"rows", rs}};
}

const ResultRow* ResultTable::find(const std::string& model, const std::string& method) const {
  for (const auto& r : rows) {
    if (r.model == model && r.method == method) return &r;
  }
  return nullptr;
}

ResultTable run_experiment(const ExperimentConfig& config, int workers) {
  config.validate();
  if (workers <= 0) workers = default_workers();

  std::vector<ModelInstance> models;
  std::vector<std::string> model_errors;
  for (const auto& spec : config.models) {
    try {
      models.push_back(build_model(spec));
      model_errors.emplace_back();
    } catch (const std::exception& e) {
      ModelInstance m;
      m.label = model_label(spec);
      models.push_back(std::move(m));
      model_errors.emplace_back(e.what());
    }
  }

  struct Task {
    std::size_t model, method, rep;
  };
  std::vector<Task> tasks;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    for (std::size_t me = 0; me < config.methods.size(); ++me) {
      for (int r = 0; r < config.replicates; ++r) tasks.push_back({mi, me, static_cast<std::size_t>(r)});
    }
  }
  std::vector<MethodOutcome> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
      const Task& task = tasks[t];
      const auto& entry = config.methods[task.method];
      if (!model_errors[task.model].empty()) {
        outcomes[t].method = entry.method;
        outcomes[t].error = "model build failed: " + model_errors[task.model];
        outcomes[t].record = {{"ok", false}, {"error", outcomes[t].error}};
        continue;
      }
      Rng rng(config.seed, task_stream(task.model, task.method, task.rep));
      outcomes[t] = run_method(models[task.model], entry.method, entry.config, rng);
    }
  };
  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Aggregation and output in task order, independent of scheduling.
  ResultTable table;
  const fs::path out = config.output_dir;
  json timing = json::array();
  std::size_t t = 0;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    for (std::size_t me = 0; me < config.methods.size(); ++me) {
      ResultRow row;
      row.model = models[mi].label;
      row.method = config.methods[me].label;
      row.replicates = config.replicates;
      row.log_z_true = models[mi].log_z_true;
      std::vector<double> walls;
      const fs::path dir = out / "runs" / sanitize(row.model) / sanitize(row.method);
      for (int r = 0; r < config.replicates; ++r, ++t) {
        const MethodOutcome& o = outcomes[t];
        if (o.ok) {
          row.log_z.push_back(o.log_z);
          walls.push_back(o.wall_seconds);
        } else {
          row.errors.push_back("replicate " + std::to_string(r) + ": " + o.error);
        }
        json rep = {{"model", row.model},
                    {"method", row.method},
                    {"replicate", r},
                    {"seed", config.seed},
                    {"stream", task_stream(mi, me, r)},
                    {"ok", o.ok},
                    {"log_z", o.ok ? json(o.log_z) : json(nullptr)},
                    {"record", o.record}};
        if (!o.ok) rep["error"] = o.error;
        write_json(dir / ("rep_" + std::to_string(r) + ".json"), rep);
        timing.push_back({{"model", row.model}, {"method", row.method}, {"replicate", r}, {"wall_seconds", o.wall_seconds}});
      }
      finish_row(row, walls);
      table.rows.push_back(std::move(row));
    }
  }
  json summary = table.to_json();
  summary["experiment"] = config.name;
  summary["seed"] = config.seed;
  json model_info = json::array();
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    model_info.push_back({{"label", models[mi].label}, {"summary", models[mi].summary}, {"error", model_errors[mi]}});
  }
  summary["models"] = model_info;
  write_json(out / "summary.json", summary);
  write_json(out / "config.json", config.to_json());
  write_text(out / "results.csv", table.to_csv());
  write_text(out / "timing.csv", table.timing_csv());
  write_json(out / "timing.json", timing);
  return table;
}

json AuditReport::to_json() const { return {{"ok", ok}, {"problems", problems}, {"rows_checked", rows_checked}}; }

AuditReport audit_experiment(const fs::path& output_dir) {
  AuditReport rep;
  if (!fs::exists(output_dir / "summary.json")) {
    rep.ok = false;
    rep.problems.push_back("missing " + (output_dir / "summary.json").string());
    return rep;
  }
  const json summary = read_json(output_dir / "summary.json");
  ResultTable recomputed;
  for (const auto& row : summary.at("rows")) {
    ResultRow r;
    r.model = row.at("model").get<std::string>();
    r.method = row.at("method").get<std::string>();
    r.replicates = row.at("replicates").get<int>();
    if (!row.at("log_z_true").is_null()) r.log_z_true = row.at("log_z_true").get<double>();
    const fs::path dir = output_dir / row.at("runs_dir").get<std::string>();
    for (int i = 0; i < r.replicates; ++i) {
      const fs::path f = dir / ("rep_" + std::to_string(i) + ".json");
      if (!fs::exists(f)) {
        rep.problems.push_back("missing " + f.string());
        continue;
      }
      const json rj = read_json(f);
      if (rj.at("ok").get<bool>()) {
        const double v = rj.at("log_z").get<double>();
        r.log_z.push_back(v);
        const json& rec = rj.at("record");
        const char* key = rec.contains("final_log_z") ? "final_log_z" : "log_z";
        if (rec.contains(key) && rec.at(key).get<double>() != v) {
          rep.problems.push_back(f.string() + ": record and summary log_z differ");
        }
      } else {
        r.errors.push_back("replicate " + std::to_string(i) + ": " + rj.value("error", std::string()));
      }
    }
    finish_row(r, {});
    const auto stored = row.at("log_z").get<std::vector<double>>();
    if (stored != r.log_z) rep.problems.push_back(r.model + "/" + r.method + ": replicate values differ");
    const json mean = nullable(r.mean_log_z), sd = nullable(r.sd_log_z);
    if (row.at("mean_log_z") != mean) rep.problems.push_back(r.model + "/" + r.method + ": mean differs");
    if (row.at("sd_log_z") != sd) rep.problems.push_back(r.model + "/" + r.method + ": sd differs");
    recomputed.rows.push_back(std::move(r));
    ++rep.rows_checked;
  }
  const fs::path csv = output_dir / "results.csv";
  if (fs::exists(csv)) {
    std::ifstream in(csv, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    if (ss.str() != recomputed.to_csv()) rep.problems.push_back("results.csv does not match the recomputed table");
  } else {
    rep.problems.push_back("missing results.csv");
  }
  rep.ok = rep.problems.empty();
  return rep;
}

}  // namespace wlmix
