#include "wlmix/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace wlmix {

namespace {

double current_density(const LogDensity& f, const Vec& x, std::optional<double> cached) {
  const double lx = cached ? *cached : f(x);
  if (!x.allFinite() || !std::isfinite(lx)) {
    throw std::domain_error("kernel started outside the support: non-finite log density at current point");
  }
  return lx;
}

StepResult finish(StepResult r, KernelStats* stats) {
  if (stats) {
    ++stats->proposals;
    if (r.accepted) ++stats->accepts;
  }
  return r;
}

double log_gauss_kernel(const Vec& from, const Vec& to, double sd) {
  const double d = static_cast<double>(from.size());
  return -0.5 * d * kLogTwoPi - d * std::log(sd) - 0.5 * (to - from).squaredNorm() / (sd * sd);
}

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::rwm: return "rwm";
    case KernelKind::hmc: return "hmc";
    case KernelKind::gibbs: return "gibbs";
    case KernelKind::mtm: return "mtm";
    case KernelKind::mtm_directional: return "mtm_directional";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "rwm") return KernelKind::rwm;
  if (name == "hmc") return KernelKind::hmc;
  if (name == "gibbs") return KernelKind::gibbs;
  if (name == "mtm") return KernelKind::mtm;
  if (name == "mtm_directional") return KernelKind::mtm_directional;
  throw std::invalid_argument("unknown kernel kind: " + name);
}

double DistanceDist::log_pdf(double r) const {
  if (sd <= 0.0) return r == mean ? 0.0 : kNegInf;
  return log_normal_pdf(r, mean, sd);
}

void KernelSpec::validate() const {
  if (!(step_size >= 0.0)) throw std::invalid_argument("kernel step_size must be nonnegative");
  if ((kind == KernelKind::rwm || kind == KernelKind::mtm) && !(step_size > 0.0)) {
    throw std::invalid_argument("rwm/mtm step_size must be positive");
  }
  if (leapfrog_steps < 1) throw std::invalid_argument("leapfrog_steps must be >= 1");
  if (num_tries < 1) throw std::invalid_argument("num_tries must be >= 1");
  if (kind == KernelKind::mtm_directional) {
    if (directions.empty()) throw std::invalid_argument("directional kernel needs at least one direction");
    for (const auto& e : directions) {
      if (e.size() == 0 || e.norm() == 0.0) throw std::invalid_argument("directional kernel: zero direction vector");
    }
    if (!(distance.sd >= 0.0)) throw std::invalid_argument("distance sd must be nonnegative");
  }
}

json KernelSpec::to_json() const {
  json j{{"kind", to_string(kind)},
         {"step_size", step_size},
         {"leapfrog_steps", leapfrog_steps},
         {"num_tries", num_tries},
         {"lambda_kind", lambda_kind == LambdaKind::mtm_ii ? "mtm_ii" : "inverse_sum"},
         {"distance", {{"mean", distance.mean}, {"sd", distance.sd}}}};
  json dirs = json::array();
  for (const auto& e : directions) dirs.push_back(std::vector<double>(e.data(), e.data() + e.size()));
  j["directions"] = dirs;
  return j;
}

KernelSpec KernelSpec::from_json(const json& j) {
  KernelSpec s;
  s.kind = kernel_kind_from_string(j.value("kind", std::string("rwm")));
  s.step_size = j.value("step_size", s.step_size);
  s.leapfrog_steps = j.value("leapfrog_steps", s.leapfrog_steps);
  s.num_tries = j.value("num_tries", s.num_tries);
  const std::string lk = j.value("lambda_kind", std::string("mtm_ii"));
  if (lk == "mtm_ii") s.lambda_kind = LambdaKind::mtm_ii;
  else if (lk == "inverse_sum") s.lambda_kind = LambdaKind::inverse_sum;
  else throw std::invalid_argument("unknown lambda_kind: " + lk);
  if (j.contains("distance")) {
    s.distance.mean = j["distance"].value("mean", 1.0);
    s.distance.sd = j["distance"].value("sd", 0.0);
  }
  if (j.contains("directions")) {
    for (const auto& d : j["directions"]) {
      const auto v = d.get<std::vector<double>>();
      s.directions.push_back(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
  }
  return s;
}

KernelSpec KernelSpec::rwm(double step) {
  KernelSpec s;
  s.kind = KernelKind::rwm;
  s.step_size = step;
  return s;
}

KernelSpec KernelSpec::hmc(double step, int leapfrogs) {
  KernelSpec s;
  s.kind = KernelKind::hmc;
  s.step_size = step;
  s.leapfrog_steps = leapfrogs;
  return s;
}

KernelSpec KernelSpec::gibbs() {
  KernelSpec s;
  s.kind = KernelKind::gibbs;
  return s;
}

KernelSpec KernelSpec::mtm(double step, int tries, LambdaKind lambda) {
  KernelSpec s;
  s.kind = KernelKind::mtm;
  s.step_size = step;
  s.num_tries = tries;
  s.lambda_kind = lambda;
  return s;
}

KernelSpec KernelSpec::directional(std::vector<Vec> dirs, DistanceDist dist, int tries) {
  KernelSpec s;
  s.kind = KernelKind::mtm_directional;
  s.directions = std::move(dirs);
  s.distance = dist;
  s.num_tries = tries;
  return s;
}

void KernelStats::merge(const KernelStats& other) {
  proposals += other.proposals;
  accepts += other.accepts;
  divergences += other.divergences;
}

json KernelStats::to_json() const {
  return {{"proposals", proposals}, {"accepts", accepts}, {"divergences", divergences},
          {"accept_rate", accept_rate()}};
}

StepResult rwm_step(const LogDensity& log_density, const Vec& x, const KernelSpec& spec, Rng& rng,
                    KernelStats* stats, std::optional<double> log_density_x) {
  const double lx = current_density(log_density, x, log_density_x);
  Vec y = x + spec.step_size * rng.normal_vector(x.size());
  const double ly = log_density(y);
  if (!(ly > kNegInf) || std::isnan(ly)) return finish({x, lx, false}, stats);
  if (std::log(rng.uniform()) < ly - lx) return finish({std::move(y), ly, true}, stats);
  return finish({x, lx, false}, stats);
}

void leapfrog(const Gradient& grad, Vec& x, Vec& p, double step, int steps) {
  p += 0.5 * step * grad(x);
  for (int l = 0; l < steps; ++l) {
    x += step * p;
    if (l + 1 < steps) p += step * grad(x);
  }
  p += 0.5 * step * grad(x);
}

StepResult hmc_step(const LogDensity& log_density, const Gradient& grad, const Vec& x,
                    const KernelSpec& spec, Rng& rng, KernelStats* stats,
                    std::optional<double> log_density_x) {
  if (!grad) throw std::invalid_argument("hmc_step: gradient required");
  const double lx = current_density(log_density, x, log_density_x);
  Vec p = rng.normal_vector(x.size());
  const double h0 = -lx + 0.5 * p.squaredNorm();
  Vec y = x;
  leapfrog(grad, y, p, spec.step_size, spec.leapfrog_steps);
  const double ly = y.allFinite() ? log_density(y) : kNegInf;
  const double h1 = -ly + 0.5 * p.squaredNorm();
  if (!std::isfinite(h1)) {
    if (stats) ++stats->divergences;
    return finish({x, lx, false}, stats);
  }
  if (std::log(rng.uniform()) < h0 - h1) return finish({std::move(y), ly, true}, stats);
  return finish({x, lx, false}, stats);
}

Vec gibbs_sweep(const TargetDensity& target, const Vec& x, Rng& rng) {
  if (!target.has_gibbs()) throw std::invalid_argument("gibbs_sweep: target '" + target.label + "' has no Gibbs blocks");
  Vec y = x;
  for (const auto& block : target.gibbs_blocks) block.sample(y, rng);
  return y;
}

StepResult mtm_step(const LogDensity& log_density, const Vec& x, const KernelSpec& spec, Rng& rng,
                    KernelStats* stats, std::optional<double> log_density_x) {
  const double lx = current_density(log_density, x, log_density_x);
  const int m = spec.num_tries;
  const double s = spec.step_size;
  const bool general = spec.lambda_kind == LambdaKind::inverse_sum;
  // log w(a, b) = log pi(a) + log T(a, b) + log lambda(a, b), lambda = 1 / (T(a,b) + T(b,a)).
  auto log_w = [&](double log_pi_a, const Vec& a, const Vec& b) {
    if (!general) return log_pi_a;
    const double t_ab = log_gauss_kernel(a, b, s);
    const double t_ba = log_gauss_kernel(b, a, s);
    return log_pi_a + t_ab - log_sum_exp(t_ab, t_ba);
  };

  std::vector<Vec> ys(m);
  std::vector<double> lys(m), wf(m);
  bool any_finite = false;
  for (int j = 0; j < m; ++j) {
    ys[j] = x + s * rng.normal_vector(x.size());
    lys[j] = log_density(ys[j]);
    if (std::isnan(lys[j])) lys[j] = kNegInf;
    wf[j] = log_w(lys[j], ys[j], x);
    if (wf[j] > kNegInf) any_finite = true;
  }
  if (!any_finite) return finish({x, lx, false}, stats);
  const std::size_t k = m == 1 ? 0 : rng.categorical_log(wf);
  const Vec& y = ys[k];

  std::vector<double> wr(m);
  for (int j = 0; j < m - 1; ++j) {
    const Vec xr = y + s * rng.normal_vector(x.size());
    double lr = log_density(xr);
    if (std::isnan(lr)) lr = kNegInf;
    wr[j] = log_w(lr, xr, y);
  }
  wr[m - 1] = log_w(lx, x, y);
  const double log_alpha = log_sum_exp(wf) - log_sum_exp(wr);
  if (std::log(rng.uniform()) < log_alpha) return finish({y, lys[k], true}, stats);
  return finish({x, lx, false}, stats);
}

StepResult mtm_directional_step(const LogDensity& log_density, const Vec& x, const KernelSpec& spec,
                                Rng& rng, KernelStats* stats, std::optional<double> log_density_x) {
  if (spec.directions.empty()) throw std::invalid_argument("directional kernel needs at least one direction");
  const double lx = current_density(log_density, x, log_density_x);
  const std::size_t di = spec.directions.size() == 1 ? 0 : rng.uniform_index(spec.directions.size());
  const Vec& e = spec.directions[di];
  if (e.size() != x.size() || e.norm() == 0.0) throw std::invalid_argument("directional kernel: bad direction vector");
  const int m = spec.num_tries;

  std::vector<double> rs(m), lys(m);
  bool any_finite = false;
  for (int j = 0; j < m; ++j) {
    rs[j] = spec.distance.sample(rng);
    lys[j] = log_density(x + rs[j] * e);
    if (std::isnan(lys[j])) lys[j] = kNegInf;
    if (lys[j] > kNegInf) any_finite = true;
  }
  if (!any_finite) return finish({x, lx, false}, stats);
  const std::size_t k = m == 1 ? 0 : rng.categorical_log(lys);
  Vec y = x + rs[k] * e;

  std::vector<double> lref(m);
  for (int j = 0; j < m; ++j) {
    if (static_cast<std::size_t>(j) == k) {
      lref[j] = lx;
      continue;
    }
    lref[j] = log_density(y - rs[j] * e);
    if (std::isnan(lref[j])) lref[j] = kNegInf;
  }
  const double log_alpha = log_sum_exp(lys) - log_sum_exp(lref);
  if (std::log(rng.uniform()) < log_alpha) return finish({std::move(y), lys[k], true}, stats);
  return finish({x, lx, false}, stats);
}

Kernel::Kernel(KernelSpec spec, LogDensity log_density, Gradient grad, const TargetDensity* gibbs_target)
    : spec_(std::move(spec)), log_density_(std::move(log_density)), grad_(std::move(grad)),
      gibbs_target_(gibbs_target) {
  spec_.validate();
  if (spec_.kind == KernelKind::hmc && !grad_) throw std::invalid_argument("HMC kernel requested without a gradient");
  if (spec_.kind == KernelKind::gibbs && (!gibbs_target_ || !gibbs_target_->has_gibbs())) {
    throw std::invalid_argument("Gibbs kernel requested for a density without Gibbs blocks");
  }
}

bool Kernel::step(Vec& x, double& lx, Rng& rng) {
  StepResult r;
  switch (spec_.kind) {
    case KernelKind::rwm: r = rwm_step(log_density_, x, spec_, rng, &stats_, lx); break;
    case KernelKind::hmc: r = hmc_step(log_density_, grad_, x, spec_, rng, &stats_, lx); break;
    case KernelKind::mtm: r = mtm_step(log_density_, x, spec_, rng, &stats_, lx); break;
    case KernelKind::mtm_directional: r = mtm_directional_step(log_density_, x, spec_, rng, &stats_, lx); break;
    case KernelKind::gibbs: {
      x = gibbs_sweep(*gibbs_target_, x, rng);
      lx = log_density_(x);
      ++stats_.proposals;
      ++stats_.accepts;
      return true;
    }
  }
  x = std::move(r.point);
  lx = r.log_density;
  return r.accepted;
}

}  // namespace wlmix
