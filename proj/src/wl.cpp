#include "wlmix/wl.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace wlmix {

void WlState::normalize() {
  const double z = log_sum_exp(log_psi_gamma, log_psi_q);
  log_psi_gamma -= z;
  log_psi_q -= z;
}

std::string to_string(EtaSchedule s) { return s == EtaSchedule::geometric ? "geometric" : "harmonic"; }

EtaSchedule eta_schedule_from_string(const std::string& name) {
  if (name == "geometric") return EtaSchedule::geometric;
  if (name == "harmonic") return EtaSchedule::harmonic;
  throw std::invalid_argument("unknown eta schedule: " + name);
}

void WlConfig::validate() const {
  if (total_iters < 1) throw std::invalid_argument("total_iters must be positive");
  if (burn_in < 0 || burn_in >= total_iters) throw std::invalid_argument("burn_in must satisfy 0 <= b < S");
  if (!(flat_threshold > 0.0 && flat_threshold < 1.0)) throw std::invalid_argument("flat_threshold must lie in (0,1)");
  if (!(eta0 > 0.0)) throw std::invalid_argument("eta0 must be positive");
  if (!(eta_decay > 0.0 && eta_decay < 1.0)) throw std::invalid_argument("eta_decay must lie in (0,1)");
  if (!(momentum_beta >= 0.0 && momentum_beta < 1.0)) throw std::invalid_argument("momentum_beta must lie in [0,1)");
  if (!(mtm_jump_prob >= 0.0 && mtm_jump_prob <= 1.0)) throw std::invalid_argument("mtm_jump_prob must lie in [0,1]");
  kernel_gamma.validate();
  kernel_q.validate();
  if (mtm_jump) {
    if (mtm_jump->kind != KernelKind::mtm_directional) throw std::invalid_argument("mtm_jump must be a directional MTM kernel");
    mtm_jump->validate();
  }
}

double WlConfig::eta_for_stage(int stage) const {
  if (eta_schedule == EtaSchedule::harmonic) return eta0 / stage;
  return eta0 * std::pow(eta_decay, stage - 1);
}

json WlConfig::to_json() const {
  json j{{"total_iters", total_iters},
         {"burn_in", burn_in},
         {"flat_threshold", flat_threshold},
         {"eta0", eta0},
         {"eta_decay", eta_decay},
         {"eta_schedule", to_string(eta_schedule)},
         {"eta_stop", eta_stop},
         {"momentum_beta", momentum_beta},
         {"kernel_gamma", kernel_gamma.to_json()},
         {"kernel_q", kernel_q.to_json()},
         {"mtm_jump_prob", mtm_jump_prob},
         {"exact_surrogate_draws", exact_surrogate_draws}};
  j["mtm_jump"] = mtm_jump ? mtm_jump->to_json() : json(nullptr);
  return j;
}

WlConfig WlConfig::from_json(const json& j) {
  WlConfig c;
  c.total_iters = j.value("total_iters", c.total_iters);
  c.burn_in = j.value("burn_in", c.total_iters / 2);
  c.flat_threshold = j.value("flat_threshold", c.flat_threshold);
  c.eta0 = j.value("eta0", c.eta0);
  c.eta_decay = j.value("eta_decay", c.eta_decay);
  if (j.contains("eta_schedule")) c.eta_schedule = eta_schedule_from_string(j["eta_schedule"].get<std::string>());
  c.eta_stop = j.value("eta_stop", c.eta_stop);
  c.momentum_beta = j.value("momentum_beta", c.momentum_beta);
  if (j.contains("kernel_gamma")) c.kernel_gamma = KernelSpec::from_json(j["kernel_gamma"]);
  if (j.contains("kernel_q")) c.kernel_q = KernelSpec::from_json(j["kernel_q"]);
  if (j.contains("mtm_jump") && !j["mtm_jump"].is_null()) c.mtm_jump = KernelSpec::from_json(j["mtm_jump"]);
  c.mtm_jump_prob = j.value("mtm_jump_prob", c.mtm_jump_prob);
  c.exact_surrogate_draws = j.value("exact_surrogate_draws", c.exact_surrogate_draws);
  return c;
}

json RunRecord::to_json(bool include_timing) const {
  json j{{"method", method},
         {"final_log_r", final_log_r},
         {"final_log_z", final_log_z},
         {"log_z_q", log_z_q},
         {"flatness_events", flatness_events},
         {"eta_stop_iter", eta_stop_iter},
         {"seed", seed},
         {"stream", stream},
         {"config", config},
         {"diagnostics", diagnostics},
         {"ok", ok},
         {"iterations", log_ratio_trace.size()}};
  if (!error.empty()) j["error"] = error;
  json ks = json::object();
  for (const auto& [name, st] : kernel_stats) ks[name] = st.to_json();
  j["kernel_stats"] = ks;
  if (!rungs.empty()) {
    json r = json::array();
    for (const auto& rung : rungs) r.push_back(rung.to_json(include_timing));
    j["rungs"] = r;
  }
  if (include_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

void RunRecord::write_trace_csv(std::ostream& out) const {
  out << "iteration,log_ratio,indicator,stage,eta\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < log_ratio_trace.size(); ++i) {
    out << (i + 1) << ',' << log_ratio_trace[i] << ','
        << (i < indicator_trace.size() ? static_cast<int>(indicator_trace[i]) : 0) << ','
        << (i < stage_trace.size() ? stage_trace[i] : 0) << ','
        << (i < eta_trace.size() ? eta_trace[i] : 0.0) << '\n';
  }
}

WlState wl_update_plain(WlState state, int indicator, double eta) {
  if (indicator != 0 && indicator != 1) throw std::invalid_argument("indicator must be 0 or 1");
  if (indicator == 1) {
    state.log_psi_gamma += std::log1p(eta);
    ++state.xi_gamma;
  } else {
    state.log_psi_q += std::log1p(eta);
    ++state.xi_q;
  }
  ++state.t;
  state.normalize();
  return state;
}

WlState wl_update_momentum(WlState state, int indicator, double eta, double beta) {
  if (indicator != 0 && indicator != 1) throw std::invalid_argument("indicator must be 0 or 1");
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in [0,1)");
  state.m_gamma = beta * state.m_gamma - (indicator == 1 ? eta : 0.0);
  state.m_q = beta * state.m_q - (indicator == 0 ? eta : 0.0);
  state.log_psi_gamma -= state.m_gamma;
  state.log_psi_q -= state.m_q;
  if (indicator == 1) ++state.xi_gamma;
  else ++state.xi_q;
  ++state.t;
  state.normalize();
  return state;
}

bool flatness_check(const WlState& state, double c) {
  const long total = state.xi_gamma + state.xi_q;
  if (total <= 0) return false;
  const double frac = static_cast<double>(std::max(state.xi_gamma, state.xi_q)) / static_cast<double>(total);
  return frac - 0.5 <= c / 2.0;
}

namespace {

using Clock = std::chrono::steady_clock;

int draw_indicator(double lu, double ll, const WlState& s, Rng& rng) {
  const double a = lu - s.log_psi_gamma;
  const double b = ll - s.log_psi_q;
  const double p1 = a - log_sum_exp(a, b);
  return std::log(rng.uniform()) < p1 ? 1 : 0;
}

}  // namespace

RunRecord wl_mixture_run(const WlComponent& upper, const WlComponent& lower, const WlConfig& config,
                         const Vec& init, Rng& rng) {
  config.validate();
  const auto t0 = Clock::now();
  RunRecord rec;
  rec.seed = rng.seed();
  rec.stream = rng.stream();
  rec.config = config.to_json();

  Kernel k_up(config.kernel_gamma, upper.log_density, upper.grad, upper.gibbs_target);
  std::optional<Kernel> k_low;
  if (!lower.sampler) k_low.emplace(config.kernel_q, lower.log_density, lower.grad, lower.gibbs_target);
  KernelStats jump_stats;

  WlState st;
  st.eta = config.eta_for_stage(1);
  Vec theta = init;
  double lu = upper.log_density(theta);
  double ll = lower.log_density(theta);
  if (!theta.allFinite() || !(std::max(lu, ll) > kNegInf)) {
    throw std::domain_error("wl_mixture_run: initial point has zero mixture density");
  }
  int ind = draw_indicator(lu, ll, st, rng);

  const long S = config.total_iters;
  if (config.record_traces) {
    rec.log_ratio_trace.reserve(S);
    rec.indicator_trace.reserve(S);
    rec.stage_trace.reserve(S);
    rec.eta_trace.reserve(S);
  }
  double post_sum = 0.0;
  long post_n = 0;
  long visits_gamma = 0;

  for (long t = 1; t <= S; ++t) {
    // (3a) move theta with a kernel invariant to the current component (or to the adaptive mixture).
    if (config.mtm_jump && config.mtm_jump_prob > 0.0 && rng.bernoulli(config.mtm_jump_prob)) {
      const double lpg = st.log_psi_gamma, lpq = st.log_psi_q;
      auto log_mix = [&](const Vec& x) {
        return log_sum_exp(upper.log_density(x) - lpg, lower.log_density(x) - lpq);
      };
      const double cur = log_sum_exp(lu - lpg, ll - lpq);
      StepResult r = mtm_directional_step(log_mix, theta, *config.mtm_jump, rng, &jump_stats, cur);
      if (r.accepted) {
        theta = std::move(r.point);
        lu = upper.log_density(theta);
        ll = lower.log_density(theta);
      }
    } else if (ind == 1) {
      k_up.step(theta, lu, rng);
      ll = lower.log_density(theta);
    } else {
      if (lower.sampler) {
        theta = lower.sampler(rng);
        ll = lower.log_density(theta);
      } else {
        k_low->step(theta, ll, rng);
      }
      lu = upper.log_density(theta);
    }

    // (3b) indicator given theta under the previous weights.
    ind = draw_indicator(lu, ll, st, rng);
    visits_gamma += ind;

    // (3c)/(3c') and (3d)
    st = config.momentum_beta > 0.0 ? wl_update_momentum(st, ind, st.eta, config.momentum_beta)
                                    : wl_update_plain(st, ind, st.eta);

    // (3e)
    if (flatness_check(st, config.flat_threshold)) {
      ++st.stage;
      st.eta = config.eta_for_stage(st.stage);
      st.xi_gamma = 0;
      st.xi_q = 0;
      ++rec.flatness_events;
    }
    if (rec.eta_stop_iter < 0 && st.eta < config.eta_stop) rec.eta_stop_iter = t;

    const double lr = st.log_ratio();
    if (t > config.burn_in) {
      post_sum += lr;
      ++post_n;
    }
    if (config.record_traces) {
      rec.log_ratio_trace.push_back(lr);
      rec.indicator_trace.push_back(static_cast<std::uint8_t>(ind));
      rec.stage_trace.push_back(st.stage);
      rec.eta_trace.push_back(st.eta);
    }
  }

  rec.final_log_r = post_sum / static_cast<double>(post_n);
  rec.final_log_z = rec.final_log_r;
  rec.kernel_stats[upper.name.empty() ? "gamma" : upper.name] = k_up.stats();
  if (k_low) rec.kernel_stats[lower.name.empty() ? "q" : lower.name] = k_low->stats();
  if (config.mtm_jump) rec.kernel_stats["mtm_jump"] = jump_stats;
  rec.diagnostics["occupancy_gamma"] = static_cast<double>(visits_gamma) / static_cast<double>(S);
  rec.diagnostics["final_stage"] = st.stage;
  rec.diagnostics["final_eta"] = st.eta;
  rec.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return rec;
}

RunRecord wl_estimate(const TargetDensity& target, const Surrogate& surrogate, const WlConfig& config,
                      Rng& rng) {
  if (target.dim != surrogate.dim) throw std::invalid_argument("wl_estimate: dimension mismatch between target and surrogate");
  if (config.kernel_gamma.kind == KernelKind::hmc && !target.has_gradient()) {
    throw std::invalid_argument("wl_estimate: HMC requested but the target has no gradient");
  }
  config.validate();
  WlComponent up{target.log_gamma, target.grad_log_gamma, {}, &target, config.kernel_gamma, "gamma"};
  WlComponent lo{surrogate.log_q, surrogate.grad_log_q, {}, nullptr, config.kernel_q, "q"};
  if (config.exact_surrogate_draws && surrogate.has_sampler()) lo.sampler = surrogate.sample;
  if (!lo.sampler && config.kernel_q.kind == KernelKind::hmc && !surrogate.grad_log_q) {
    throw std::invalid_argument("wl_estimate: HMC requested on the surrogate side without a gradient");
  }
  Vec init = surrogate.has_sampler() ? surrogate.sample(rng) : surrogate.mode.value_or(Vec::Zero(target.dim));
  RunRecord rec = wl_mixture_run(up, lo, config, init, rng);
  rec.method = config.momentum_beta > 0.0 ? "awl" : "wl";
  rec.log_z_q = surrogate.log_z_q;
  rec.final_log_z = rec.final_log_r + surrogate.log_z_q;
  return rec;
}

void PwlLadder::validate() const {
  if (lambdas.size() < 2) throw std::invalid_argument("ladder needs at least two rungs");
  if (lambdas.front() != 0.0 || lambdas.back() != 1.0) throw std::invalid_argument("ladder must start at 0 and end at 1");
  for (std::size_t j = 1; j < lambdas.size(); ++j) {
    if (!(lambdas[j] > lambdas[j - 1])) throw std::invalid_argument("ladder must be strictly increasing");
  }
  if (configs.empty()) throw std::invalid_argument("ladder needs at least one WlConfig");
  if (configs.size() != 1 && configs.size() != lambdas.size() - 1) {
    throw std::invalid_argument("ladder configs must have one entry or one per rung pair");
  }
}

std::vector<double> geometric_ladder(int rungs, double power) {
  if (rungs < 1) throw std::invalid_argument("geometric_ladder: need at least one step");
  std::vector<double> l(rungs + 1);
  for (int j = 0; j <= rungs; ++j) l[j] = std::pow(static_cast<double>(j) / rungs, power);
  l.front() = 0.0;
  l.back() = 1.0;
  return l;
}

namespace {

WlComponent rung_component(const TargetDensity& target, const Surrogate& surrogate, double lambda,
                           const KernelSpec& kernel, const std::string& name) {
  WlComponent c;
  c.kernel = kernel;
  c.name = name;
  if (lambda == 1.0) {
    c.log_density = target.log_gamma;
    c.grad = target.grad_log_gamma;
    c.gibbs_target = &target;
    return c;
  }
  if (lambda == 0.0) {
    c.log_density = surrogate.log_q;
    c.grad = surrogate.grad_log_q;
    if (surrogate.has_sampler()) c.sampler = surrogate.sample;
    return c;
  }
  PathDensity pd = geometric_path_density(target, surrogate, lambda);
  c.log_density = std::move(pd.log_density);
  c.grad = std::move(pd.grad);
  return c;
}

}  // namespace

RunRecord pwl_estimate(const TargetDensity& target, const Surrogate& surrogate, const PwlLadder& ladder,
                       const Rng& rng, int workers) {
  ladder.validate();
  if (target.dim != surrogate.dim) throw std::invalid_argument("pwl_estimate: dimension mismatch");
  const auto t0 = Clock::now();
  const std::size_t pairs = ladder.lambdas.size() - 1;
  std::vector<RunRecord> rungs(pairs);

  auto run_pair = [&](std::size_t j) {
    const WlConfig& cfg = ladder.configs.size() == 1 ? ladder.configs[0] : ladder.configs[j];
    Rng r = rng.substream(j + 1);
    try {
      WlComponent up = rung_component(target, surrogate, ladder.lambdas[j + 1], cfg.kernel_gamma, "upper");
      WlComponent lo = rung_component(target, surrogate, ladder.lambdas[j], cfg.kernel_q, "lower");
      if (!cfg.exact_surrogate_draws) lo.sampler = nullptr;
      Vec init;
      if (ladder.init_points.size() == ladder.lambdas.size()) init = ladder.init_points[j + 1];
      else if (surrogate.has_sampler()) init = surrogate.sample(r);
      else init = surrogate.mode.value_or(Vec::Zero(target.dim));
      rungs[j] = wl_mixture_run(up, lo, cfg, init, r);
      rungs[j].method = "wl_rung";
    } catch (const std::exception& e) {
      rungs[j] = RunRecord{};
      rungs[j].ok = false;
      rungs[j].error = e.what();
      rungs[j].seed = r.seed();
      rungs[j].stream = r.stream();
    }
    rungs[j].diagnostics["lambda_lower"] = ladder.lambdas[j];
    rungs[j].diagnostics["lambda_upper"] = ladder.lambdas[j + 1];
  };

  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(pairs)));
  if (nw == 1) {
    for (std::size_t j = 0; j < pairs; ++j) run_pair(j);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nw; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t j = w; j < pairs; j += nw) run_pair(j);
      });
    }
    for (auto& th : pool) th.join();
  }

  RunRecord rec;
  rec.method = "pwl";
  rec.seed = rng.seed();
  rec.stream = rng.stream();
  rec.log_z_q = surrogate.log_z_q;
  rec.config = {{"lambdas", ladder.lambdas}, {"rung_config", ladder.configs.front().to_json()}};
  double total = 0.0;
  bool same_len = true;
  for (const auto& r : rungs) {
    if (!r.ok) {
      rec.ok = false;
      if (rec.error.empty()) rec.error = "rung failed: " + r.error;
      continue;
    }
    total += r.final_log_r;
    rec.flatness_events += r.flatness_events;
    rec.eta_stop_iter = std::max(rec.eta_stop_iter, r.eta_stop_iter);
    for (const auto& [name, s] : r.kernel_stats) rec.kernel_stats[name].merge(s);
    if (r.log_ratio_trace.size() != rungs.front().log_ratio_trace.size()) same_len = false;
  }
  if (rec.ok && same_len) {
    rec.log_ratio_trace.assign(rungs.front().log_ratio_trace.size(), 0.0);
    for (const auto& r : rungs) {
      for (std::size_t i = 0; i < r.log_ratio_trace.size(); ++i) rec.log_ratio_trace[i] += r.log_ratio_trace[i];
    }
  }
  rec.final_log_r = total;
  rec.final_log_z = surrogate.log_z_q + total;
  rec.rungs = std::move(rungs);
  rec.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return rec;
}

}  // namespace wlmix
