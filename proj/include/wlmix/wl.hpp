#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wlmix/core.hpp"
#include "wlmix/kernels.hpp"

namespace wlmix {

/// Everything the mixture sampler mutates besides the chain position.
struct WlState {
  double log_psi_gamma = -std::log(2.0);
  double log_psi_q = -std::log(2.0);
  long xi_gamma = 0;
  long xi_q = 0;
  int stage = 1;
  double eta = 1.0;
  double m_gamma = 0.0;
  double m_q = 0.0;
  long t = 0;

  double log_ratio() const { return log_psi_gamma - log_psi_q; }
  void normalize();
};

/// How the learning rate moves from one stage to the next.
///   geometric: eta_a = eta0 * eta_decay^(a-1)
///   harmonic:  eta_a = eta0 / a
enum class EtaSchedule { geometric, harmonic };

std::string to_string(EtaSchedule s);
EtaSchedule eta_schedule_from_string(const std::string& name);

struct WlConfig {
  long total_iters = 5000;
  long burn_in = 2500;
  double flat_threshold = 0.2;
  double eta0 = 1.0;
  double eta_decay = 0.5;
  EtaSchedule eta_schedule = EtaSchedule::harmonic;
  double eta_stop = 1e-3;
  double momentum_beta = 0.0;
  KernelSpec kernel_gamma = KernelSpec::rwm(0.5);
  KernelSpec kernel_q = KernelSpec::rwm(0.5);
  std::optional<KernelSpec> mtm_jump;
  double mtm_jump_prob = 0.0;
  /// Use Surrogate::sample for the q side when it exists.
  bool exact_surrogate_draws = true;
  bool record_traces = true;

  void validate() const;
  double eta_for_stage(int stage) const;
  json to_json() const;
  static WlConfig from_json(const json& j);
};

struct RunRecord {
  std::string method = "wl";
  std::vector<double> log_ratio_trace;
  std::vector<std::uint8_t> indicator_trace;
  std::vector<int> stage_trace;
  std::vector<double> eta_trace;
  double final_log_r = 0.0;
  double final_log_z = 0.0;
  double log_z_q = 0.0;
  long flatness_events = 0;
  /// First iteration at which eta dropped below eta_stop, or -1.
  long eta_stop_iter = -1;
  std::map<std::string, KernelStats> kernel_stats;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  json config;
  json diagnostics = json::object();
  double wall_seconds = 0.0;
  bool ok = true;
  std::string error;
  std::vector<RunRecord> rungs;

  /// Full-precision summary. Wall time is left out unless requested so reruns compare byte-identical.
  json to_json(bool include_timing = false) const;
  /// iteration,log_ratio,indicator,stage,eta
  void write_trace_csv(std::ostream& out) const;
};

/// Plain update: log psi += log(1 + eta) on the visited component, then renormalize.
WlState wl_update_plain(WlState state, int indicator, double eta);
/// Momentum form of the same update.
WlState wl_update_momentum(WlState state, int indicator, double eta, double beta);
/// max(xi)/(xi_gamma + xi_q) - 1/2 <= c/2. False when no visits yet.
bool flatness_check(const WlState& state, double c);

RunRecord wl_estimate(const TargetDensity& target, const Surrogate& surrogate, const WlConfig& config,
                      Rng& rng);

/// One side of a two-component mixture problem.
struct WlComponent {
  LogDensity log_density;
  Gradient grad;
  /// Exact sampler; when empty the side moves with its kernel.
  std::function<Vec(Rng&)> sampler;
  const TargetDensity* gibbs_target = nullptr;
  KernelSpec kernel = KernelSpec::rwm(0.5);
  std::string name;
};

/// The mixture sampler on an arbitrary pair. Estimates log(Z_upper / Z_lower).
RunRecord wl_mixture_run(const WlComponent& upper, const WlComponent& lower, const WlConfig& config,
                         const Vec& init, Rng& rng);

struct PwlLadder {
  std::vector<double> lambdas;
  /// Per-rung configuration; one entry reused for every rung when size is 1.
  std::vector<WlConfig> configs;
  /// Optional starting point per rung (rung j starts near eta_j), e.g. SMC particles.
  std::vector<Vec> init_points;

  void validate() const;
};

/// Runs one mixture estimate per adjacent rung pair, each on rng.substream(j), and sums them.
RunRecord pwl_estimate(const TargetDensity& target, const Surrogate& surrogate, const PwlLadder& ladder,
                       const Rng& rng, int workers = 1);

/// Geometric ladder lambda_j = (j / p)^power for j = 0..p.
std::vector<double> geometric_ladder(int rungs, double power = 1.0);

}  // namespace wlmix
