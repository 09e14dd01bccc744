#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wlmix/core.hpp"
#include "wlmix/kernels.hpp"

namespace wlmix {

/// Common result shape shared with the mixture estimator's summary.
struct Estimate {
  std::string method;
  double log_z = kNegInf;
  json diagnostics = json::object();
  double wall_seconds = 0.0;
  bool ok = true;
  std::string error;

  json to_json(bool include_timing = false) const;
};

/// log mean_i exp(log_gamma(x_i) - log_q(x_i)) for the given draws; the shared core of IS and
/// the stepping-stone rung from the surrogate.
double log_mean_ratio(const std::vector<double>& log_gamma, const std::vector<double>& log_q, double power = 1.0);

/// ESS = (sum w)^2 / sum w^2 from log weights.
double ess_from_log_weights(const std::vector<double>& log_w);

Estimate importance_sampling(const TargetDensity& target, const Surrogate& surrogate, long n, Rng& rng);

struct BridgeResult {
  double log_r = 0.0;
  int iterations = 0;
  bool converged = false;
  /// True when the fixed-point iteration stalled and the root was bracketed instead.
  bool root_solved = false;
  /// Delta-method relative variance of r at the fixed point.
  double relative_mse = 0.0;
};

/// Optimal bridge estimate of log(Z_gamma / Z_q) with Z_q the normalizer of surrogate.log_q.
BridgeResult bridge_sampling(const TargetDensity& target, const Surrogate& surrogate,
                             const std::vector<Vec>& samples_gamma, const std::vector<Vec>& samples_q,
                             int max_iters = 200, double tol = 1e-10);

struct SteppingStoneConfig {
  std::vector<double> ladder{0.0, 1.0};
  long per_rung_samples = 1000;
  long burn_in = 100;
  KernelSpec kernel = KernelSpec::rwm(0.5);
  /// Kernel steps between retained samples.
  int thin = 1;
  /// Starting point for the first MCMC rung; defaults to a surrogate draw.
  std::optional<Vec> init;
  /// Optional per-rung starting points (one per ladder entry), e.g. SMC rung particles.
  std::vector<Vec> init_points;
};

Estimate stepping_stone(const TargetDensity& target, const Surrogate& surrogate, const SteppingStoneConfig& config,
                        Rng& rng);

struct SmcConfig {
  int n_particles = 500;
  KernelSpec kernel = KernelSpec::rwm(0.5);
  int kernel_steps = 10;
  double cess_threshold = 0.9;
  double resample_threshold = 0.5;
  double bisection_tol = 1e-6;
  /// Use this ladder instead of adapting one.
  std::vector<double> fixed_ladder;
};

struct SmcResult {
  Estimate estimate;
  std::vector<double> ladder;
  /// One particle per rung after its rejuvenation moves, usable as starting points downstream.
  std::vector<Vec> rung_points;
  std::vector<Vec> particles;
  int resamples = 0;
};

SmcResult smc_estimate(const TargetDensity& target, const Surrogate& proposal, const SmcConfig& config, Rng& rng);

/// Systematic resampling: N indices from normalized log weights with one uniform.
std::vector<std::size_t> systematic_resample(const std::vector<double>& log_w, Rng& rng);

struct ChibConfig {
  long n = 5000;
  long burn_in = 500;
  std::optional<Vec> anchor;
  std::optional<Vec> init;
};

Estimate chib_estimate(const TargetDensity& target, const ChibConfig& config, Rng& rng);

}  // namespace wlmix
