#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wlmix/baselines.hpp"
#include "wlmix/core.hpp"
#include "wlmix/kernels.hpp"
#include "wlmix/wl.hpp"

namespace wlmix {

/// A built model ready for any estimator. Immutable after build_model returns.
struct ModelInstance {
  std::string name;
  std::string label;
  json params;
  TargetDensity target;
  /// Surrogate used by the mixture, IS and bridge estimators.
  Surrogate surrogate;
  /// Normalized prior, the reference for SMC and stepping stone when present.
  std::optional<Surrogate> prior;
  std::optional<Vec> target_mode;
  std::optional<double> log_z_true;
  /// Local kernel on the target.
  KernelSpec kernel;
  /// Kernel for tempered densities strictly between reference and target. Same as kernel unless
  /// that is Gibbs, whose blocks only know the target's conditionals.
  KernelSpec path_kernel;
  Vec init;
  json summary = json::object();
};

/// Model spec: {"name": "mvn"|"gauss1d"|"normal_normal"|"nig"|"lgcp"|"lasso"|"logistic", ...params}.
/// Relative "data" paths resolve against base_dir.
ModelInstance build_model(const json& spec, const std::filesystem::path& base_dir = {});
std::vector<std::string> registered_models();
std::vector<std::string> registered_methods();

/// Uniform outcome of one estimator call.
struct MethodOutcome {
  std::string method;
  double log_z = kNegInf;
  bool ok = false;
  std::string error;
  double wall_seconds = 0.0;
  /// Full record without timing.
  json record;
};

/// Runs one registered method ("wl", "awl", "pwl", "is", "bridge", "ss", "smc", "chib") with a
/// method config merged over the method defaults. Failures are caught into the outcome.
MethodOutcome run_method(const ModelInstance& model, const std::string& method, const json& config, Rng& rng);

/// Draws n target samples with the model's local kernel after burn_in steps, thinning by thin.
std::vector<Vec> sample_target(const ModelInstance& model, long n, long burn_in, int thin, Rng& rng);

/// Gradient ascent with adaptive step; returns init unchanged when the target has no gradient.
Vec locate_mode_gradient(const TargetDensity& target, Vec init, int max_iters = 2000);

/// Directional-MTM spec toward the surrogate mode and back: directions +-(surrogate mode - target mode).
std::optional<KernelSpec> mode_jump_spec(const ModelInstance& model, int tries, double r_mean, double r_sd);

struct MethodEntry {
  std::string label;
  std::string method;
  json config = json::object();
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<json> models;
  std::vector<MethodEntry> methods;
  int replicates = 1;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "results";
  bool write_traces = false;

  void validate() const;
  /// Accepts either "models": [...] or "model": {...} with an optional "grid" of parameter lists
  /// expanded as a cartesian product in key order.
  static ExperimentConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
  json to_json() const;
};

struct ResultRow {
  std::string model;
  std::string method;
  int replicates = 0;
  int succeeded = 0;
  double mean_log_z = std::numeric_limits<double>::quiet_NaN();
  double sd_log_z = std::numeric_limits<double>::quiet_NaN();
  double mean_wall = 0.0;
  double sd_wall = 0.0;
  std::optional<double> log_z_true;
  std::vector<double> log_z;
  std::vector<std::string> errors;
  bool partial() const { return succeeded < replicates; }
};

struct ResultTable {
  std::vector<ResultRow> rows;
  /// Display CSV with 6 significant digits; no timing so reruns are byte-identical.
  std::string to_csv() const;
  std::string timing_csv() const;
  /// Full-precision summary without timing.
  json to_json() const;
  const ResultRow* find(const std::string& model, const std::string& method) const;
};

/// Worker count from WLMIX_WORKERS, defaulting to the hardware concurrency.
int default_workers();

/// Runs every (model, method, replicate) task on a worker pool and writes
/// results.csv, timing.csv, summary.json, config.json and runs/<model>/<method>/rep_<r>.json.
ResultTable run_experiment(const ExperimentConfig& config, int workers = 0);

/// Recomputes every number in summary.json and results.csv from the per-replicate files.
struct AuditReport {
  bool ok = true;
  std::vector<std::string> problems;
  int rows_checked = 0;
  json to_json() const;
};
AuditReport audit_experiment(const std::filesystem::path& output_dir);

/// Deterministic stream id for (model, method, replicate).
std::uint64_t task_stream(std::size_t model_index, std::size_t method_index, std::size_t replicate);

}  // namespace wlmix
