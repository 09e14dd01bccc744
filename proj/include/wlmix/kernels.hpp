#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wlmix/core.hpp"

namespace wlmix {

using LogDensity = std::function<double(const Vec&)>;
using Gradient = std::function<Vec(const Vec&)>;

enum class KernelKind { rwm, hmc, gibbs, mtm, mtm_directional };
enum class LambdaKind { mtm_ii, inverse_sum };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/// Normal(mean, sd) distance law p(r) for directional moves; sd = 0 is a point mass.
struct DistanceDist {
  double mean = 1.0;
  double sd = 0.0;
  bool symmetric() const { return mean == 0.0; }
  double sample(Rng& rng) const { return sd > 0.0 ? rng.normal(mean, sd) : mean; }
  double log_pdf(double r) const;
};

struct KernelSpec {
  KernelKind kind = KernelKind::rwm;
  double step_size = 0.5;
  int leapfrog_steps = 10;
  int num_tries = 1;
  std::vector<Vec> directions;
  DistanceDist distance;
  LambdaKind lambda_kind = LambdaKind::mtm_ii;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  json to_json() const;
  static KernelSpec from_json(const json& j);

  static KernelSpec rwm(double step);
  static KernelSpec hmc(double step, int leapfrogs);
  static KernelSpec gibbs();
  static KernelSpec mtm(double step, int tries, LambdaKind lambda = LambdaKind::mtm_ii);
  static KernelSpec directional(std::vector<Vec> dirs, DistanceDist dist, int tries);
};

struct KernelStats {
  long proposals = 0;
  long accepts = 0;
  long divergences = 0;
  double accept_rate() const { return proposals > 0 ? static_cast<double>(accepts) / proposals : 0.0; }
  void merge(const KernelStats& other);
  json to_json() const;
};

struct StepResult {
  Vec point;
  double log_density = kNegInf;
  bool accepted = false;
};

StepResult rwm_step(const LogDensity& log_density, const Vec& x, const KernelSpec& spec, Rng& rng,
                    KernelStats* stats = nullptr, std::optional<double> log_density_x = std::nullopt);

StepResult hmc_step(const LogDensity& log_density, const Gradient& grad, const Vec& x,
                    const KernelSpec& spec, Rng& rng, KernelStats* stats = nullptr,
                    std::optional<double> log_density_x = std::nullopt);

/// Applies every Gibbs block of the target once, in order.
Vec gibbs_sweep(const TargetDensity& target, const Vec& x, Rng& rng);

StepResult mtm_step(const LogDensity& log_density, const Vec& x, const KernelSpec& spec, Rng& rng,
                    KernelStats* stats = nullptr, std::optional<double> log_density_x = std::nullopt);

StepResult mtm_directional_step(const LogDensity& log_density, const Vec& x, const KernelSpec& spec,
                                Rng& rng, KernelStats* stats = nullptr,
                                std::optional<double> log_density_x = std::nullopt);

/// Leapfrog integration of (x, p) under potential -log_density with unit mass.
void leapfrog(const Gradient& grad, Vec& x, Vec& p, double step, int steps);

/// A kernel bound to one density. Keeps the current log density cached between steps.
class Kernel {
 public:
  Kernel(KernelSpec spec, LogDensity log_density, Gradient grad = {},
         const TargetDensity* gibbs_target = nullptr);

  /// Advances x in place; lx must hold log_density(x) on entry and is updated.
  bool step(Vec& x, double& lx, Rng& rng);
  const KernelSpec& spec() const { return spec_; }
  const KernelStats& stats() const { return stats_; }
  const LogDensity& log_density() const { return log_density_; }

 private:
  KernelSpec spec_;
  LogDensity log_density_;
  Gradient grad_;
  const TargetDensity* gibbs_target_;
  KernelStats stats_;
};

}  // namespace wlmix
