#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "wlmix/rng.hpp"

namespace wlmix {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using json = nlohmann::json;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

/// log(sum_i exp(v_i)) without overflow. Throws std::domain_error on empty input.
double log_sum_exp(std::span<const double> values);
double log_sum_exp(const std::vector<double>& values);
double log_sum_exp(double a, double b);
/// log of the arithmetic mean of exp(v_i).
double log_mean_exp(std::span<const double> values);

class ConjugateCavi;

/// Draws one coordinate block from its full conditional and, when available,
/// evaluates the log conditional density of the block's current value given
/// the rest of the point (in the target's own coordinates).
struct GibbsBlock {
  std::string name;
  std::vector<Eigen::Index> coords;
  std::function<void(Vec&, Rng&)> sample;
  std::function<double(const Vec&)> log_conditional;
};

/// Unnormalized log density log gamma(theta) plus optional structure.
struct TargetDensity {
  int dim = 0;
  std::function<double(const Vec&)> log_gamma;
  std::function<Vec(const Vec&)> grad_log_gamma;
  std::vector<GibbsBlock> gibbs_blocks;
  std::string label;
  /// Closed-form coordinate updates for mean-field CAVI, when the model registers them.
  std::shared_ptr<const ConjugateCavi> cavi;

  bool has_gradient() const { return static_cast<bool>(grad_log_gamma); }
  bool has_gibbs() const { return !gibbs_blocks.empty(); }
  bool has_conditionals() const;
  double operator()(const Vec& x) const { return log_gamma(x); }
};

/// Normalizable surrogate q with known log normalizer and an exact sampler.
struct Surrogate {
  int dim = 0;
  std::function<double(const Vec&)> log_q;
  std::function<Vec(const Vec&)> grad_log_q;
  double log_z_q = 0.0;
  std::function<Vec(Rng&)> sample;
  std::optional<Vec> mode;
  std::string family;
  json params;

  bool has_sampler() const { return static_cast<bool>(sample); }
  /// log q*(x) = log q(x) - log Z_q.
  double log_normalized(const Vec& x) const { return log_q(x) - log_z_q; }
};

/// N(mean, diag(sd^2)), normalized (log_z_q = 0).
Surrogate make_diagonal_gaussian(const Vec& mean, const Vec& sd);
/// N(mean, cov), normalized. Throws std::invalid_argument when cov is not SPD.
Surrogate make_gaussian(const Vec& mean, const Mat& cov);
/// Wraps a target that happens to be normalizable as a surrogate with a declared log normalizer.
Surrogate surrogate_from_target(const TargetDensity& target, double log_z, std::function<Vec(Rng&)> sampler);

/// Rung density (1 - lambda) log q + lambda log gamma of the geometric path, with its
/// gradient when both ends provide one. lambda = 0 and 1 return the end densities unchanged.
struct PathDensity {
  std::function<double(const Vec&)> log_density;
  std::function<Vec(const Vec&)> grad;
};
PathDensity geometric_path_density(const TargetDensity& target, const Surrogate& surrogate, double lambda);

struct GradientReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  /// |analytic - numeric| / max(1, |analytic|, |numeric|) per coordinate.
  std::vector<double> rel_error;
  std::vector<int> flagged;
  std::vector<std::string> diagnostics;
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  bool ok() const { return flagged.empty() && diagnostics.empty(); }
};

/// Compares grad_log_gamma to central differences with the given step.
GradientReport check_gradient(const TargetDensity& target, const Vec& point, double step,
                              double tolerance = 1e-4);

/// Sample mean and (n-1)-normalized standard deviation.
struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};
MeanSd mean_sd(std::span<const double> values);

/// Standard normal CDF and log-density helpers.
double normal_cdf(double x);
double log_normal_pdf(double x, double mean, double sd);

}  // namespace wlmix
