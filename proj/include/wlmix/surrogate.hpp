#pragma once

#include <vector>

#include "wlmix/core.hpp"

namespace wlmix {

struct MeanFieldGaussian {
  Vec means;
  Vec sds;

  int dim() const { return static_cast<int>(means.size()); }
  /// Closed-form entropy sum_j 0.5 * log(2 pi e s_j^2).
  double entropy() const;
  Surrogate to_surrogate() const;
};

/// Closed-form coordinate updates and expected log density for a model whose
/// optimal mean-field factors stay in the Gaussian family.
class ConjugateCavi {
 public:
  virtual ~ConjugateCavi() = default;
  /// Replaces factor j of q by its optimum given the other factors.
  virtual void update(int j, MeanFieldGaussian& q) const = 0;
  /// E_q[log gamma(theta)].
  virtual double expected_log_gamma(const MeanFieldGaussian& q) const = 0;
};

/// Unnormalized Gaussian log gamma = c - 0.5 (x - mu)' Lambda (x - mu).
class GaussianQuadraticCavi : public ConjugateCavi {
 public:
  GaussianQuadraticCavi(Vec mu, Mat precision, double log_const);
  void update(int j, MeanFieldGaussian& q) const override;
  double expected_log_gamma(const MeanFieldGaussian& q) const override;

 private:
  Vec mu_;
  Mat lambda_;
  double c_;
};

/// Wraps a Gaussian quadratic log density as a target with gradient and CAVI hook.
TargetDensity make_gaussian_target(const Vec& mu, const Mat& precision, double log_const, std::string label = "gaussian");

struct ElboTrace {
  std::vector<double> values;
  bool converged = false;
  double tolerance = 1e-8;
  bool closed_form = false;
};

struct CaviOptions {
  int max_sweeps = 500;
  double tol = 1e-8;
  /// Draws of the other coordinates held fixed (common random numbers) in the numeric fallback.
  int num_mc = 64;
  std::uint64_t seed = 20240601;
  double min_sd = 1e-8;
};

struct CaviResult {
  MeanFieldGaussian q;
  Surrogate surrogate;
  ElboTrace trace;
  std::vector<std::string> warnings;
};

CaviResult cavi_fit(const TargetDensity& target, const MeanFieldGaussian& init, const CaviOptions& options = {});

struct ElboEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool closed_form = false;
};

/// E_q[log gamma] - E_q[log q]; closed form when the target registers one, else Monte Carlo.
ElboEstimate elbo(const TargetDensity& target, const MeanFieldGaussian& q, int num_mc, Rng& rng);

/// Gaussian fit to samples with unbiased covariance; ridge repair if needed.
Surrogate fit_gaussian_from_samples(const std::vector<Vec>& samples);

/// Probabilists' Gauss-Hermite rule: sum_k w_k f(z_k) ~ E[f(Z)], Z ~ N(0,1).
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights);

json surrogate_to_json(const Surrogate& s);
Surrogate surrogate_from_json(const json& j);

}  // namespace wlmix
