#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "wlmix/core.hpp"

namespace wlmix {

// ---- Gaussian pair -------------------------------------------------------

struct MvnPair {
  TargetDensity target;
  Surrogate surrogate;
};

/// Normalized N(0, I_dim) target (log Z = 0) and surrogate N(mu 1, I_dim).
MvnPair mvn_pair(int dim, double mu);

/// Unnormalized exp(-theta^2 / 2); log Z = log sqrt(2 pi).
TargetDensity gauss1d_unnormalized();

// ---- conjugate oracles ---------------------------------------------------

/// theta ~ N(prior_mean, prior_cov), y_i ~ N(theta, noise_cov) for each row y_i of `obs`.
struct NormalNormalModel {
  TargetDensity target;
  Vec post_mean;
  Mat post_cov;
  /// Closed-form log evidence.
  double log_evidence = 0.0;
  Surrogate prior;
};

/// Gibbs blocks are the single coordinates (exact Gaussian conditionals).
NormalNormalModel normal_normal(const Mat& obs, const Vec& prior_mean, const Mat& prior_cov, const Mat& noise_cov);

/// y ~ N(X beta, s2 I), beta | s2 ~ N(0, s2 V0), s2 ~ IG(a0, b0); coordinates (beta, log s2).
struct NigRegressionModel {
  TargetDensity target;
  double log_evidence = 0.0;
};
NigRegressionModel nig_regression(const Mat& X, const Vec& y, const Mat& V0, double a0, double b0);

// ---- data helpers --------------------------------------------------------

struct RegressionData {
  Mat X;
  Vec y;
};

/// Centers each column and scales it to unit (n-1) variance. Constant columns are left centered.
void standardize_columns(Mat& X);

/// Reads a numeric CSV; the column named "y" becomes the response, the rest the design.
RegressionData load_regression_csv(const std::string& path);
void save_regression_csv(const std::string& path, const RegressionData& data);

// ---- log-Gaussian Cox process -------------------------------------------

struct LgcpParams {
  double sigma2 = 1.91;
  double beta_len = 1.0 / 33.0;
  /// Prior mean is log(mean_count) - sigma2 / 2.
  double mean_count = 126.0;
};

struct LgcpData {
  int M = 10;
  Vec counts;
};

/// Counts drawn from the prior predictive: theta ~ N(mu0, Sigma0), y_m ~ Poisson(a exp(theta_m)).
LgcpData lgcp_synthetic(int M, std::uint64_t seed, const LgcpParams& params = {});
/// Grids point locations on the window [x0,x1] x [y0,y1] into an M x M lattice.
LgcpData lgcp_from_points(int M, const std::vector<std::pair<double, double>>& points, double x0 = 0.0,
                          double x1 = 1.0, double y0 = 0.0, double y1 = 1.0);
/// Reads x,y locations. Points already inside the unit square use it as the window, otherwise the bounding box.
LgcpData lgcp_load_points_csv(int M, const std::string& path);
/// Spreads the counts uniformly inside their cells and returns x,y rows in the unit square.
std::vector<std::pair<double, double>> lgcp_points_from_counts(const LgcpData& data, std::uint64_t seed);

struct LgcpModel {
  int M = 0;
  double area = 0.0;
  double mu0 = 0.0;
  LgcpParams params;
  Vec counts;
  Mat sigma0;
  Mat precision;
  Mat chol;
  double log_det = 0.0;
  TargetDensity target;

  /// Newton-Raphson mode of log gamma.
  Vec newton_mode(int max_iters = 100, double tol = 1e-10) const;
  /// Hessian of log gamma at theta.
  Mat hessian(const Vec& theta) const;
  /// The normalized prior N(mu0, Sigma0) as a surrogate.
  Surrogate prior_surrogate() const;
};

/// Cell centers in the unit square; Sigma0(m,n) = sigma2 exp(-|c_m - c_n| / beta_len).
LgcpModel lgcp_build(const LgcpData& data, const LgcpParams& params = {});

// ---- Bayesian Lasso -----------------------------------------------------

/// Synthetic design with Sigma_ij = exp(-|i-j|), standardized columns, y ~ N(X beta*, 1).
RegressionData lasso_synthetic(int n, int p, double snr, std::uint64_t seed);
/// The leading nonzero pattern scaled by snr * sqrt(log p / n).
Vec lasso_true_beta(int n, int p, double snr);

struct LassoModel {
  int n = 0;
  int p = 0;
  double lambda = 1.0;
  Mat X;
  Vec y;
  Mat xtx;
  Vec xty;
  double yty = 0.0;
  /// Coordinates (beta_1..p, eta_1..p = log tau^2, xi = log sigma^2).
  TargetDensity target;

  Vec initial_point() const;
  /// Starting factors for mean-field CAVI.
  std::pair<Vec, Vec> cavi_init() const;
};

LassoModel lasso_build(const Mat& X, const Vec& y, double lambda);

// ---- hierarchical logistic regression ------------------------------------

/// Raw predictors standardized, followed by all pairwise products (no intercept column).
Mat interaction_expand(const Mat& raw);

struct LogisticData {
  Mat X;
  Vec y;
};

/// Standard-normal raw predictors, optional interaction expansion, coefficients drawn from the prior.
LogisticData logistic_synthetic(int n, int p_raw, bool interactions, double lambda_h, std::uint64_t seed);

struct LogisticModel {
  int n = 0;
  int p = 0;
  double lambda_h = 1.0;
  Mat X;
  Vec y;
  /// Coordinates (alpha, beta_1..p, log s^2).
  TargetDensity target;
};

LogisticModel logistic_build(const Mat& X, const Vec& y, double lambda_h);

// ---- g-prior variable selection -------------------------------------------

struct GPriorModel {
  int n = 0;
  int p = 0;
  double g = 1.0;
  Mat X;
  Vec y;
  Mat xtx;
  Vec xty;
  double yty = 0.0;

  /// log p(gamma | y) up to a constant; -inf when X_gamma'X_gamma is singular.
  double log_marginal(const std::vector<int>& included) const;
  double log_marginal_mask(std::uint64_t mask) const;
  /// S_gamma = y'y - g/(g+1) y'H_gamma y.
  double residual_quadratic(const std::vector<int>& included) const;
  /// g/(g+1) times the least-squares coefficients of the included columns.
  Vec posterior_mean_beta(const std::vector<int>& included) const;
};

/// Centers y and standardizes the columns of X before building.
GPriorModel gprior_build(Mat X, Vec y, double g);

/// n x p design with AR(1) correlation 0.3; the first `active` predictors carry signal.
RegressionData gprior_synthetic(int n, int p, int active, std::uint64_t seed);

struct EnumerationResult {
  std::vector<double> inclusion;
  double expected_size = 0.0;
  double expected_sigma2 = 0.0;
  Vec expected_beta;
  /// Normalized log posterior model probabilities indexed by bit mask (-inf where excluded).
  std::vector<double> log_post;
  bool include_null = false;
};

/// Exact posterior over all 2^p models (p <= 20) under a uniform model prior.
EnumerationResult gprior_enumerate(const GPriorModel& model, bool include_null = false);

std::vector<int> mask_to_indices(std::uint64_t mask, int p);
std::uint64_t indices_to_mask(const std::vector<int>& idx);

}  // namespace wlmix
