#include "wlmix/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wlmix {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw std::domain_error("log_sum_exp: empty input");
  const double mx = *std::max_element(values.begin(), values.end());
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

double log_sum_exp(const std::vector<double>& values) {
  return log_sum_exp(std::span<const double>(values.data(), values.size()));
}

double log_sum_exp(double a, double b) {
  const double values[2] = {a, b};
  return log_sum_exp(std::span<const double>(values, 2));
}

double log_mean_exp(std::span<const double> values) {
  return log_sum_exp(values) - std::log(static_cast<double>(values.size()));
}

bool TargetDensity::has_conditionals() const {
  if (gibbs_blocks.empty()) return false;
  return std::all_of(gibbs_blocks.begin(), gibbs_blocks.end(),
                     [](const GibbsBlock& b) { return static_cast<bool>(b.log_conditional); });
}

Surrogate make_diagonal_gaussian(const Vec& mean, const Vec& sd) {
  if (mean.size() != sd.size()) throw std::invalid_argument("make_diagonal_gaussian: size mismatch");
  if ((sd.array() <= 0.0).any()) throw std::invalid_argument("make_diagonal_gaussian: sd must be positive");
  Surrogate s;
  s.dim = static_cast<int>(mean.size());
  const Vec inv_var = sd.array().square().inverse();
  const double norm = -0.5 * s.dim * kLogTwoPi - sd.array().log().sum();
  s.log_q = [mean, inv_var, norm](const Vec& x) {
    return norm - 0.5 * ((x - mean).array().square() * inv_var.array()).sum();
  };
  s.grad_log_q = [mean, inv_var](const Vec& x) -> Vec {
    return -((x - mean).array() * inv_var.array()).matrix();
  };
  s.log_z_q = 0.0;
  s.sample = [mean, sd](Rng& rng) -> Vec {
    return mean + (sd.array() * rng.normal_vector(mean.size()).array()).matrix();
  };
  s.mode = mean;
  s.family = "mean_field_gaussian";
  s.params = {{"means", std::vector<double>(mean.data(), mean.data() + mean.size())},
              {"sds", std::vector<double>(sd.data(), sd.data() + sd.size())}};
  return s;
}

Surrogate make_gaussian(const Vec& mean, const Mat& cov) {
  const auto d = mean.size();
  if (cov.rows() != d || cov.cols() != d) throw std::invalid_argument("make_gaussian: size mismatch");
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("make_gaussian: covariance is not SPD");
  const Mat L = llt.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  const double norm = -0.5 * static_cast<double>(d) * kLogTwoPi - 0.5 * log_det;
  const Mat precision = llt.solve(Mat::Identity(d, d));
  Surrogate s;
  s.dim = static_cast<int>(d);
  s.log_q = [mean, L, norm](const Vec& x) {
    const Vec z = L.triangularView<Eigen::Lower>().solve(x - mean);
    return norm - 0.5 * z.squaredNorm();
  };
  s.grad_log_q = [mean, precision](const Vec& x) -> Vec { return -precision * (x - mean); };
  s.log_z_q = 0.0;
  s.sample = [mean, L](Rng& rng) -> Vec { return mean + L * rng.normal_vector(mean.size()); };
  s.mode = mean;
  s.family = "gaussian";
  json cov_rows = json::array();
  for (Eigen::Index i = 0; i < d; ++i) {
    std::vector<double> row(d);
    for (Eigen::Index j = 0; j < d; ++j) row[j] = cov(i, j);
    cov_rows.push_back(row);
  }
  s.params = {{"mean", std::vector<double>(mean.data(), mean.data() + d)}, {"cov", cov_rows}};
  return s;
}

Surrogate surrogate_from_target(const TargetDensity& target, double log_z,
                                std::function<Vec(Rng&)> sampler) {
  Surrogate s;
  s.dim = target.dim;
  s.log_q = target.log_gamma;
  s.grad_log_q = target.grad_log_gamma;
  s.log_z_q = log_z;
  s.sample = std::move(sampler);
  s.family = "target";
  s.params = {{"label", target.label}};
  return s;
}

PathDensity geometric_path_density(const TargetDensity& target, const Surrogate& surrogate, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("path lambda must lie in [0,1]");
  if (lambda == 1.0) return {target.log_gamma, target.grad_log_gamma};
  if (lambda == 0.0) return {surrogate.log_q, surrogate.grad_log_q};
  PathDensity p;
  auto lg = target.log_gamma;
  auto lq = surrogate.log_q;
  p.log_density = [lg, lq, lambda](const Vec& x) {
    const double a = lg(x);
    const double b = lq(x);
    if (a == kNegInf || b == kNegInf) return kNegInf;
    return (1.0 - lambda) * b + lambda * a;
  };
  if (target.grad_log_gamma && surrogate.grad_log_q) {
    auto gg = target.grad_log_gamma;
    auto gq = surrogate.grad_log_q;
    p.grad = [gg, gq, lambda](const Vec& x) -> Vec { return (1.0 - lambda) * gq(x) + lambda * gg(x); };
  }
  return p;
}

GradientReport check_gradient(const TargetDensity& target, const Vec& point, double step,
                              double tolerance) {
  if (!target.has_gradient()) throw std::invalid_argument("check_gradient: target has no gradient");
  if (!(step > 0.0)) throw std::invalid_argument("check_gradient: step must be positive");
  GradientReport report;
  report.tolerance = tolerance;
  const auto d = point.size();
  const Vec g = target.grad_log_gamma(point);
  Vec x = point;
  for (Eigen::Index j = 0; j < d; ++j) {
    x[j] = point[j] + step;
    const double fp = target.log_gamma(x);
    x[j] = point[j] - step;
    const double fm = target.log_gamma(x);
    x[j] = point[j];
    const double numeric = (fp - fm) / (2.0 * step);
    report.analytic.push_back(g[j]);
    report.numeric.push_back(numeric);
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(g[j])) {
      report.diagnostics.push_back("coordinate " + std::to_string(j) + ": non-finite log density or gradient at probe");
      report.rel_error.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double err = std::fabs(g[j] - numeric) / std::max({1.0, std::fabs(g[j]), std::fabs(numeric)});
    report.rel_error.push_back(err);
    report.max_rel_error = std::max(report.max_rel_error, err);
    if (err > tolerance) report.flagged.push_back(static_cast<int>(j));
  }
  return report;
}

MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  out.n = values.size();
  if (values.empty()) return out;
  double s = 0.0;
  for (double v : values) s += v;
  out.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * kLogTwoPi - std::log(sd) - 0.5 * z * z;
}

}  // namespace wlmix
