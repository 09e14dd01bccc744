#include "wlmix/surrogate.hpp"

#include <cmath>
#include <stdexcept>

namespace wlmix {

double MeanFieldGaussian::entropy() const {
  return 0.5 * dim() * (kLogTwoPi + 1.0) + sds.array().log().sum();
}

Surrogate MeanFieldGaussian::to_surrogate() const { return make_diagonal_gaussian(means, sds); }

GaussianQuadraticCavi::GaussianQuadraticCavi(Vec mu, Mat precision, double log_const)
    : mu_(std::move(mu)), lambda_(std::move(precision)), c_(log_const) {
  if (lambda_.rows() != mu_.size() || lambda_.cols() != mu_.size()) {
    throw std::invalid_argument("GaussianQuadraticCavi: size mismatch");
  }
}

void GaussianQuadraticCavi::update(int j, MeanFieldGaussian& q) const {
  const double ljj = lambda_(j, j);
  double s = 0.0;
  for (Eigen::Index k = 0; k < mu_.size(); ++k) {
    if (k != j) s += lambda_(j, k) * (q.means[k] - mu_[k]);
  }
  q.means[j] = mu_[j] - s / ljj;
  q.sds[j] = 1.0 / std::sqrt(ljj);
}

double GaussianQuadraticCavi::expected_log_gamma(const MeanFieldGaussian& q) const {
  const Vec d = q.means - mu_;
  return c_ - 0.5 * (d.dot(lambda_ * d) + (lambda_.diagonal().array() * q.sds.array().square()).sum());
}

TargetDensity make_gaussian_target(const Vec& mu, const Mat& precision, double log_const, std::string label) {
  TargetDensity t;
  t.dim = static_cast<int>(mu.size());
  t.label = std::move(label);
  t.log_gamma = [mu, precision, log_const](const Vec& x) {
    const Vec d = x - mu;
    return log_const - 0.5 * d.dot(precision * d);
  };
  t.grad_log_gamma = [mu, precision](const Vec& x) -> Vec { return -precision * (x - mu); };
  t.cavi = std::make_shared<GaussianQuadraticCavi>(mu, precision, log_const);
  return t;
}

void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need at least one node");
  Mat J = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    J(k, k - 1) = std::sqrt(static_cast<double>(k));
    J(k - 1, k) = J(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  nodes.resize(n);
  weights.resize(n);
  for (int k = 0; k < n; ++k) {
    nodes[k] = es.eigenvalues()[k];
    const double v = es.eigenvectors()(0, k);
    weights[k] = v * v;
  }
}

namespace {

/// Expected log gamma along coordinate j with the rest held at fixed draws.
struct CoordinateObjective {
  const TargetDensity& target;
  const std::vector<Vec>& others;
  const std::vector<double>& nodes;
  const std::vector<double>& weights;
  int j;

  double value(double m, double rho) const {
    const double s = std::exp(rho);
    double total = 0.0;
    for (const Vec& base : others) {
      Vec x = base;
      for (std::size_t n = 0; n < nodes.size(); ++n) {
        x[j] = m + s * nodes[n];
        const double lg = target.log_gamma(x);
        if (!(lg > kNegInf)) return kNegInf;
        total += weights[n] * lg;
      }
    }
    return total / static_cast<double>(others.size()) + rho;
  }

  Eigen::Vector2d gradient(double m, double rho) const {
    const double s = std::exp(rho);
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    if (target.has_gradient()) {
      for (const Vec& base : others) {
        Vec x = base;
        for (std::size_t n = 0; n < nodes.size(); ++n) {
          x[j] = m + s * nodes[n];
          const double gj = target.grad_log_gamma(x)[j];
          g[0] += weights[n] * gj;
          g[1] += weights[n] * gj * s * nodes[n];
        }
      }
      g /= static_cast<double>(others.size());
      g[1] += 1.0;
      return g;
    }
    const double h = 1e-5;
    g[0] = (value(m + h, rho) - value(m - h, rho)) / (2 * h);
    g[1] = (value(m, rho + h) - value(m, rho - h)) / (2 * h);
    return g;
  }
};

void numeric_update(const TargetDensity& target, int j, MeanFieldGaussian& q, const std::vector<Vec>& z,
                    const std::vector<double>& nodes, const std::vector<double>& weights, double min_sd) {
  std::vector<Vec> others;
  others.reserve(z.size());
  for (const Vec& zk : z) others.push_back(q.means + (q.sds.array() * zk.array()).matrix());
  CoordinateObjective obj{target, others, nodes, weights, j};
  double m = q.means[j];
  double rho = std::log(q.sds[j]);
  double f = obj.value(m, rho);
  if (!std::isfinite(f)) return;
  double step = 1.0;
  for (int it = 0; it < 100; ++it) {
    const Eigen::Vector2d g = obj.gradient(m, rho);
    const double gn2 = g.squaredNorm();
    if (gn2 < 1e-20) break;
    bool improved = false;
    for (int bt = 0; bt < 60; ++bt) {
      const double m2 = m + step * g[0];
      const double r2 = std::max(rho + step * g[1], std::log(min_sd));
      const double f2 = obj.value(m2, r2);
      if (std::isfinite(f2) && f2 >= f + 1e-4 * step * gn2) {
        const double gain = f2 - f;
        m = m2;
        rho = r2;
        f = f2;
        improved = true;
        step = std::min(step * 2.0, 1e3);
        if (gain < 1e-12) it = 100;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  q.means[j] = m;
  q.sds[j] = std::exp(rho);
}

double mc_expected_log_gamma(const TargetDensity& target, const MeanFieldGaussian& q, const std::vector<Vec>& z,
                             double* se) {
  std::vector<double> v;
  v.reserve(z.size());
  for (const Vec& zk : z) v.push_back(target.log_gamma(q.means + (q.sds.array() * zk.array()).matrix()));
  const MeanSd ms = mean_sd(v);
  if (se) *se = ms.n > 1 ? ms.sd / std::sqrt(static_cast<double>(ms.n)) : 0.0;
  return ms.mean;
}

}  // namespace

CaviResult cavi_fit(const TargetDensity& target, const MeanFieldGaussian& init, const CaviOptions& options) {
  if (init.dim() != target.dim || init.sds.size() != init.means.size()) {
    throw std::invalid_argument("cavi_fit: initial factors do not match the target dimension");
  }
  if ((init.sds.array() <= 0.0).any()) throw std::invalid_argument("cavi_fit: initial sds must be positive");
  const bool closed = static_cast<bool>(target.cavi);
  if (!closed && !target.log_gamma) throw std::invalid_argument("cavi_fit: target has no log density");

  CaviResult res;
  res.q = init;
  res.trace.tolerance = options.tol;
  res.trace.closed_form = closed;

  std::vector<Vec> z;
  std::vector<double> nodes, weights;
  if (!closed) {
    Rng rng(options.seed, 0);
    for (int k = 0; k < options.num_mc; ++k) z.push_back(rng.normal_vector(target.dim));
    gauss_hermite(32, nodes, weights);
  }
  auto current_elbo = [&]() {
    const double e = closed ? target.cavi->expected_log_gamma(res.q)
                            : mc_expected_log_gamma(target, res.q, z, nullptr);
    return e + res.q.entropy();
  };

  double prev = current_elbo();
  res.trace.values.push_back(prev);
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    for (int j = 0; j < target.dim; ++j) {
      if (closed) target.cavi->update(j, res.q);
      else numeric_update(target, j, res.q, z, nodes, weights, options.min_sd);
      if (!(res.q.sds[j] > options.min_sd) || !std::isfinite(res.q.sds[j])) {
        res.q.sds[j] = options.min_sd;
        res.warnings.push_back("coordinate " + std::to_string(j) + ": sd clamped");
      }
    }
    const double cur = current_elbo();
    res.trace.values.push_back(cur);
    if (closed && cur < prev - 1e-9 * (1.0 + std::fabs(prev))) {
      throw std::logic_error("cavi_fit: ELBO decreased in the closed-form regime");
    }
    if (std::fabs(cur - prev) <= options.tol * std::max(1.0, std::fabs(prev))) {
      res.trace.converged = true;
      break;
    }
    prev = cur;
  }
  res.surrogate = res.q.to_surrogate();
  return res;
}

ElboEstimate elbo(const TargetDensity& target, const MeanFieldGaussian& q, int num_mc, Rng& rng) {
  ElboEstimate out;
  if (target.cavi) {
    out.value = target.cavi->expected_log_gamma(q) + q.entropy();
    out.closed_form = true;
    return out;
  }
  if (num_mc < 1) throw std::invalid_argument("elbo: num_mc must be >= 1");
  std::vector<Vec> z;
  for (int k = 0; k < num_mc; ++k) z.push_back(rng.normal_vector(q.dim()));
  double se = 0.0;
  out.value = mc_expected_log_gamma(target, q, z, &se) + q.entropy();
  out.std_error = se;
  return out;
}

Surrogate fit_gaussian_from_samples(const std::vector<Vec>& samples) {
  if (samples.empty()) throw std::invalid_argument("fit_gaussian_from_samples: no samples");
  const auto d = samples.front().size();
  if (static_cast<Eigen::Index>(samples.size()) < d + 1) {
    throw std::invalid_argument("fit_gaussian_from_samples: need at least dim+1 samples");
  }
  const double n = static_cast<double>(samples.size());
  Vec mean = Vec::Zero(d);
  for (const Vec& s : samples) mean += s;
  mean /= n;
  Mat cov = Mat::Zero(d, d);
  for (const Vec& s : samples) {
    const Vec c = s - mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(c);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= (n - 1.0);
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    const double eps = 1e-6 * cov.trace() / static_cast<double>(d);
    cov.diagonal().array() += eps;
    llt.compute(cov);
    if (llt.info() != Eigen::Success || !(eps > 0.0)) {
      throw std::invalid_argument("fit_gaussian_from_samples: covariance is rank deficient after ridging; supply more samples");
    }
  }
  Surrogate s = make_gaussian(mean, cov);
  s.family = "gaussian";
  return s;
}

json surrogate_to_json(const Surrogate& s) {
  return {{"family", s.family}, {"dim", s.dim}, {"log_z_q", s.log_z_q}, {"params", s.params}};
}

Surrogate surrogate_from_json(const json& j) {
  const std::string family = j.at("family").get<std::string>();
  const json& p = j.at("params");
  auto vec = [](const json& a) {
    const auto v = a.get<std::vector<double>>();
    return Vec(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  if (family == "mean_field_gaussian") return make_diagonal_gaussian(vec(p.at("means")), vec(p.at("sds")));
  if (family == "gaussian") {
    const Vec mean = vec(p.at("mean"));
    Mat cov(mean.size(), mean.size());
    const auto& rows = p.at("cov");
    if (rows.size() != static_cast<std::size_t>(mean.size())) throw std::invalid_argument("surrogate json: cov shape");
    for (Eigen::Index i = 0; i < mean.size(); ++i) cov.row(i) = vec(rows[i]).transpose();
    return make_gaussian(mean, cov);
  }
  throw std::invalid_argument("surrogate json: unknown family '" + family + "'");
}

}  // namespace wlmix
