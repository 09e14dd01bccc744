#include "wlmix/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wlmix/io.hpp"
#include "wlmix/surrogate.hpp"

namespace wlmix {

namespace {

double log_inv_gamma_pdf(double s, double a, double b) {
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(s) - b / s;
}

double log_mvn_pdf(const Vec& x, const Vec& mean, const Eigen::LLT<Mat>& cov_llt) {
  const Mat L = cov_llt.matrixL();
  const Vec z = L.triangularView<Eigen::Lower>().solve(x - mean);
  return -0.5 * static_cast<double>(x.size()) * kLogTwoPi - L.diagonal().array().log().sum() - 0.5 * z.squaredNorm();
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

// ---- Gaussian pair -------------------------------------------------------

MvnPair mvn_pair(int dim, double mu) {
  if (dim < 1) throw std::invalid_argument("mvn_pair: dim must be >= 1");
  MvnPair out;
  const double norm = -0.5 * dim * kLogTwoPi;
  TargetDensity& t = out.target;
  t.dim = dim;
  t.label = "mvn";
  t.log_gamma = [norm](const Vec& x) { return norm - 0.5 * x.squaredNorm(); };
  t.grad_log_gamma = [](const Vec& x) -> Vec { return -x; };
  GibbsBlock all;
  all.name = "theta";
  for (int j = 0; j < dim; ++j) all.coords.push_back(j);
  all.sample = [dim](Vec& x, Rng& rng) { x = rng.normal_vector(dim); };
  all.log_conditional = [norm](const Vec& x) { return norm - 0.5 * x.squaredNorm(); };
  t.gibbs_blocks.push_back(std::move(all));
  t.cavi = std::make_shared<GaussianQuadraticCavi>(Vec::Zero(dim), Mat::Identity(dim, dim), norm);
  out.surrogate = make_diagonal_gaussian(Vec::Constant(dim, mu), Vec::Ones(dim));
  return out;
}

TargetDensity gauss1d_unnormalized() {
  TargetDensity t;
  t.dim = 1;
  t.label = "gauss1d";
  t.log_gamma = [](const Vec& x) { return -0.5 * x.squaredNorm(); };
  t.grad_log_gamma = [](const Vec& x) -> Vec { return -x; };
  GibbsBlock b;
  b.name = "theta";
  b.coords = {0};
  b.sample = [](Vec& x, Rng& rng) { x[0] = rng.normal(); };
  b.log_conditional = [](const Vec& x) { return -0.5 * kLogTwoPi - 0.5 * x[0] * x[0]; };
  t.gibbs_blocks.push_back(std::move(b));
  t.cavi = std::make_shared<GaussianQuadraticCavi>(Vec::Zero(1), Mat::Identity(1, 1), 0.0);
  return t;
}

// ---- conjugate oracles ---------------------------------------------------

NormalNormalModel normal_normal(const Mat& obs, const Vec& prior_mean, const Mat& prior_cov, const Mat& noise_cov) {
  const auto d = prior_mean.size();
  if (obs.cols() != d || prior_cov.rows() != d || noise_cov.rows() != d) {
    throw std::invalid_argument("normal_normal: dimension mismatch");
  }
  Eigen::LLT<Mat> prior_llt(prior_cov), noise_llt(noise_cov);
  if (prior_llt.info() != Eigen::Success || noise_llt.info() != Eigen::Success) {
    throw std::invalid_argument("normal_normal: covariances must be SPD");
  }
  const double n = static_cast<double>(obs.rows());
  const Mat prior_prec = prior_llt.solve(Mat::Identity(d, d));
  const Mat noise_prec = noise_llt.solve(Mat::Identity(d, d));
  const Vec ysum = obs.colwise().sum().transpose();
  const Mat P = prior_prec + n * noise_prec;
  Eigen::LLT<Mat> P_llt(P);
  const Vec m = P_llt.solve(prior_prec * prior_mean + noise_prec * ysum);

  NormalNormalModel out;
  out.post_mean = m;
  out.post_cov = P_llt.solve(Mat::Identity(d, d));
  const Mat Y = obs;
  auto log_gamma = [prior_llt, noise_llt, prior_mean, Y](const Vec& x) {
    double s = log_mvn_pdf(x, prior_mean, prior_llt);
    for (Eigen::Index i = 0; i < Y.rows(); ++i) s += log_mvn_pdf(Y.row(i).transpose(), x, noise_llt);
    return s;
  };
  const double log_gamma_m = log_gamma(m);
  out.log_evidence = log_gamma_m - log_mvn_pdf(m, m, Eigen::LLT<Mat>(out.post_cov));

  TargetDensity& t = out.target;
  t.dim = static_cast<int>(d);
  t.label = "normal_normal";
  t.log_gamma = log_gamma;
  t.grad_log_gamma = [prior_prec, noise_prec, prior_mean, ysum, n](const Vec& x) -> Vec {
    return -prior_prec * (x - prior_mean) + noise_prec * (ysum - n * x);
  };
  for (Eigen::Index j = 0; j < d; ++j) {
    GibbsBlock b;
    b.name = "theta" + std::to_string(j);
    b.coords = {j};
    auto cond = [P, m, j](const Vec& x) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (k != j) s += P(j, k) * (x[k] - m[k]);
      }
      return std::pair<double, double>(m[j] - s / P(j, j), 1.0 / std::sqrt(P(j, j)));
    };
    b.sample = [cond, j](Vec& x, Rng& rng) {
      const auto [mean, sd] = cond(x);
      x[j] = rng.normal(mean, sd);
    };
    b.log_conditional = [cond, j](const Vec& x) {
      const auto [mean, sd] = cond(x);
      return log_normal_pdf(x[j], mean, sd);
    };
    t.gibbs_blocks.push_back(std::move(b));
  }
  t.cavi = std::make_shared<GaussianQuadraticCavi>(m, P, log_gamma_m);
  out.prior = make_gaussian(prior_mean, prior_cov);
  return out;
}

NigRegressionModel nig_regression(const Mat& X, const Vec& y, const Mat& V0, double a0, double b0) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (y.size() != n || V0.rows() != p || V0.cols() != p) throw std::invalid_argument("nig_regression: shape mismatch");
  if (!(a0 > 0 && b0 > 0)) throw std::invalid_argument("nig_regression: a0, b0 must be positive");
  Eigen::LLT<Mat> v0_llt(V0);
  if (v0_llt.info() != Eigen::Success) throw std::invalid_argument("nig_regression: V0 must be SPD");
  const Mat V0inv = v0_llt.solve(Mat::Identity(p, p));
  const Mat xtx = X.transpose() * X;
  const Vec xty = X.transpose() * y;
  const Mat Vn_inv = xtx + V0inv;
  Eigen::LLT<Mat> vn_inv_llt(Vn_inv);
  const Vec mn = vn_inv_llt.solve(xty);
  const Mat Vn = vn_inv_llt.solve(Mat::Identity(p, p));
  const Mat Ln = Eigen::LLT<Mat>(Vn).matrixL();
  const double an = a0 + 0.5 * static_cast<double>(n);
  const double bn = b0 + 0.5 * (y.squaredNorm() - mn.dot(Vn_inv * mn));
  const double log_det_vn = 2.0 * Ln.diagonal().array().log().sum();
  const double log_det_v0 = 2.0 * Mat(v0_llt.matrixL()).diagonal().array().log().sum();

  NigRegressionModel out;
  out.log_evidence = -0.5 * n * kLogTwoPi + 0.5 * (log_det_vn - log_det_v0) + a0 * std::log(b0) - an * std::log(bn) +
                     std::lgamma(an) - std::lgamma(a0);

  TargetDensity& t = out.target;
  t.dim = static_cast<int>(p + 1);
  t.label = "nig_regression";
  t.log_gamma = [X, y, V0inv, log_det_v0, a0, b0, n, p](const Vec& th) {
    const Vec beta = th.head(p);
    const double xi = th[p];
    const double s2 = std::exp(xi);
    const double rss = (y - X * beta).squaredNorm();
    const double lik = -0.5 * n * (kLogTwoPi + xi) - 0.5 * rss / s2;
    const double prior_b = -0.5 * p * (kLogTwoPi + xi) - 0.5 * log_det_v0 - 0.5 * beta.dot(V0inv * beta) / s2;
    return lik + prior_b + log_inv_gamma_pdf(s2, a0, b0) + xi;
  };
  GibbsBlock bb;
  bb.name = "beta";
  for (Eigen::Index j = 0; j < p; ++j) bb.coords.push_back(j);
  bb.sample = [mn, Ln, p](Vec& th, Rng& rng) {
    const double s = std::exp(0.5 * th[p]);
    th.head(p) = mn + s * (Ln * rng.normal_vector(p));
  };
  bb.log_conditional = [mn, Vn_inv, log_det_vn, p](const Vec& th) {
    const double xi = th[p];
    const Vec d = th.head(p) - mn;
    return -0.5 * p * (kLogTwoPi + xi) - 0.5 * log_det_vn - 0.5 * d.dot(Vn_inv * d) / std::exp(xi);
  };
  GibbsBlock sb;
  sb.name = "sigma2";
  sb.coords = {p};
  auto shape_rate = [X, y, V0inv, a0, b0, n, p](const Vec& th) {
    const Vec beta = th.head(p);
    const double S = (y - X * beta).squaredNorm() + beta.dot(V0inv * beta);
    return std::pair<double, double>(a0 + 0.5 * static_cast<double>(n + p), b0 + 0.5 * S);
  };
  sb.sample = [shape_rate, p](Vec& th, Rng& rng) {
    const auto [a, b] = shape_rate(th);
    th[p] = -std::log(rng.gamma(a, 1.0 / b));
  };
  sb.log_conditional = [shape_rate, p](const Vec& th) {
    const auto [a, b] = shape_rate(th);
    const double s2 = std::exp(th[p]);
    return log_inv_gamma_pdf(s2, a, b) + th[p];
  };
  t.gibbs_blocks = {bb, sb};
  return out;
}

// ---- data helpers --------------------------------------------------------

void standardize_columns(Mat& X) {
  const double n = static_cast<double>(X.rows());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).mean();
    X.col(j).array() -= mean;
    if (X.rows() > 1) {
      const double sd = std::sqrt(X.col(j).squaredNorm() / (n - 1.0));
      if (sd > 0.0) X.col(j) /= sd;
    }
  }
}

RegressionData load_regression_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t yc = t.column("y");
  RegressionData d;
  d.X.resize(t.rows.size(), t.header.size() - 1);
  d.y.resize(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    Eigen::Index c = 0;
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (j == yc) d.y[i] = t.rows[i][j];
      else d.X(i, c++) = t.rows[i][j];
    }
  }
  return d;
}

void save_regression_csv(const std::string& path, const RegressionData& data) {
  CsvTable t;
  for (Eigen::Index j = 0; j < data.X.cols(); ++j) t.header.push_back("x" + std::to_string(j + 1));
  t.header.push_back("y");
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) row.push_back(data.X(i, j));
    row.push_back(data.y[i]);
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

// ---- log-Gaussian Cox process -------------------------------------------

namespace {

Mat lgcp_covariance(int M, const LgcpParams& params) {
  const int d = M * M;
  Mat S(d, d);
  for (int a = 0; a < d; ++a) {
    const double ax = (a % M + 0.5) / M, ay = (a / M + 0.5) / M;
    for (int b = 0; b < d; ++b) {
      const double bx = (b % M + 0.5) / M, by = (b / M + 0.5) / M;
      const double dist = std::hypot(ax - bx, ay - by);
      S(a, b) = params.sigma2 * std::exp(-dist / params.beta_len);
    }
  }
  return S;
}

}  // namespace

LgcpData lgcp_synthetic(int M, std::uint64_t seed, const LgcpParams& params) {
  if (M < 1) throw std::invalid_argument("lgcp_synthetic: M must be >= 1");
  const Mat S = lgcp_covariance(M, params);
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("lgcp_synthetic: prior covariance is not SPD");
  Rng rng(seed, 0);
  const double mu0 = std::log(params.mean_count) - 0.5 * params.sigma2;
  const Vec theta = Vec::Constant(M * M, mu0) + Mat(llt.matrixL()) * rng.normal_vector(M * M);
  const double a = 1.0 / (static_cast<double>(M) * M);
  LgcpData d;
  d.M = M;
  d.counts.resize(M * M);
  for (int m = 0; m < M * M; ++m) d.counts[m] = static_cast<double>(rng.poisson(a * std::exp(theta[m])));
  return d;
}

LgcpData lgcp_from_points(int M, const std::vector<std::pair<double, double>>& points, double x0, double x1,
                          double y0, double y1) {
  if (M < 1) throw std::invalid_argument("lgcp_from_points: M must be >= 1");
  if (!(x1 > x0 && y1 > y0)) throw std::invalid_argument("lgcp_from_points: empty window");
  LgcpData d;
  d.M = M;
  d.counts = Vec::Zero(M * M);
  for (const auto& [x, y] : points) {
    const double u = (x - x0) / (x1 - x0), v = (y - y0) / (y1 - y0);
    if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) throw std::invalid_argument("lgcp_from_points: point outside the window");
    const int ix = std::min(M - 1, static_cast<int>(u * M));
    const int iy = std::min(M - 1, static_cast<int>(v * M));
    d.counts[iy * M + ix] += 1.0;
  }
  return d;
}

LgcpData lgcp_load_points_csv(int M, const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t xc = t.column("x"), yc = t.column("y");
  std::vector<std::pair<double, double>> pts;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& r : t.rows) {
    pts.emplace_back(r[xc], r[yc]);
    xmin = std::min(xmin, r[xc]);
    xmax = std::max(xmax, r[xc]);
    ymin = std::min(ymin, r[yc]);
    ymax = std::max(ymax, r[yc]);
  }
  if (pts.empty()) return lgcp_from_points(M, pts);
  if (xmin >= 0.0 && xmax <= 1.0 && ymin >= 0.0 && ymax <= 1.0) return lgcp_from_points(M, pts);
  return lgcp_from_points(M, pts, xmin, xmax, ymin, ymax);
}

std::vector<std::pair<double, double>> lgcp_points_from_counts(const LgcpData& data, std::uint64_t seed) {
  Rng rng(seed, 1);
  std::vector<std::pair<double, double>> pts;
  const int M = data.M;
  for (int m = 0; m < M * M; ++m) {
    const int ix = m % M, iy = m / M;
    for (int k = 0; k < static_cast<int>(data.counts[m]); ++k) {
      // Keep points strictly inside the cell so regridding is exact.
      const double u = 0.05 + 0.9 * rng.uniform();
      const double v = 0.05 + 0.9 * rng.uniform();
      pts.emplace_back((ix + u) / M, (iy + v) / M);
    }
  }
  return pts;
}

LgcpModel lgcp_build(const LgcpData& data, const LgcpParams& params) {
  const int M = data.M;
  const int d = M * M;
  if (data.counts.size() != d) throw std::invalid_argument("lgcp_build: counts must have M*M entries");
  if ((data.counts.array() < 0.0).any() || (data.counts.array() != data.counts.array().round()).any()) {
    throw std::invalid_argument("lgcp_build: counts must be nonnegative integers");
  }
  LgcpModel mdl;
  mdl.M = M;
  mdl.params = params;
  mdl.area = 1.0 / (static_cast<double>(M) * M);
  mdl.mu0 = std::log(params.mean_count) - 0.5 * params.sigma2;
  mdl.counts = data.counts;
  mdl.sigma0 = lgcp_covariance(M, params);
  Eigen::LLT<Mat> llt(mdl.sigma0);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("lgcp_build: prior covariance is not SPD");
  mdl.chol = llt.matrixL();
  mdl.precision = llt.solve(Mat::Identity(d, d));
  mdl.log_det = 2.0 * mdl.chol.diagonal().array().log().sum();

  const Mat P = mdl.precision;
  const Vec y = mdl.counts;
  const double a = mdl.area, mu0 = mdl.mu0;
  const double norm = -0.5 * d * kLogTwoPi - 0.5 * mdl.log_det;
  TargetDensity& t = mdl.target;
  t.dim = d;
  t.label = "lgcp";
  t.log_gamma = [P, y, a, mu0, norm](const Vec& th) {
    const Vec c = th.array() - mu0;
    return norm - 0.5 * c.dot(P * c) + th.dot(y) - a * th.array().exp().sum();
  };
  t.grad_log_gamma = [P, y, a, mu0](const Vec& th) -> Vec {
    const Vec c = th.array() - mu0;
    return -P * c + y - a * th.array().exp().matrix();
  };
  return mdl;
}

Mat LgcpModel::hessian(const Vec& theta) const {
  Mat H = -precision;
  H.diagonal() -= area * theta.array().exp().matrix();
  return H;
}

Vec LgcpModel::newton_mode(int max_iters, double tol) const {
  Vec th = Vec::Constant(M * M, mu0);
  double f = target.log_gamma(th);
  for (int it = 0; it < max_iters; ++it) {
    const Vec g = target.grad_log_gamma(th);
    const Vec step = (-hessian(th)).llt().solve(g);
    double s = 1.0;
    Vec next = th + step;
    double fn = target.log_gamma(next);
    while (!(fn >= f) && s > 1e-8) {
      s *= 0.5;
      next = th + s * step;
      fn = target.log_gamma(next);
    }
    th = next;
    f = fn;
    if ((s * step).norm() < tol) break;
  }
  return th;
}

Surrogate LgcpModel::prior_surrogate() const { return make_gaussian(Vec::Constant(M * M, mu0), sigma0); }

// ---- Bayesian Lasso -----------------------------------------------------

Vec lasso_true_beta(int n, int p, double snr) {
  static const double pattern[10] = {2, -3, 2, 2, -3, 3, -2, 3, -2, 3};
  Vec b = Vec::Zero(p);
  const double scale = snr * std::sqrt(std::log(static_cast<double>(p)) / n);
  for (int j = 0; j < std::min(p, 10); ++j) b[j] = scale * pattern[j];
  return b;
}

RegressionData lasso_synthetic(int n, int p, double snr, std::uint64_t seed) {
  if (n < 2 || p < 1) throw std::invalid_argument("lasso_synthetic: need n >= 2 and p >= 1");
  Mat S(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) S(i, j) = std::exp(-std::abs(i - j));
  }
  const Mat L = S.llt().matrixL();
  Rng rng(seed, 0);
  RegressionData d;
  d.X.resize(n, p);
  for (int i = 0; i < n; ++i) d.X.row(i) = (L * rng.normal_vector(p)).transpose();
  standardize_columns(d.X);
  const Vec beta = lasso_true_beta(n, p, snr);
  d.y = d.X * beta + rng.normal_vector(n);
  return d;
}

namespace {

/// Closed-form mean-field updates in (beta, eta, xi) with Gaussian factors.
class LassoCavi : public ConjugateCavi {
 public:
  LassoCavi(Mat xtx, Vec xty, double yty, int n, double lambda)
      : G_(std::move(xtx)), b_(std::move(xty)), yty_(yty), n_(n), p_(static_cast<int>(b_.size())), lambda_(lambda) {}

  void update(int j, MeanFieldGaussian& q) const override {
    const int p = p_;
    if (j < p) {
      const double kappa = e_inv_sigma2(q);
      const double dj = e_inv_tau2(q, j);
      const double off = G_.row(j).dot(q.means.head(p)) - G_(j, j) * q.means[j];
      const double prec = G_(j, j) + dj;
      q.means[j] = (b_[j] - off) / prec;
      q.sds[j] = 1.0 / std::sqrt(kappa * prec);
    } else if (j < 2 * p) {
      const int k = j - p;
      const double eb2 = q.means[k] * q.means[k] + q.sds[k] * q.sds[k];
      const double A = 0.5 * eb2 * e_inv_sigma2(q);
      const double B = 0.5 * lambda_ * lambda_;
      // (1/w^2 - 1/4)/4 = A B e^w on w in (0, 2).
      double lo = 0.0, hi = 2.0;
      for (int it = 0; it < 200; ++it) {
        const double w = 0.5 * (lo + hi);
        const double lhs = (1.0 / (w * w) - 0.25) / 4.0;
        const double rhs = A * B * std::exp(w);
        if (lhs > rhs) lo = w;
        else hi = w;
      }
      const double w = 0.5 * (lo + hi);
      const double Q = 0.5 * (1.0 / w + 0.5);
      q.means[j] = std::log(Q / B) - 0.5 * w;
      q.sds[j] = std::sqrt(w);
    } else {
      const double C = 0.5 * (expected_rss(q) + weighted_beta2(q));
      const double v2 = 2.0 / static_cast<double>(n_ + p_);
      q.means[j] = 0.5 * v2 + std::log(2.0 * C / static_cast<double>(n_ + p_));
      q.sds[j] = std::sqrt(v2);
    }
  }

  double expected_log_gamma(const MeanFieldGaussian& q) const override {
    const int p = p_;
    const double u = q.means[2 * p];
    const double kappa = e_inv_sigma2(q);
    double s = -0.5 * n_ * (kLogTwoPi + u) - 0.5 * kappa * expected_rss(q);
    const double B = 0.5 * lambda_ * lambda_;
    for (int j = 0; j < p; ++j) {
      const double phi = q.means[p + j], z2 = q.sds[p + j] * q.sds[p + j];
      const double eb2 = q.means[j] * q.means[j] + q.sds[j] * q.sds[j];
      s += -0.5 * kLogTwoPi - 0.5 * (u + phi) - 0.5 * kappa * e_inv_tau2(q, j) * eb2;
      s += std::log(B) - B * std::exp(phi + 0.5 * z2) + phi;
    }
    return s;
  }

 private:
  double e_inv_sigma2(const MeanFieldGaussian& q) const {
    const double v = q.sds[2 * p_];
    return std::exp(-q.means[2 * p_] + 0.5 * v * v);
  }
  double e_inv_tau2(const MeanFieldGaussian& q, int j) const {
    const double z = q.sds[p_ + j];
    return std::exp(-q.means[p_ + j] + 0.5 * z * z);
  }
  double expected_rss(const MeanFieldGaussian& q) const {
    const Vec m = q.means.head(p_);
    const Vec s2 = q.sds.head(p_).array().square();
    return yty_ - 2.0 * m.dot(b_) + m.dot(G_ * m) + G_.diagonal().dot(s2);
  }
  double weighted_beta2(const MeanFieldGaussian& q) const {
    double s = 0.0;
    for (int j = 0; j < p_; ++j) s += (q.means[j] * q.means[j] + q.sds[j] * q.sds[j]) * e_inv_tau2(q, j);
    return s;
  }

  Mat G_;
  Vec b_;
  double yty_;
  int n_;
  int p_;
  double lambda_;
};

}  // namespace

LassoModel lasso_build(const Mat& X, const Vec& y, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lasso_build: lambda must be positive");
  if (X.rows() != y.size()) throw std::invalid_argument("lasso_build: X and y disagree on n");
  LassoModel mdl;
  mdl.n = static_cast<int>(X.rows());
  mdl.p = static_cast<int>(X.cols());
  mdl.lambda = lambda;
  mdl.X = X;
  mdl.y = y;
  mdl.xtx = X.transpose() * X;
  mdl.xty = X.transpose() * y;
  mdl.yty = y.squaredNorm();
  const int n = mdl.n, p = mdl.p;
  const Mat G = mdl.xtx;
  const Vec b = mdl.xty;
  const double yty = mdl.yty;
  const double l2 = lambda * lambda;
  const double logB = std::log(0.5 * l2);

  auto rss = [G, b, yty](const Vec& beta) { return yty - 2.0 * beta.dot(b) + beta.dot(G * beta); };

  TargetDensity& t = mdl.target;
  t.dim = 2 * p + 1;
  t.label = "lasso";
  t.log_gamma = [rss, n, p, l2, logB](const Vec& th) {
    const Vec beta = th.head(p);
    const Vec eta = th.segment(p, p);
    const double xi = th[2 * p];
    const double s2 = std::exp(xi);
    double s = -0.5 * n * (kLogTwoPi + xi) - 0.5 * std::max(rss(beta), 0.0) / s2;
    for (int j = 0; j < p; ++j) {
      s += -0.5 * (kLogTwoPi + xi + eta[j]) - 0.5 * beta[j] * beta[j] / (s2 * std::exp(eta[j]));
      s += logB - 0.5 * l2 * std::exp(eta[j]) + eta[j];
    }
    return s;
  };

  GibbsBlock bb;
  bb.name = "beta";
  for (int j = 0; j < p; ++j) bb.coords.push_back(j);
  auto beta_cond = [G, b, p](const Vec& th) {
    Mat C = G;
    C.diagonal() += (-th.segment(p, p).array()).exp().matrix();
    Eigen::LLT<Mat> llt(C);
    Vec mean = llt.solve(b);
    return std::pair<Eigen::LLT<Mat>, Vec>(std::move(llt), std::move(mean));
  };
  bb.sample = [beta_cond, p](Vec& th, Rng& rng) {
    const auto [llt, mean] = beta_cond(th);
    const double s = std::exp(0.5 * th[2 * p]);
    th.head(p) = mean + s * Mat(llt.matrixU()).triangularView<Eigen::Upper>().solve(rng.normal_vector(p));
  };
  bb.log_conditional = [beta_cond, p](const Vec& th) {
    const auto [llt, mean] = beta_cond(th);
    const double xi = th[2 * p];
    const Vec d = th.head(p) - mean;
    const Mat L = llt.matrixL();
    const double quad = (L.transpose() * d).squaredNorm();
    return -0.5 * p * (kLogTwoPi + xi) + L.diagonal().array().log().sum() - 0.5 * quad / std::exp(xi);
  };

  GibbsBlock tb;
  tb.name = "tau2";
  for (int j = 0; j < p; ++j) tb.coords.push_back(p + j);
  tb.sample = [lambda, l2, p](Vec& th, Rng& rng) {
    const double sigma = std::exp(0.5 * th[2 * p]);
    for (int j = 0; j < p; ++j) {
      const double ab = std::fabs(th[j]);
      const double mean = ab > 0.0 ? lambda * sigma / ab : std::numeric_limits<double>::infinity();
      double w = rng.inverse_gaussian(mean, l2);
      w = std::max(w, std::numeric_limits<double>::min());
      th[p + j] = -std::log(w);
    }
  };
  tb.log_conditional = [lambda, l2, p](const Vec& th) {
    const double s2 = std::exp(th[2 * p]);
    const double sigma = std::sqrt(s2);
    double s = 0.0;
    for (int j = 0; j < p; ++j) {
      const double eta = th[p + j];
      const double w = std::exp(-eta);
      const double bj = th[j];
      // log IG(w; lambda sigma/|b|, lambda^2) + log w (Jacobian into eta)
      s += 0.5 * std::log(l2 / (2.0 * M_PI)) - 1.5 * std::log(w) -
           (w * bj * bj / (2.0 * s2) - lambda * std::fabs(bj) / sigma + l2 / (2.0 * w)) + std::log(w);
    }
    return s;
  };

  GibbsBlock sb;
  sb.name = "sigma2";
  sb.coords = {2 * p};
  auto shape_rate = [rss, n, p](const Vec& th) {
    const Vec beta = th.head(p);
    const double pen = (beta.array().square() * (-th.segment(p, p).array()).exp()).sum();
    return std::pair<double, double>(0.5 * (n + p), 0.5 * (std::max(rss(beta), 0.0) + pen));
  };
  sb.sample = [shape_rate, p](Vec& th, Rng& rng) {
    const auto [a, r] = shape_rate(th);
    th[2 * p] = -std::log(rng.gamma(a, 1.0 / r));
  };
  sb.log_conditional = [shape_rate, p](const Vec& th) {
    const auto [a, r] = shape_rate(th);
    const double xi = th[2 * p];
    return a * std::log(r) - std::lgamma(a) - a * xi - r * std::exp(-xi);
  };
  t.gibbs_blocks = {bb, tb, sb};
  t.cavi = std::make_shared<LassoCavi>(G, b, yty, n, lambda);
  return mdl;
}

Vec LassoModel::initial_point() const {
  Vec th = Vec::Zero(2 * p + 1);
  th.segment(p, p).setConstant(std::log(2.0 / (lambda * lambda)));
  const double var = (y.array() - y.mean()).square().sum() / std::max(1, n - 1);
  th[2 * p] = std::log(std::max(var, 1e-8));
  return th;
}

std::pair<Vec, Vec> LassoModel::cavi_init() const {
  Vec m = initial_point();
  Vec s = Vec::Constant(2 * p + 1, 0.1);
  s.segment(p, p).setConstant(0.5);
  return {m, s};
}

// ---- logistic regression ---------------------------------------------------

Mat interaction_expand(const Mat& raw) {
  Mat Z = raw;
  standardize_columns(Z);
  const auto n = Z.rows();
  const auto k = Z.cols();
  Mat out(n, k + k * (k - 1) / 2);
  out.leftCols(k) = Z;
  Eigen::Index c = k;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) out.col(c++) = Z.col(i).cwiseProduct(Z.col(j));
  }
  return out;
}

LogisticData logistic_synthetic(int n, int p_raw, bool interactions, double lambda_h, std::uint64_t seed) {
  if (n < 0 || p_raw < 1) throw std::invalid_argument("logistic_synthetic: bad shape");
  if (!(lambda_h > 0.0)) throw std::invalid_argument("logistic_synthetic: lambda_h must be positive");
  Rng rng(seed, 0);
  Mat raw(n, p_raw);
  for (int i = 0; i < n; ++i) raw.row(i) = rng.normal_vector(p_raw).transpose();
  LogisticData d;
  if (interactions) {
    d.X = interaction_expand(raw);
  } else {
    d.X = raw;
    if (n > 1) standardize_columns(d.X);
  }
  const double s = std::sqrt(rng.exponential(lambda_h));
  const double alpha = s * rng.normal();
  const Vec beta = s * rng.normal_vector(d.X.cols());
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double eta = alpha + d.X.row(i).dot(beta);
    d.y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  return d;
}

LogisticModel logistic_build(const Mat& X, const Vec& y, double lambda_h) {
  if (!(lambda_h > 0.0)) throw std::invalid_argument("logistic_build: lambda_h must be positive");
  if (X.rows() != y.size()) throw std::invalid_argument("logistic_build: X and y disagree on n");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw std::invalid_argument("logistic_build: y must be binary");
  }
  LogisticModel mdl;
  mdl.n = static_cast<int>(X.rows());
  mdl.p = static_cast<int>(X.cols());
  mdl.lambda_h = lambda_h;
  mdl.X = X;
  mdl.y = y;
  const int p = mdl.p;
  const double K = p + 1.0;
  const double log_lam = std::log(lambda_h);
  TargetDensity& t = mdl.target;
  t.dim = p + 2;
  t.label = "logistic";
  t.log_gamma = [X, y, p, K, log_lam, lambda_h](const Vec& th) {
    const double alpha = th[0];
    const double ell = th[p + 1];
    const double s2 = std::exp(ell);
    const double c2 = alpha * alpha + th.segment(1, p).squaredNorm();
    double s = log_lam - lambda_h * s2 + ell - 0.5 * K * (kLogTwoPi + ell) - 0.5 * c2 / s2;
    if (X.rows() > 0) {
      const Vec eta = (X * th.segment(1, p)).array() + alpha;
      for (Eigen::Index i = 0; i < eta.size(); ++i) s += y[i] * eta[i] - softplus(eta[i]);
    }
    return s;
  };
  t.grad_log_gamma = [X, y, p, K, lambda_h](const Vec& th) -> Vec {
    const double alpha = th[0];
    const double ell = th[p + 1];
    const double s2 = std::exp(ell);
    Vec g(p + 2);
    Vec resid = Vec::Zero(X.rows());
    if (X.rows() > 0) {
      const Vec eta = (X * th.segment(1, p)).array() + alpha;
      resid = y - (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    }
    g[0] = -alpha / s2 + resid.sum();
    g.segment(1, p) = -th.segment(1, p) / s2 + X.transpose() * resid;
    const double c2 = alpha * alpha + th.segment(1, p).squaredNorm();
    g[p + 1] = -lambda_h * s2 + 1.0 - 0.5 * K + 0.5 * c2 / s2;
    return g;
  };
  return mdl;
}

// ---- g-prior ---------------------------------------------------------------

std::vector<int> mask_to_indices(std::uint64_t mask, int p) {
  std::vector<int> idx;
  for (int j = 0; j < p; ++j) {
    if (mask >> j & 1ULL) idx.push_back(j);
  }
  return idx;
}

std::uint64_t indices_to_mask(const std::vector<int>& idx) {
  std::uint64_t m = 0;
  for (int j : idx) m |= 1ULL << j;
  return m;
}

GPriorModel gprior_build(Mat X, Vec y, double g) {
  if (!(g > 0.0)) throw std::invalid_argument("gprior_build: g must be positive");
  if (X.rows() != y.size()) throw std::invalid_argument("gprior_build: X and y disagree on n");
  if (X.cols() > 63) throw std::invalid_argument("gprior_build: at most 63 predictors");
  standardize_columns(X);
  y.array() -= y.mean();
  GPriorModel mdl;
  mdl.n = static_cast<int>(X.rows());
  mdl.p = static_cast<int>(X.cols());
  mdl.g = g;
  mdl.xtx = X.transpose() * X;
  mdl.xty = X.transpose() * y;
  mdl.yty = y.squaredNorm();
  mdl.X = std::move(X);
  mdl.y = std::move(y);
  return mdl;
}

namespace {

bool solve_subset(const GPriorModel& m, const std::vector<int>& idx, Vec& coef) {
  const auto q = static_cast<Eigen::Index>(idx.size());
  Mat G(q, q);
  Vec b(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    b[i] = m.xty[idx[i]];
    for (Eigen::Index j = 0; j < q; ++j) G(i, j) = m.xtx(idx[i], idx[j]);
  }
  Eigen::LLT<Mat> llt(G);
  if (llt.info() != Eigen::Success) return false;
  const Mat L = llt.matrixL();
  if (L.diagonal().minCoeff() <= 1e-8 * std::sqrt(G.diagonal().maxCoeff())) return false;
  coef = llt.solve(b);
  return true;
}

}  // namespace

double GPriorModel::residual_quadratic(const std::vector<int>& included) const {
  if (included.empty()) return yty;
  Vec coef;
  if (!solve_subset(*this, included, coef)) return std::numeric_limits<double>::quiet_NaN();
  double yhy = 0.0;
  for (std::size_t i = 0; i < included.size(); ++i) yhy += coef[i] * xty[included[i]];
  return yty - g / (g + 1.0) * yhy;
}

double GPriorModel::log_marginal(const std::vector<int>& included) const {
  const double S = residual_quadratic(included);
  if (!(S > 0.0)) return kNegInf;
  return -0.5 * static_cast<double>(included.size()) * std::log1p(g) - 0.5 * n * std::log(S);
}

double GPriorModel::log_marginal_mask(std::uint64_t mask) const { return log_marginal(mask_to_indices(mask, p)); }

Vec GPriorModel::posterior_mean_beta(const std::vector<int>& included) const {
  Vec coef;
  if (included.empty()) return Vec();
  if (!solve_subset(*this, included, coef)) throw std::domain_error("posterior_mean_beta: singular design subset");
  return g / (g + 1.0) * coef;
}

RegressionData gprior_synthetic(int n, int p, int active, std::uint64_t seed) {
  if (n < 3 || p < 1 || active < 0 || active > p) throw std::invalid_argument("gprior_synthetic: bad shape");
  Rng rng(seed, 0);
  Mat S(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) S(i, j) = std::pow(0.3, std::abs(i - j));
  }
  const Mat L = S.llt().matrixL();
  RegressionData d;
  d.X.resize(n, p);
  for (int i = 0; i < n; ++i) d.X.row(i) = (L * rng.normal_vector(p)).transpose();
  standardize_columns(d.X);
  static const double pattern[] = {1.5, -1.2, 1.0, -0.8, 0.8};
  Vec beta = Vec::Zero(p);
  for (int j = 0; j < active; ++j) beta[j] = pattern[j % 5];
  d.y = d.X * beta + rng.normal_vector(n);
  d.y.array() -= d.y.mean();
  return d;
}

EnumerationResult gprior_enumerate(const GPriorModel& model, bool include_null) {
  if (model.p > 20) throw std::invalid_argument("gprior_enumerate: p must be <= 20");
  const std::uint64_t total = 1ULL << model.p;
  EnumerationResult res;
  res.include_null = include_null;
  res.log_post.assign(total, kNegInf);
  for (std::uint64_t mask = include_null ? 0 : 1; mask < total; ++mask) res.log_post[mask] = model.log_marginal_mask(mask);
  const double z = log_sum_exp(res.log_post);
  res.inclusion.assign(model.p, 0.0);
  res.expected_beta = Vec::Zero(model.p);
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    if (res.log_post[mask] == kNegInf) continue;
    res.log_post[mask] -= z;
    const double w = std::exp(res.log_post[mask]);
    const auto idx = mask_to_indices(mask, model.p);
    res.expected_size += w * static_cast<double>(idx.size());
    res.expected_sigma2 += w * model.residual_quadratic(idx) / (model.n - 2.0);
    for (int j : idx) res.inclusion[j] += w;
    if (!idx.empty()) {
      const Vec b = model.posterior_mean_beta(idx);
      for (std::size_t k = 0; k < idx.size(); ++k) res.expected_beta[idx[k]] += w * b[k];
    }
  }
  return res;
}

}  // namespace wlmix
