#include "wlmix/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "wlmix/core.hpp"

namespace wlmix {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}
}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(mix_seed(seed, stream)) {}

Rng Rng::substream(std::uint64_t index) const {
  return Rng(seed_, splitmix64(stream_ * 0x100000001b3ULL + index + 1));
}

double Rng::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
  return z;
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

double Rng::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) throw std::domain_error("gamma: shape and scale must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and rescale by U^(1/shape).
    const double g = gamma(shape + 1.0, 1.0);
    return scale * g * std::pow(uniform(), 1.0 / shape);
  }
  // Marsaglia & Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
  }
}

double Rng::inverse_gaussian(double mean, double shape) {
  if (!(mean > 0.0) || !(shape > 0.0)) throw std::domain_error("inverse_gaussian: mean and shape must be positive");
  if (std::isinf(mean)) {
    // Limit mean -> inf is the Levy distribution with scale `shape`.
    const double z = normal();
    return shape / (z * z);
  }
  const double z = normal();
  const double y = z * z;
  const double my = mean * y;
  const double x = mean + mean * my / (2.0 * shape) -
                   mean / (2.0 * shape) * std::sqrt(4.0 * shape * my + my * my);
  if (uniform() <= mean / (mean + x)) return x;
  return mean * mean / x;
}

long Rng::poisson(double mean) {
  if (mean < 0.0) throw std::domain_error("poisson: negative mean");
  if (mean == 0.0) return 0;
  if (mean < 30.0) {
    const double limit = std::exp(-mean);
    long k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }
  // Transformed rejection (Hormann's PTRS).
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::fabs(u);
    const long k = static_cast<long>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
    if (us >= 0.07 && v <= vr) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mean + k * loglam - std::lgamma(k + 1.0))
      return k;
  }
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::size_t Rng::categorical_log(const std::vector<double>& log_weights) {
  const double total = log_sum_exp(log_weights);
  if (!std::isfinite(total)) throw std::domain_error("categorical_log: all weights are zero");
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    acc += std::exp(log_weights[i] - total);
    if (u < acc) return i;
  }
  // Rounding left a sliver at the top; return the last index with positive weight.
  for (std::size_t i = log_weights.size(); i-- > 0;)
    if (log_weights[i] > -std::numeric_limits<double>::infinity()) return i;
  return log_weights.size() - 1;
}

}  // namespace wlmix
