#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace wlmix {

/// Seeded random source. The pair (seed, stream) fully determines the draw
/// sequence, so replicates and parallel workers each get their own stream.
///
/// Continuous variates (uniform, normal, gamma, inverse Gaussian) are generated
/// here rather than through <random> distributions so that sequences do not
/// depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Child stream derived from this stream's identity (not its state).
  Rng substream(std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  Eigen::VectorXd normal_vector(Eigen::Index n);
  double exponential(double rate);
  /// Gamma with shape k and scale theta (mean k * theta).
  double gamma(double shape, double scale);
  /// Inverse Gaussian with the given mean and shape (Michael-Schucany-Haas).
  double inverse_gaussian(double mean, double shape);
  long poisson(double mean);
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t uniform_index(std::size_t n);
  /// Index drawn with probability proportional to exp(log_weights[i]).
  std::size_t categorical_log(const std::vector<double>& log_weights);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace wlmix
