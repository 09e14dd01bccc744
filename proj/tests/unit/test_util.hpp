#pragma once

#include <cmath>
#include <vector>

#include "wlmix/core.hpp"

namespace wlmix::testing {

/// Bin probabilities of N(mean, sd^2) over equal-width bins on [lo, hi] plus the two tails.
inline std::vector<double> normal_bin_probs(double mean, double sd, double lo, double hi, int bins) {
  std::vector<double> p(bins + 2);
  const double w = (hi - lo) / bins;
  double prev = 0.0;
  for (int b = 0; b <= bins; ++b) {
    const double c = normal_cdf((lo + b * w - mean) / sd);
    p[b] = c - prev;
    prev = c;
  }
  p[bins + 1] = 1.0 - prev;
  return p;
}

inline int bin_of(double x, double lo, double hi, int bins) {
  if (x < lo) return 0;
  if (x >= hi) return bins + 1;
  return 1 + static_cast<int>((x - lo) / (hi - lo) * bins);
}

inline double total_variation(const std::vector<double>& counts, const std::vector<double>& probs) {
  double n = 0.0;
  for (double c : counts) n += c;
  double tv = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) tv += std::fabs(counts[i] / n - probs[i]);
  return 0.5 * tv;
}

/// Standard 1-d N(0, 1) target with gradient and an exact Gibbs block.
inline TargetDensity std_normal_target(int dim = 1) {
  TargetDensity t;
  t.dim = dim;
  t.label = "std_normal";
  t.log_gamma = [](const Vec& x) { return -0.5 * x.squaredNorm(); };
  t.grad_log_gamma = [](const Vec& x) -> Vec { return -x; };
  for (int j = 0; j < dim; ++j) {
    GibbsBlock b;
    b.name = "x" + std::to_string(j);
    b.coords = {j};
    b.sample = [j](Vec& x, Rng& rng) { x[j] = rng.normal(); };
    b.log_conditional = [j](const Vec& x) { return log_normal_pdf(x[j], 0.0, 1.0); };
    t.gibbs_blocks.push_back(b);
  }
  return t;
}

}  // namespace wlmix::testing
