#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "wlmix/core.hpp"
#include "wlmix/kernels.hpp"
#include "wlmix/models.hpp"
#include "wlmix/rng.hpp"

namespace wlmix {

using ModelId = std::uint64_t;

/// A proposed trans-dimensional pair i -> j on a common augmented space of size aug_dim.
/// theta_i sits at from_pos (the rest of the coordinates are u), theta_j at to_pos (the rest are v).
struct TransMove {
  ModelId from = 0;
  ModelId to = 0;
  int aug_dim = 0;
  std::vector<int> from_pos;
  std::vector<int> to_pos;
  /// log P(propose i -> j) and log P(propose j -> i) under the jump rule.
  double log_forward = 0.0;
  double log_reverse = 0.0;
};

/// Full augmentation (theta_i, u) <-> (v, theta_j) with u in R^{d_j}, v in R^{d_i}.
TransMove full_augmentation(ModelId from, int d_from, ModelId to, int d_to, double log_forward, double log_reverse);

class ModelFamily {
 public:
  virtual ~ModelFamily() = default;
  virtual int dim(ModelId k) const = 0;
  /// log p(theta_k, M_k | y, shared) up to a constant common to all models; includes the model prior.
  virtual double log_joint(ModelId k, const Vec& theta, const Vec& shared) const = 0;
  /// Mode of log_joint(k, ., shared).
  virtual Vec mode(ModelId k, const Vec& shared) const = 0;
  /// nullopt means the jump rule left the model space and the attempt is rejected.
  virtual std::optional<TransMove> propose_move(ModelId k, Rng& rng) const = 0;
  virtual double log_model_prior(ModelId k) const = 0;
  /// Gibbs update of parameters shared across models (e.g. sigma^2); no-op by default.
  virtual void update_shared(ModelId, const Vec&, Vec&, Rng&) const {}
  /// Predictors included in model k (variable-selection readout); empty for generic families.
  virtual std::vector<int> included(ModelId) const { return {}; }
  virtual int num_predictors() const { return 0; }
  virtual std::string model_name(ModelId k) const { return std::to_string(k); }
  /// All model ids when the family is small enough to list; empty otherwise.
  virtual std::vector<ModelId> enumerate_models() const { return {}; }
};

/// Coordinate ascent with 1-d Newton steps from finite differences.
Vec locate_mode(const std::function<double(const Vec&)>& log_density, Vec init, int sweeps = 200);

/// A small explicit family; every move picks the destination uniformly among the other models.
class FiniteModelFamily : public ModelFamily {
 public:
  struct Member {
    int dim = 1;
    /// Includes log p(M_k).
    std::function<double(const Vec&)> log_joint;
    std::optional<Vec> mode;
    double log_prior = 0.0;
    std::string name;
  };
  explicit FiniteModelFamily(std::vector<Member> members);

  int size() const { return static_cast<int>(members_.size()); }
  int dim(ModelId k) const override;
  double log_joint(ModelId k, const Vec& theta, const Vec& shared) const override;
  Vec mode(ModelId k, const Vec& shared) const override;
  std::optional<TransMove> propose_move(ModelId k, Rng& rng) const override;
  double log_model_prior(ModelId k) const override;
  std::string model_name(ModelId k) const override;
  std::vector<ModelId> enumerate_models() const override;

 private:
  std::vector<Member> members_;
  std::vector<Vec> modes_;
};

/// Variable selection under the g-prior given sigma^2; the model id is the inclusion bit mask.
/// shared = (sigma^2). Up/down moves add or drop a single predictor; the empty and the full
/// model are the boundary.
class GPriorFamily : public ModelFamily {
 public:
  explicit GPriorFamily(GPriorModel model);

  const GPriorModel& model() const { return model_; }
  int dim(ModelId k) const override;
  double log_joint(ModelId k, const Vec& theta, const Vec& shared) const override;
  Vec mode(ModelId k, const Vec& shared) const override;
  std::optional<TransMove> propose_move(ModelId k, Rng& rng) const override;
  double log_model_prior(ModelId) const override { return 0.0; }
  void update_shared(ModelId k, const Vec& theta, Vec& shared, Rng& rng) const override;
  std::vector<int> included(ModelId k) const override { return mask_to_indices(k, model_.p); }
  int num_predictors() const override { return model_.p; }
  std::string model_name(ModelId k) const override;

  /// Single best predictor by |x_j' y|.
  ModelId default_start() const;
  Vec default_shared() const;

 private:
  struct Cache {
    Mat G;
    Vec b;
    double half_log_det = 0.0;
    bool ok = false;
    Vec mode;
  };
  const Cache& cache(ModelId k) const;

  GPriorModel model_;
  mutable std::mutex mu_;
  mutable std::unordered_map<ModelId, std::shared_ptr<Cache>> cache_;
};

enum class JumpKind { fixed, adaptive, birth_death };
std::string to_string(JumpKind k);
JumpKind jump_kind_from_string(const std::string& s);

struct TransDimConfig {
  JumpKind jump_kind = JumpKind::fixed;
  int num_tries = 5;
  DistanceDist distance{1.0, 1.0};
  /// Probability of attempting a trans-dimensional move instead of a within-model sweep.
  double move_mix = 0.5;
  double up_down_prob = 0.5;
  /// sd of the N(0, sd^2) auxiliary distributions.
  double aux_sd = 1.0;
  /// Metropolis-within-Gibbs step sd for within-model moves.
  double within_sd = 0.5;
  /// Birth proposal sd.
  double bd_proposal_sd = 0.5;

  void validate() const;
  json to_json() const;
  static TransDimConfig from_json(const json& j);
  static TransDimConfig mtm_fixed(int tries = 5, double r_mean = 1.0, double r_sd = 1.0);
  static TransDimConfig mtm_adaptive(int tries = 5, double r_sd = 1.0);
  static TransDimConfig birth_death(double proposal_sd = 0.5);
};

struct ChainState {
  ModelId model = 0;
  Vec theta;
  Vec shared;
};

struct TransResult {
  bool accepted = false;
  double log_alpha = kNegInf;
  std::string diagnostic;
};

/// Augmented log density of model k at an augmented point: theta at pos, N(0, aux_sd^2) elsewhere.
double augmented_log_density(const ModelFamily& family, ModelId k, const Vec& x, const std::vector<int>& pos,
                             const Vec& shared, double aux_sd);

/// The adaptive-direction map x -> x + r (a - x)/|a - x| and its log Jacobian (D-1) log|1 - r/|a - x||.
Vec adaptive_jump_map(const Vec& x, const Vec& anchor, double r);
double adaptive_jump_log_jacobian(const Vec& x, const Vec& anchor, double r);

/// One multiple-try trans-dimensional attempt for a given move (fixed or adaptive direction).
TransResult mtm_rj_move(const ModelFamily& family, ChainState& state, const TransMove& move,
                        const TransDimConfig& config, Rng& rng);
/// Draws the move from the family's jump rule, then calls mtm_rj_move.
TransResult mtm_rj_step(const ModelFamily& family, ChainState& state, const TransDimConfig& config, Rng& rng);

/// Birth-death attempt: new coordinates drawn from N(0, proposal_sd^2), dropped ones scored by the same density.
TransResult bd_rj_move(const ModelFamily& family, ChainState& state, const TransMove& move, double proposal_sd,
                       Rng& rng);
TransResult bd_rj_step(const ModelFamily& family, ChainState& state, double proposal_sd, Rng& rng);

/// Metropolis-within-Gibbs sweep over theta with N(0, sd^2) increments.
int within_model_sweep(const ModelFamily& family, ChainState& state, double sd, Rng& rng);

struct ModelSelectionResult {
  std::string method;
  std::vector<double> inclusion;
  std::vector<double> inclusion_mc_sd;
  double expected_size = 0.0;
  std::map<ModelId, long> visits;
  long kept = 0;
  KernelStats trans_stats;
  KernelStats within_stats;
  /// Post-burn model trace.
  std::vector<ModelId> model_trace;
  std::vector<double> shared_mean;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  json config;
  json diagnostics = json::object();
  double wall_seconds = 0.0;

  double occupancy(ModelId k) const;
  /// (visits_i / visits_j) * p(M_j) / p(M_i); nullopt if either model was never visited.
  std::optional<double> bayes_factor(const ModelFamily& family, ModelId i, ModelId j) const;
  /// Batch-means MC sd of the occupancy of model k.
  double occupancy_mc_sd(ModelId k, int batches = 20) const;
  json to_json(const ModelFamily& family, bool include_timing = false, std::size_t top_models = 20) const;
};

ModelSelectionResult run_model_selection(const ModelFamily& family, const TransDimConfig& config, long iters,
                                         double burn_frac, ChainState init, Rng& rng);

}  // namespace wlmix
