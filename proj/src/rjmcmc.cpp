#include "wlmix/rjmcmc.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace wlmix {

TransMove full_augmentation(ModelId from, int d_from, ModelId to, int d_to, double log_forward, double log_reverse) {
  TransMove m;
  m.from = from;
  m.to = to;
  m.aug_dim = d_from + d_to;
  for (int i = 0; i < d_from; ++i) m.from_pos.push_back(i);
  for (int i = 0; i < d_to; ++i) m.to_pos.push_back(d_from + i);
  m.log_forward = log_forward;
  m.log_reverse = log_reverse;
  return m;
}

Vec locate_mode(const std::function<double(const Vec&)>& log_density, Vec x, int sweeps) {
  double f = log_density(x);
  if (!std::isfinite(f)) throw std::domain_error("locate_mode: non-finite density at the start point");
  for (int s = 0; s < sweeps; ++s) {
    double biggest = 0.0;
    for (Eigen::Index c = 0; c < x.size(); ++c) {
      const double h = 1e-4 * std::max(1.0, std::fabs(x[c]));
      Vec xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      const double fp = log_density(xp), fm = log_density(xm);
      const double g = (fp - fm) / (2.0 * h);
      const double H = (fp - 2.0 * f + fm) / (h * h);
      double step = H < 0.0 ? -g / H : (g > 0 ? 1.0 : -1.0) * 0.1 * std::max(1.0, std::fabs(x[c]));
      if (!std::isfinite(step) || g == 0.0) continue;
      for (int k = 0; k < 40; ++k, step *= 0.5) {
        Vec xn = x;
        xn[c] += step;
        const double fn = log_density(xn);
        if (fn > f) {
          x = xn;
          f = fn;
          biggest = std::max(biggest, std::fabs(step));
          break;
        }
      }
    }
    if (biggest < 1e-10) break;
  }
  return x;
}

// ---- FiniteModelFamily ----------------------------------------------------

FiniteModelFamily::FiniteModelFamily(std::vector<Member> members) : members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("FiniteModelFamily: no models");
  for (auto& m : members_) {
    if (m.dim < 1) throw std::invalid_argument("FiniteModelFamily: dims must be >= 1");
    if (!m.log_joint) throw std::invalid_argument("FiniteModelFamily: missing log_joint");
    Vec mode = m.mode ? *m.mode : locate_mode(m.log_joint, Vec::Zero(m.dim));
    if (mode.size() != m.dim || !mode.allFinite()) throw std::invalid_argument("FiniteModelFamily: bad mode");
    modes_.push_back(std::move(mode));
  }
}

int FiniteModelFamily::dim(ModelId k) const { return members_.at(k).dim; }

double FiniteModelFamily::log_joint(ModelId k, const Vec& theta, const Vec&) const {
  return members_.at(k).log_joint(theta);
}

Vec FiniteModelFamily::mode(ModelId k, const Vec&) const { return modes_.at(k); }

std::optional<TransMove> FiniteModelFamily::propose_move(ModelId k, Rng& rng) const {
  const std::size_t K = members_.size();
  if (K < 2) return std::nullopt;
  std::size_t j = rng.uniform_index(K - 1);
  if (j >= k) ++j;
  const double lp = -std::log(static_cast<double>(K - 1));
  return full_augmentation(k, dim(k), j, dim(j), lp, lp);
}

double FiniteModelFamily::log_model_prior(ModelId k) const { return members_.at(k).log_prior; }

std::string FiniteModelFamily::model_name(ModelId k) const {
  const auto& n = members_.at(k).name;
  return n.empty() ? "M" + std::to_string(k) : n;
}

std::vector<ModelId> FiniteModelFamily::enumerate_models() const {
  std::vector<ModelId> ids(members_.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return ids;
}

// ---- GPriorFamily --------------------------------------------------------

GPriorFamily::GPriorFamily(GPriorModel model) : model_(std::move(model)) {
  if (model_.p < 1) throw std::invalid_argument("GPriorFamily: need at least one predictor");
}

int GPriorFamily::dim(ModelId k) const { return std::popcount(k); }

const GPriorFamily::Cache& GPriorFamily::cache(ModelId k) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = cache_.find(k);
  if (it != cache_.end()) return *it->second;
  auto c = std::make_shared<Cache>();
  const auto idx = mask_to_indices(k, model_.p);
  const auto q = static_cast<Eigen::Index>(idx.size());
  c->G.resize(q, q);
  c->b.resize(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    c->b[i] = model_.xty[idx[i]];
    for (Eigen::Index j = 0; j < q; ++j) c->G(i, j) = model_.xtx(idx[i], idx[j]);
  }
  if (q > 0) {
    Eigen::LLT<Mat> llt(c->G);
    const Mat L = llt.matrixL();
    c->ok = llt.info() == Eigen::Success && L.diagonal().minCoeff() > 1e-8 * std::sqrt(c->G.diagonal().maxCoeff());
    if (c->ok) {
      c->half_log_det = L.diagonal().array().log().sum();
      c->mode = model_.g / (model_.g + 1.0) * llt.solve(c->b);
    }
  }
  const Cache& ref = *c;
  cache_.emplace(k, std::move(c));
  return ref;
}

double GPriorFamily::log_joint(ModelId k, const Vec& beta, const Vec& shared) const {
  const Cache& c = cache(k);
  if (!c.ok) return kNegInf;
  const double s2 = shared[0];
  const double g = model_.g;
  const double q = static_cast<double>(beta.size());
  return -0.5 * q * (kLogTwoPi + std::log(g * s2)) + c.half_log_det -
         0.5 / s2 * ((g + 1.0) / g * beta.dot(c.G * beta) - 2.0 * beta.dot(c.b));
}

Vec GPriorFamily::mode(ModelId k, const Vec&) const {
  const Cache& c = cache(k);
  if (!c.ok) throw std::domain_error("GPriorFamily: singular design for model " + model_name(k));
  return c.mode;
}

namespace {

// Positions of the predictors of `sub` inside the sorted predictor list of `super`.
std::vector<int> nested_positions(ModelId sub, ModelId super, int p) {
  std::vector<int> pos;
  int slot = 0;
  for (int j = 0; j < p; ++j) {
    if (!(super >> j & 1ULL)) continue;
    if (sub >> j & 1ULL) pos.push_back(slot);
    ++slot;
  }
  return pos;
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

std::optional<TransMove> GPriorFamily::propose_move(ModelId k, Rng& rng) const {
  const int p = model_.p;
  const int q = dim(k);
  const bool up = rng.uniform() < 0.5;
  TransMove m;
  m.from = k;
  if (up) {
    if (q >= p) return std::nullopt;
    std::size_t pick = rng.uniform_index(static_cast<std::size_t>(p - q));
    int j = 0;
    for (;; ++j) {
      if (k >> j & 1ULL) continue;
      if (pick == 0) break;
      --pick;
    }
    m.to = k | (1ULL << j);
    m.aug_dim = q + 1;
    m.to_pos = iota_vec(q + 1);
    m.from_pos = nested_positions(k, m.to, p);
    m.log_forward = std::log(0.5) - std::log(static_cast<double>(p - q));
    m.log_reverse = std::log(0.5) - std::log(static_cast<double>(q + 1));
  } else {
    if (q <= 1) return std::nullopt;
    const auto idx = mask_to_indices(k, p);
    const int j = idx[rng.uniform_index(idx.size())];
    m.to = k & ~(1ULL << j);
    m.aug_dim = q;
    m.from_pos = iota_vec(q);
    m.to_pos = nested_positions(m.to, k, p);
    m.log_forward = std::log(0.5) - std::log(static_cast<double>(q));
    m.log_reverse = std::log(0.5) - std::log(static_cast<double>(p - q + 1));
  }
  return m;
}

void GPriorFamily::update_shared(ModelId k, const Vec& beta, Vec& shared, Rng& rng) const {
  const Cache& c = cache(k);
  const double quad = beta.size() > 0 ? beta.dot(c.G * beta) : 0.0;
  const double cross = beta.size() > 0 ? beta.dot(c.b) : 0.0;
  const double rss = std::max(model_.yty - 2.0 * cross + quad, 0.0);
  const double shape = 0.5 * (model_.n + static_cast<double>(beta.size()));
  const double rate = 0.5 * (quad / model_.g + rss);
  shared[0] = 1.0 / rng.gamma(shape, 1.0 / rate);
}

std::string GPriorFamily::model_name(ModelId k) const {
  std::string s;
  for (int j : mask_to_indices(k, model_.p)) {
    if (!s.empty()) s += "+";
    s += "x" + std::to_string(j + 1);
  }
  return s.empty() ? "null" : s;
}

ModelId GPriorFamily::default_start() const {
  Eigen::Index best = 0;
  model_.xty.cwiseAbs().maxCoeff(&best);
  return 1ULL << best;
}

Vec GPriorFamily::default_shared() const {
  return Vec::Constant(1, model_.yty / std::max(1, model_.n));
}

// ---- config ---------------------------------------------------------------

std::string to_string(JumpKind k) {
  switch (k) {
    case JumpKind::fixed: return "fixed";
    case JumpKind::adaptive: return "adaptive";
    case JumpKind::birth_death: return "birth_death";
  }
  return "?";
}

JumpKind jump_kind_from_string(const std::string& s) {
  if (s == "fixed") return JumpKind::fixed;
  if (s == "adaptive") return JumpKind::adaptive;
  if (s == "birth_death" || s == "bd") return JumpKind::birth_death;
  throw std::invalid_argument("unknown jump kind: " + s);
}

void TransDimConfig::validate() const {
  if (num_tries < 1) throw std::invalid_argument("TransDimConfig: num_tries must be >= 1");
  if (!(distance.sd >= 0.0)) throw std::invalid_argument("TransDimConfig: distance sd must be >= 0");
  if (jump_kind == JumpKind::adaptive && !distance.symmetric()) {
    throw std::invalid_argument("TransDimConfig: adaptive jumps need p(r) symmetric about 0");
  }
  if (jump_kind == JumpKind::adaptive && !(distance.sd > 0.0)) {
    throw std::invalid_argument("TransDimConfig: adaptive jumps need a non-degenerate p(r)");
  }
  if (!(move_mix >= 0.0 && move_mix <= 1.0)) throw std::invalid_argument("TransDimConfig: move_mix must be in [0,1]");
  if (up_down_prob != 0.5) throw std::invalid_argument("TransDimConfig: up_down_prob is fixed at 0.5");
  if (!(aux_sd > 0.0 && within_sd > 0.0 && bd_proposal_sd > 0.0)) {
    throw std::invalid_argument("TransDimConfig: scales must be positive");
  }
}

json TransDimConfig::to_json() const {
  return {{"jump_kind", to_string(jump_kind)}, {"num_tries", num_tries},
          {"distance_mean", distance.mean}, {"distance_sd", distance.sd},
          {"move_mix", move_mix}, {"up_down_prob", up_down_prob},
          {"aux_sd", aux_sd}, {"within_sd", within_sd}, {"bd_proposal_sd", bd_proposal_sd}};
}

TransDimConfig TransDimConfig::from_json(const json& j) {
  TransDimConfig c;
  if (j.contains("jump_kind")) c.jump_kind = jump_kind_from_string(j.at("jump_kind").get<std::string>());
  if (c.jump_kind == JumpKind::adaptive) c.distance = {0.0, 1.0};
  c.num_tries = j.value("num_tries", c.num_tries);
  c.distance.mean = j.value("distance_mean", c.distance.mean);
  c.distance.sd = j.value("distance_sd", c.distance.sd);
  c.move_mix = j.value("move_mix", c.move_mix);
  c.up_down_prob = j.value("up_down_prob", c.up_down_prob);
  c.aux_sd = j.value("aux_sd", c.aux_sd);
  c.within_sd = j.value("within_sd", c.within_sd);
  c.bd_proposal_sd = j.value("bd_proposal_sd", c.bd_proposal_sd);
  c.validate();
  return c;
}

TransDimConfig TransDimConfig::mtm_fixed(int tries, double r_mean, double r_sd) {
  TransDimConfig c;
  c.num_tries = tries;
  c.distance = {r_mean, r_sd};
  return c;
}

TransDimConfig TransDimConfig::mtm_adaptive(int tries, double r_sd) {
  TransDimConfig c;
  c.jump_kind = JumpKind::adaptive;
  c.num_tries = tries;
  c.distance = {0.0, r_sd};
  return c;
}

TransDimConfig TransDimConfig::birth_death(double proposal_sd) {
  TransDimConfig c;
  c.jump_kind = JumpKind::birth_death;
  c.num_tries = 1;
  c.bd_proposal_sd = proposal_sd;
  return c;
}

// ---- moves ----------------------------------------------------------------

namespace {

std::vector<int> complement(const std::vector<int>& pos, int D) {
  std::vector<bool> used(D, false);
  for (int i : pos) used[i] = true;
  std::vector<int> out;
  for (int i = 0; i < D; ++i) {
    if (!used[i]) out.push_back(i);
  }
  return out;
}

Vec gather(const Vec& x, const std::vector<int>& pos) {
  Vec out(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) out[i] = x[pos[i]];
  return out;
}

Vec scatter(const Vec& v, const std::vector<int>& pos, int D) {
  Vec out = Vec::Zero(D);
  for (std::size_t i = 0; i < pos.size(); ++i) out[pos[i]] = v[i];
  return out;
}

double aux_log_density(const Vec& x, const std::vector<int>& aux, double sd) {
  double s = 0.0;
  for (int i : aux) s += log_normal_pdf(x[i], 0.0, sd);
  return s;
}

void check_move(const ModelFamily& family, const ChainState& state, const TransMove& move) {
  if (move.from != state.model) throw std::invalid_argument("trans move does not start at the current model");
  if (static_cast<int>(move.from_pos.size()) != family.dim(move.from) ||
      static_cast<int>(move.to_pos.size()) != family.dim(move.to) || state.theta.size() != family.dim(move.from)) {
    throw std::invalid_argument("trans move layout does not match the model dimensions");
  }
}

}  // namespace

double augmented_log_density(const ModelFamily& family, ModelId k, const Vec& x, const std::vector<int>& pos,
                             const Vec& shared, double aux_sd) {
  const double lj = family.log_joint(k, gather(x, pos), shared);
  if (!(lj > kNegInf) || std::isnan(lj)) return kNegInf;
  return lj + aux_log_density(x, complement(pos, static_cast<int>(x.size())), aux_sd);
}

Vec adaptive_jump_map(const Vec& x, const Vec& anchor, double r) {
  const Vec d = anchor - x;
  return x + r * d / d.norm();
}

double adaptive_jump_log_jacobian(const Vec& x, const Vec& anchor, double r) {
  const double rho = (anchor - x).norm();
  return static_cast<double>(x.size() - 1) * std::log(std::fabs(1.0 - r / rho));
}

TransResult mtm_rj_move(const ModelFamily& family, ChainState& state, const TransMove& move,
                        const TransDimConfig& config, Rng& rng) {
  check_move(family, state, move);
  const int D = move.aug_dim;
  const ModelId i = move.from, j = move.to;
  const auto u_pos = complement(move.from_pos, D);
  Vec x = scatter(state.theta, move.from_pos, D);
  for (int c : u_pos) x[c] = config.aux_sd * rng.normal();
  const double lx = augmented_log_density(family, i, x, move.from_pos, state.shared, config.aux_sd);

  // Modes of the augmented posteriors; the auxiliaries are centred so their mode is 0.
  const Vec mode_i = scatter(family.mode(i, state.shared), move.from_pos, D);
  const Vec mode_j = scatter(family.mode(j, state.shared), move.to_pos, D);

  TransResult res;
  Vec e;
  Vec anchor;
  double rho = 0.0;
  if (config.jump_kind == JumpKind::adaptive) {
    // The reverse move must walk the same line, so each pair shares one anchor.
    const int di = family.dim(i), dj = family.dim(j);
    anchor = (dj > di || (dj == di && j > i)) ? mode_j : mode_i;
    rho = (anchor - x).norm();
    if (!(rho > 0.0) || !std::isfinite(rho)) {
      res.diagnostic = "zero adaptive direction";
      return res;
    }
    e = (anchor - x) / rho;
  } else {
    e = mode_j - mode_i;
  }

  const int m = config.num_tries;
  std::vector<double> r(m), w(m);
  std::vector<Vec> tries(m);
  for (int k = 0; k < m; ++k) {
    r[k] = config.distance.sample(rng);
    tries[k] = x + r[k] * e;
    w[k] = augmented_log_density(family, j, tries[k], move.to_pos, state.shared, config.aux_sd);
  }
  const double lse_w = log_sum_exp(w);
  if (!(lse_w > kNegInf)) {
    res.diagnostic = "all tries have zero density";
    return res;
  }
  const std::size_t s = m > 1 ? rng.categorical_log(w) : 0;
  const Vec& y = tries[s];
  std::vector<double> wr(m);
  for (int k = 0; k < m; ++k) {
    wr[k] = k == static_cast<int>(s) ? lx
                                     : augmented_log_density(family, i, y - r[k] * e, move.from_pos, state.shared,
                                                             config.aux_sd);
  }
  double log_alpha = lse_w - log_sum_exp(wr) + move.log_reverse - move.log_forward;
  if (config.jump_kind == JumpKind::adaptive) {
    log_alpha += static_cast<double>(D - 1) * std::log((y - anchor).norm() / rho);
  }
  res.log_alpha = log_alpha;
  if (std::isnan(log_alpha)) {
    res.diagnostic = "nan acceptance ratio";
    return res;
  }
  if (log_alpha >= 0.0 || std::log(rng.uniform()) < log_alpha) {
    state.model = j;
    state.theta = gather(y, move.to_pos);
    res.accepted = true;
  }
  return res;
}

TransResult mtm_rj_step(const ModelFamily& family, ChainState& state, const TransDimConfig& config, Rng& rng) {
  const auto move = family.propose_move(state.model, rng);
  if (!move) return {false, kNegInf, "boundary"};
  return mtm_rj_move(family, state, *move, config, rng);
}

TransResult bd_rj_move(const ModelFamily& family, ChainState& state, const TransMove& move, double proposal_sd,
                       Rng& rng) {
  check_move(family, state, move);
  const int D = move.aug_dim;
  const auto u_pos = complement(move.from_pos, D);
  const auto v_pos = complement(move.to_pos, D);
  Vec x = scatter(state.theta, move.from_pos, D);
  for (int c : u_pos) x[c] = proposal_sd * rng.normal();
  const double li = family.log_joint(move.from, state.theta, state.shared);
  const Vec theta_j = gather(x, move.to_pos);
  const double lj = family.log_joint(move.to, theta_j, state.shared);
  TransResult res;
  if (!(lj > kNegInf)) {
    res.diagnostic = "proposal has zero density";
    return res;
  }
  const double log_alpha = lj + aux_log_density(x, v_pos, proposal_sd) - li - aux_log_density(x, u_pos, proposal_sd) +
                           move.log_reverse - move.log_forward;
  res.log_alpha = log_alpha;
  if (log_alpha >= 0.0 || std::log(rng.uniform()) < log_alpha) {
    state.model = move.to;
    state.theta = theta_j;
    res.accepted = true;
  }
  return res;
}

TransResult bd_rj_step(const ModelFamily& family, ChainState& state, double proposal_sd, Rng& rng) {
  const auto move = family.propose_move(state.model, rng);
  if (!move) return {false, kNegInf, "boundary"};
  return bd_rj_move(family, state, *move, proposal_sd, rng);
}

int within_model_sweep(const ModelFamily& family, ChainState& state, double sd, Rng& rng) {
  double lx = family.log_joint(state.model, state.theta, state.shared);
  int accepts = 0;
  for (Eigen::Index c = 0; c < state.theta.size(); ++c) {
    const double old = state.theta[c];
    state.theta[c] = old + sd * rng.normal();
    const double ly = family.log_joint(state.model, state.theta, state.shared);
    if (ly > kNegInf && (ly >= lx || std::log(rng.uniform()) < ly - lx)) {
      lx = ly;
      ++accepts;
    } else {
      state.theta[c] = old;
    }
  }
  return accepts;
}

// ---- chain driver -----------------------------------------------------------

double ModelSelectionResult::occupancy(ModelId k) const {
  auto it = visits.find(k);
  return it == visits.end() || kept == 0 ? 0.0 : static_cast<double>(it->second) / kept;
}

std::optional<double> ModelSelectionResult::bayes_factor(const ModelFamily& family, ModelId i, ModelId j) const {
  auto a = visits.find(i), b = visits.find(j);
  if (a == visits.end() || b == visits.end() || a->second == 0 || b->second == 0) return std::nullopt;
  return static_cast<double>(a->second) / b->second * std::exp(family.log_model_prior(j) - family.log_model_prior(i));
}

double ModelSelectionResult::occupancy_mc_sd(ModelId k, int batches) const {
  const std::size_t n = model_trace.size();
  if (batches < 2 || n < static_cast<std::size_t>(batches)) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t len = n / batches;
  std::vector<double> means(batches);
  for (int b = 0; b < batches; ++b) {
    long c = 0;
    for (std::size_t t = b * len; t < (b + 1) * len; ++t) c += model_trace[t] == k;
    means[b] = static_cast<double>(c) / len;
  }
  return mean_sd(means).sd / std::sqrt(static_cast<double>(batches));
}

json ModelSelectionResult::to_json(const ModelFamily& family, bool include_timing, std::size_t top_models) const {
  json j;
  j["method"] = method;
  j["seed"] = seed;
  j["stream"] = stream;
  j["config"] = config;
  j["kept"] = kept;
  j["expected_size"] = expected_size;
  json inc = json::array();
  for (std::size_t p = 0; p < inclusion.size(); ++p) {
    inc.push_back({{"predictor", p + 1}, {"probability", inclusion[p]}, {"mc_sd", inclusion_mc_sd[p]}});
  }
  j["inclusion"] = inc;
  j["trans_moves"] = trans_stats.to_json();
  j["within_moves"] = within_stats.to_json();
  j["shared_mean"] = shared_mean;

  std::vector<std::pair<ModelId, long>> sorted(visits.begin(), visits.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  json models = json::array();
  auto listed = family.enumerate_models();
  if (listed.empty()) {
    for (std::size_t k = 0; k < sorted.size() && k < top_models; ++k) listed.push_back(sorted[k].first);
  }
  const ModelId ref = sorted.empty() ? 0 : sorted.front().first;
  for (ModelId k : listed) {
    json row = {{"model", family.model_name(k)}, {"id", k}, {"occupancy", occupancy(k)}};
    const auto bf = bayes_factor(family, k, ref);
    row["bayes_factor_vs_top"] = bf ? json(*bf) : json(nullptr);
    models.push_back(row);
  }
  j["models"] = models;
  j["reference_model"] = sorted.empty() ? json(nullptr) : json(family.model_name(ref));
  j["diagnostics"] = diagnostics;
  if (include_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

ModelSelectionResult run_model_selection(const ModelFamily& family, const TransDimConfig& config, long iters,
                                         double burn_frac, ChainState state, Rng& rng) {
  config.validate();
  if (iters <= 0) throw std::invalid_argument("run_model_selection: iters must be positive");
  if (!(burn_frac >= 0.0 && burn_frac < 1.0)) throw std::invalid_argument("run_model_selection: burn_frac in [0,1)");
  if (state.theta.size() != family.dim(state.model)) throw std::invalid_argument("run_model_selection: bad init");
  if (!(family.log_joint(state.model, state.theta, state.shared) > kNegInf)) {
    throw std::domain_error("run_model_selection: initial state has zero density");
  }
  const auto t0 = std::chrono::steady_clock::now();
  ModelSelectionResult res;
  res.method = config.jump_kind == JumpKind::birth_death ? "bd_rjmcmc" : "mtm_rjmcmc_" + to_string(config.jump_kind);
  res.seed = rng.seed();
  res.stream = rng.stream();
  res.config = config.to_json();
  res.config["iters"] = iters;
  res.config["burn_frac"] = burn_frac;

  const int P = family.num_predictors();
  std::vector<double> inc(P, 0.0);
  Vec shared_sum = Vec::Zero(state.shared.size());
  const long burn = static_cast<long>(std::floor(burn_frac * static_cast<double>(iters)));
  long boundary = 0;
  std::map<std::string, long> diag_counts;
  for (long t = 0; t < iters; ++t) {
    if (rng.uniform() < config.move_mix) {
      const TransResult tr = config.jump_kind == JumpKind::birth_death
                                 ? bd_rj_step(family, state, config.bd_proposal_sd, rng)
                                 : mtm_rj_step(family, state, config, rng);
      if (tr.diagnostic == "boundary") {
        ++boundary;
      } else {
        ++res.trans_stats.proposals;
        res.trans_stats.accepts += tr.accepted;
        if (!tr.diagnostic.empty()) ++diag_counts[tr.diagnostic];
      }
    } else {
      res.within_stats.proposals += state.theta.size();
      res.within_stats.accepts += within_model_sweep(family, state, config.within_sd, rng);
    }
    family.update_shared(state.model, state.theta, state.shared, rng);
    if (t >= burn) {
      ++res.visits[state.model];
      res.model_trace.push_back(state.model);
      for (int p : family.included(state.model)) inc[p] += 1.0;
      shared_sum += state.shared;
    }
  }
  res.kept = iters - burn;
  res.inclusion.resize(P);
  res.inclusion_mc_sd.assign(P, std::numeric_limits<double>::quiet_NaN());
  for (int p = 0; p < P; ++p) {
    res.inclusion[p] = inc[p] / res.kept;
    res.expected_size += res.inclusion[p];
  }
  const int batches = 20;
  if (P > 0 && res.kept >= batches) {
    const std::size_t len = res.model_trace.size() / batches;
    std::vector<std::vector<double>> means(P, std::vector<double>(batches, 0.0));
    for (int b = 0; b < batches; ++b) {
      for (std::size_t t = b * len; t < (b + 1) * len; ++t) {
        for (int p : family.included(res.model_trace[t])) means[p][b] += 1.0;
      }
    }
    for (int p = 0; p < P; ++p) {
      for (double& m : means[p]) m /= static_cast<double>(len);
      res.inclusion_mc_sd[p] = mean_sd(means[p]).sd / std::sqrt(static_cast<double>(batches));
    }
  }
  res.shared_mean.resize(shared_sum.size());
  for (Eigen::Index i = 0; i < shared_sum.size(); ++i) res.shared_mean[i] = shared_sum[i] / res.kept;
  res.diagnostics["boundary_rejections"] = boundary;
  res.diagnostics["trans_accept_rate"] = res.trans_stats.accept_rate();
  res.diagnostics["within_accept_rate"] = res.within_stats.accept_rate();
  for (const auto& [k, v] : diag_counts) res.diagnostics[k] = v;
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace wlmix
