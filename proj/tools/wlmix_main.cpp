#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "wlmix/bench.hpp"
#include "wlmix/io.hpp"
#include "wlmix/models.hpp"
#include "wlmix/rjmcmc.hpp"
#include "wlmix/surrogate.hpp"

using namespace wlmix;
namespace fs = std::filesystem;

namespace {

/// Model flags shared by estimate and surrogate-fit; only flags that were given end up in the spec.
struct ModelFlags {
  std::string name = "mvn";
  std::optional<int> dim, M, n, p, p_raw;
  std::optional<double> mu, snr, lambda, lambda_h, q_sd, surrogate_scale;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::string> data;
  bool interactions = false;
  std::vector<std::string> extra;

  void add(CLI::App* app) {
    app->add_option("--model", name, "Model name")->check(CLI::IsMember(registered_models()));
    app->add_option("--dim", dim, "Dimension (mvn, normal_normal)");
    app->add_option("--mu", mu, "Surrogate offset (mvn)");
    app->add_option("--M", M, "Grid size (lgcp)");
    app->add_option("--n", n, "Observations");
    app->add_option("--p", p, "Predictors");
    app->add_option("--p-raw", p_raw, "Raw predictors before interaction expansion (logistic)");
    app->add_option("--snr", snr, "Signal-to-noise ratio (lasso)");
    app->add_option("--lambda", lambda, "Penalty (lasso)");
    app->add_option("--lambda-h", lambda_h, "Hyperprior rate (logistic)");
    app->add_option("--q-sd", q_sd, "Surrogate sd (lgcp)");
    app->add_option("--surrogate-scale", surrogate_scale, "Surrogate sd inflation");
    app->add_option("--data-seed", data_seed, "Seed for synthetic data");
    app->add_option("--data", data, "Dataset CSV")->check(CLI::ExistingFile);
    app->add_flag("--interactions", interactions, "Expand pairwise interactions (logistic)");
    app->add_option("--param", extra, "Extra model parameter key=value (JSON value)");
  }

  json spec() const {
    json s{{"name", name}};
    auto put = [&](const char* k, const auto& v) {
      if (v) s[k] = *v;
    };
    put("dim", dim);
    put("mu", mu);
    put("M", M);
    put("n", n);
    put("p", p);
    put("p_raw", p_raw);
    put("snr", snr);
    put("lambda", lambda);
    put("lambda_h", lambda_h);
    put("q_sd", q_sd);
    put("surrogate_scale", surrogate_scale);
    put("seed", data_seed);
    put("data", data);
    if (interactions) s["interactions"] = true;
    for (const auto& kv : extra) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("--param expects key=value");
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      try {
        s[key] = json::parse(val);
      } catch (const json::parse_error&) {
        s[key] = val;
      }
    }
    return s;
  }
};

json parse_config_arg(const std::string& arg) {
  if (arg.empty()) return json::object();
  if (fs::exists(arg)) return read_json(arg);
  return json::parse(arg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wlmix: marginal likelihood estimation with Wang-Landau surrogate mixtures"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "Write a synthetic dataset as CSV");
  std::string gen_model = "lasso", gen_out;
  int gen_n = 150, gen_p = 30, gen_M = 10, gen_active = 3, gen_praw = 24;
  double gen_snr = 3.0, gen_lambda_h = 1.0;
  std::uint64_t gen_seed = 1;
  bool gen_inter = false;
  gen->add_option("--model", gen_model, "lgcp | lasso | logistic | gprior")
      ->check(CLI::IsMember({"lgcp", "lasso", "logistic", "gprior"}));
  gen->add_option("--out", gen_out, "Output CSV")->required();
  gen->add_option("--n", gen_n, "Observations");
  gen->add_option("--p", gen_p, "Predictors");
  gen->add_option("--p-raw", gen_praw, "Raw predictors (logistic)");
  gen->add_option("--M", gen_M, "Grid size (lgcp)");
  gen->add_option("--active", gen_active, "Active predictors (gprior)");
  gen->add_option("--snr", gen_snr, "Signal-to-noise ratio (lasso)");
  gen->add_option("--lambda-h", gen_lambda_h, "Hyperprior rate (logistic)");
  gen->add_flag("--interactions", gen_inter, "Draw logistic coefficients on the interaction design");
  gen->add_option("--seed", gen_seed, "Seed");

  // estimate
  auto* est = app.add_subcommand("estimate", "Run one estimator on one model; JSON on stdout");
  ModelFlags est_model;
  est_model.add(est);
  std::string est_method = "wl", est_config;
  std::optional<long> est_iters;
  std::uint64_t est_seed = 1;
  bool est_timing = false;
  est->add_option("--method", est_method, "Estimator")->check(CLI::IsMember(registered_methods()));
  est->add_option("--iters", est_iters, "Iteration budget (wl/awl total_iters, is n, chib n, ss per_rung)");
  est->add_option("--config", est_config, "Method config as a JSON string or file");
  est->add_option("--seed", est_seed, "Seed");
  est->add_flag("--timing", est_timing, "Include wall time in the output");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Run an experiment config");
  std::string bench_config, bench_out;
  int bench_workers = 0;
  bench->add_option("--config", bench_config, "Experiment config file")->required()->check(CLI::ExistingFile);
  bench->add_option("--output", bench_out, "Override the output directory");
  bench->add_option("--workers", bench_workers, "Worker threads (default WLMIX_WORKERS or all cores)");

  // rjmcmc
  auto* rj = app.add_subcommand("rjmcmc", "g-prior variable selection by trans-dimensional MCMC");
  std::string rj_model = "gprior", rj_sampler = "mtm", rj_oracle = "none", rj_out, rj_data;
  int rj_p = 10, rj_n = 60, rj_active = 3, rj_tries = 5;
  double rj_g = std::exp(10.0), rj_burn = 0.1, rj_r_mean = 1.0, rj_r_sd = 1.0;
  long rj_iters = 50000;
  std::uint64_t rj_seed = 1, rj_data_seed = 2024;
  rj->add_option("--model", rj_model, "Model family")->check(CLI::IsMember({"gprior"}));
  rj->add_option("--p", rj_p, "Predictors (synthetic)");
  rj->add_option("--n", rj_n, "Observations (synthetic)");
  rj->add_option("--active", rj_active, "Active predictors (synthetic)");
  rj->add_option("--data", rj_data, "Dataset CSV with a y column")->check(CLI::ExistingFile);
  rj->add_option("--data-seed", rj_data_seed, "Seed for synthetic data");
  rj->add_option("--g", rj_g, "g-prior scale");
  rj->add_option("--iters", rj_iters, "Iterations");
  rj->add_option("--burn", rj_burn, "Burn-in fraction");
  rj->add_option("--sampler", rj_sampler, "mtm | mtm-adaptive | bd")->check(CLI::IsMember({"mtm", "mtm-adaptive", "bd"}));
  rj->add_option("--tries", rj_tries, "MTM tries");
  rj->add_option("--r-mean", rj_r_mean, "Jump distance mean (fixed direction)");
  rj->add_option("--r-sd", rj_r_sd, "Jump distance sd");
  rj->add_option("--oracle", rj_oracle, "none | enumerate")->check(CLI::IsMember({"none", "enumerate"}));
  rj->add_option("--out", rj_out, "Write the inclusion table CSV here");
  rj->add_option("--seed", rj_seed, "Seed");
  std::string rj_config;
  rj->add_option("--config", rj_config, "JSON file of option values; flags given on the command line win")
      ->check(CLI::ExistingFile);

  // surrogate-fit
  auto* sf = app.add_subcommand("surrogate-fit", "Fit a surrogate and save it as JSON");
  ModelFlags sf_model;
  sf_model.add(sf);
  std::string sf_how = "cavi", sf_out;
  long sf_draws = 4000;
  std::uint64_t sf_seed = 1;
  sf->add_option("--how", sf_how, "cavi | samples")->check(CLI::IsMember({"cavi", "samples"}));
  sf->add_option("--draws", sf_draws, "Target draws for the sample fit");
  sf->add_option("--out", sf_out, "Output JSON")->required();
  sf->add_option("--seed", sf_seed, "Seed");

  // audit
  auto* aud = app.add_subcommand("audit", "Recompute a benchmark's tables from its per-replicate records");
  std::string aud_dir;
  aud->add_option("--dir", aud_dir, "Benchmark output directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (gen_model == "lgcp") {
        const LgcpData d = lgcp_synthetic(gen_M, gen_seed);
        CsvTable t;
        t.header = {"x", "y"};
        for (const auto& [x, y] : lgcp_points_from_counts(d, gen_seed)) t.rows.push_back({x, y});
        write_csv(gen_out, t);
        std::cerr << "wrote " << t.rows.size() << " points\n";
      } else if (gen_model == "lasso") {
        save_regression_csv(gen_out, lasso_synthetic(gen_n, gen_p, gen_snr, gen_seed));
      } else if (gen_model == "logistic") {
        // Raw predictors are written; the interaction expansion happens at load time.
        Rng rng(gen_seed, 0);
        RegressionData d;
        d.X.resize(gen_n, gen_praw);
        for (int i = 0; i < gen_n; ++i) d.X.row(i) = rng.normal_vector(gen_praw).transpose();
        const Mat design = gen_inter ? interaction_expand(d.X) : d.X;
        const double s = std::sqrt(rng.exponential(gen_lambda_h));
        const double alpha = s * rng.normal();
        const Vec beta = s * rng.normal_vector(design.cols());
        d.y.resize(gen_n);
        for (int i = 0; i < gen_n; ++i) {
          const double eta = alpha + design.row(i).dot(beta);
          d.y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
        }
        save_regression_csv(gen_out, d);
      } else {
        save_regression_csv(gen_out, gprior_synthetic(gen_n, gen_p, gen_active, gen_seed));
      }
      return 0;
    }

    if (est->parsed()) {
      const ModelInstance model = build_model(est_model.spec());
      json cfg = parse_config_arg(est_config);
      if (est_iters) {
        if (est_method == "wl" || est_method == "awl") cfg["total_iters"] = *est_iters, cfg["burn_in"] = *est_iters / 2;
        else if (est_method == "is" || est_method == "chib") cfg["n"] = *est_iters;
        else if (est_method == "ss") cfg["per_rung"] = *est_iters;
        else if (est_method == "smc") cfg["n_particles"] = *est_iters;
        else if (est_method == "bridge") cfg["n_gamma"] = *est_iters / 2, cfg["n_q"] = *est_iters / 2;
        else if (est_method == "pwl") cfg["rung"]["total_iters"] = *est_iters, cfg["rung"]["burn_in"] = *est_iters / 2;
      }
      Rng rng(est_seed, 0);
      const MethodOutcome o = run_method(model, est_method, cfg, rng);
      json out = {{"model", model.label}, {"method", o.method}, {"ok", o.ok}, {"log_z", o.ok ? json(o.log_z) : json(nullptr)},
                  {"record", o.record}, {"model_summary", model.summary}};
      if (!o.ok) out["error"] = o.error;
      if (est_timing) out["wall_seconds"] = o.wall_seconds;
      std::cout << out.dump(2) << "\n";
      return o.ok ? 0 : 1;
    }

    if (bench->parsed()) {
      const fs::path cfg_path = bench_config;
      ExperimentConfig cfg = ExperimentConfig::from_json(read_json(cfg_path), cfg_path.parent_path());
      if (!bench_out.empty()) cfg.output_dir = bench_out;
      const ResultTable table = run_experiment(cfg, bench_workers);
      std::cout << table.to_csv();
      std::cerr << "wrote " << (cfg.output_dir / "results.csv").string() << "\n";
      return 0;
    }

    if (rj->parsed()) {
      if (!rj_config.empty()) {
        const fs::path cfg_path = rj_config;
        const json c = read_json(cfg_path);
        auto take = [&](const char* key, const char* flag, auto& dst) {
          if (c.contains(key) && rj->count(flag) == 0) c.at(key).get_to(dst);
        };
        auto take_path = [&](const char* key, const char* flag, std::string& dst) {
          if (c.contains(key) && rj->count(flag) == 0) dst = (cfg_path.parent_path() / c.at(key).get<std::string>()).string();
        };
        take("p", "--p", rj_p);
        take("n", "--n", rj_n);
        take("active", "--active", rj_active);
        take("data_seed", "--data-seed", rj_data_seed);
        take("g", "--g", rj_g);
        take("iters", "--iters", rj_iters);
        take("burn", "--burn", rj_burn);
        take("sampler", "--sampler", rj_sampler);
        take("tries", "--tries", rj_tries);
        take("r_mean", "--r-mean", rj_r_mean);
        take("r_sd", "--r-sd", rj_r_sd);
        take("oracle", "--oracle", rj_oracle);
        take("seed", "--seed", rj_seed);
        take_path("data", "--data", rj_data);
        take_path("out", "--out", rj_out);
        if (rj_sampler != "mtm" && rj_sampler != "mtm-adaptive" && rj_sampler != "bd")
          throw std::invalid_argument("unknown sampler " + rj_sampler);
        if (rj_oracle != "none" && rj_oracle != "enumerate") throw std::invalid_argument("unknown oracle " + rj_oracle);
      }
      RegressionData d = rj_data.empty() ? gprior_synthetic(rj_n, rj_p, rj_active, rj_data_seed) : load_regression_csv(rj_data);
      GPriorFamily fam(gprior_build(d.X, d.y, rj_g));
      TransDimConfig cfg = rj_sampler == "bd"             ? TransDimConfig::birth_death()
                           : rj_sampler == "mtm-adaptive" ? TransDimConfig::mtm_adaptive(rj_tries, rj_r_sd)
                                                          : TransDimConfig::mtm_fixed(rj_tries, rj_r_mean, rj_r_sd);
      Rng rng(rj_seed, 0);
      const ModelId start = fam.default_start();
      ChainState init{start, fam.mode(start, fam.default_shared()), fam.default_shared()};
      const ModelSelectionResult res = run_model_selection(fam, cfg, rj_iters, rj_burn, init, rng);
      std::optional<EnumerationResult> exact;
      if (rj_oracle == "enumerate") exact = gprior_enumerate(fam.model());
      CsvTable t;
      t.header = {"predictor", "probability", "mc_sd"};
      if (exact) t.header.push_back("exact");
      double max_err = 0.0;
      for (int j = 0; j < fam.model().p; ++j) {
        std::vector<double> row{static_cast<double>(j + 1), res.inclusion[j], res.inclusion_mc_sd[j]};
        if (exact) {
          row.push_back(exact->inclusion[j]);
          max_err = std::max(max_err, std::fabs(res.inclusion[j] - exact->inclusion[j]));
        }
        t.rows.push_back(row);
      }
      std::cout << "predictor,probability,mc_sd" << (exact ? ",exact" : "") << "\n";
      for (const auto& row : t.rows) {
        std::cout << static_cast<int>(row[0]);
        for (std::size_t k = 1; k < row.size(); ++k) std::cout << "," << format_sig(row[k], 6);
        std::cout << "\n";
      }
      if (exact) std::cout << "# max_abs_error " << format_sig(max_err, 6) << "\n";
      std::cout << "# expected_size " << format_sig(res.expected_size, 6) << "  trans_accept "
                << format_sig(res.trans_stats.accept_rate(), 4) << "\n";
      if (!rj_out.empty()) {
        write_csv(rj_out, t);
        json summary = res.to_json(fam);
        if (exact) summary["max_abs_error"] = max_err;
        write_json(fs::path(rj_out).replace_extension(".json"), summary);
      }
      return 0;
    }

    if (sf->parsed()) {
      const ModelInstance model = build_model(sf_model.spec());
      json out;
      if (sf_how == "cavi") {
        if (!model.target.cavi) std::cerr << "no closed-form updates for this model; using the numeric fallback\n";
        const Vec m0 = model.surrogate.mode.value_or(model.init);
        CaviOptions opt;
        opt.seed = sf_seed;
        const CaviResult fit = cavi_fit(model.target, MeanFieldGaussian{m0, Vec::Ones(m0.size())}, opt);
        out = surrogate_to_json(fit.surrogate);
        out["elbo_trace"] = fit.trace.values;
        out["closed_form"] = fit.trace.closed_form;
        out["warnings"] = fit.warnings;
      } else {
        Rng rng(sf_seed, 0);
        out = surrogate_to_json(fit_gaussian_from_samples(sample_target(model, sf_draws, sf_draws / 4, 1, rng)));
      }
      write_json(sf_out, out);
      return 0;
    }

    if (aud->parsed()) {
      const AuditReport r = audit_experiment(aud_dir);
      std::cout << r.to_json().dump(2) << "\n";
      return r.ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
