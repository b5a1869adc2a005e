// gcr: fit generalized correlation regression models, simulate correlated
// data, run residual diagnostics and cross-validate predictions.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "gcr/artifacts.hpp"
#include "gcr/gcr.hpp"
#include "gcr/threading.hpp"

namespace {

using gcr::json;

struct FitFlags {
  std::string data_path, cluster_col, response_col, order_col;
  std::string family = "gaussian";
  std::string mean_formula;
  std::string corr_formula = "intercept";
  std::string out_path = "fit.json";
  double step = 0.5;
  double tol = 1e-8;
  int max_outer = 100;
  int max_inner = 50;
  bool freeze_alpha = false;
  bool no_backtracking = false;
  std::uint64_t seed = 0;
  int threads = 0;
};

void print_wald(const std::string& title, const std::vector<gcr::WaldRow>& rows) {
  std::printf("%s\n", title.c_str());
  std::printf("  %-28s %12s %12s %9s %11s\n", "parameter", "estimate",
              "std.error", "z", "p");
  for (const auto& r : rows)
    std::printf("  %-28s %12.6f %12.6f %9.3f %11.4g %s\n", r.name.c_str(),
                r.estimate, r.std_error, r.z, r.p_value, r.stars.c_str());
}

std::map<std::string, std::string> manifest_args(
    std::initializer_list<std::pair<std::string, std::string>> kv) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : kv) out.emplace(k, v);
  return out;
}

int run_fit(const FitFlags& flags) {
  const auto data = gcr::load_csv(flags.data_path, flags.cluster_col,
                                  flags.response_col, flags.order_col);
  const auto mf = gcr::MeanFormula::parse(flags.mean_formula);
  const auto cf = gcr::CorrFormula::parse(flags.corr_formula);
  const auto family = gcr::FamilySpec::from_name(flags.family);

  gcr::FitConfig config;
  config.step_lambda = flags.step;
  config.tol_outer = flags.tol;
  config.tol_inner = flags.tol;
  config.outer_max = flags.max_outer;
  config.inner_max = flags.max_inner;
  config.freeze_alpha = flags.freeze_alpha;
  config.backtracking = !flags.no_backtracking;

  const auto designs = gcr::build_designs(data, mf, cf);
  const auto fit = gcr::fit_gcr(designs, family, config);

  json out;
  out["schema_version"] = gcr::kSchemaVersion;
  out["manifest"] = gcr::make_manifest(
      "fit",
      manifest_args({{"data", flags.data_path},
                     {"cluster", flags.cluster_col},
                     {"response", flags.response_col},
                     {"order", flags.order_col},
                     {"family", flags.family},
                     {"mean", flags.mean_formula},
                     {"corr", flags.corr_formula},
                     {"step", std::to_string(flags.step)},
                     {"tol", std::to_string(flags.tol)},
                     {"freeze_alpha", flags.freeze_alpha ? "true" : "false"}}),
      flags.seed, flags.data_path);
  out["family"] = flags.family;
  out["mean_formula"] = flags.mean_formula;
  out["corr_formula"] = flags.corr_formula;
  out["cluster_col"] = flags.cluster_col;
  out["response_col"] = flags.response_col;
  out["order_col"] = flags.order_col;
  out["converged"] = fit.converged;
  out["outer_iters"] = fit.outer_iters;
  out["alpha_frozen"] = fit.alpha_frozen;
  out["phi"] = fit.phi;
  out["phi_known"] = family.dispersion_known;
  out["n_clusters"] = designs.n_clusters();
  out["n_obs"] = designs.n_obs();
  out["pl_trace"] = fit.pl_trace;
  out["warnings"] = fit.warnings;

  std::vector<gcr::WaldRow> beta_rows, alpha_rows;
  bool inference_ok = true;
  std::string inference_error;
  try {
    const auto [cov_beta, cov_alpha] = gcr::param_covariances(
        designs, family, fit.beta, fit.alpha, fit.phi);
    beta_rows = gcr::wald_table(fit.beta_names, fit.beta, cov_beta);
    if (!fit.alpha_frozen)
      alpha_rows = gcr::wald_table(fit.alpha_names, fit.alpha, cov_alpha);
  } catch (const std::exception& e) {
    inference_ok = false;
    inference_error = e.what();
  }
  if (!inference_ok && fit.converged)
    gcr::fail_numerical("inference failed: " + inference_error);

  auto bare_table = [](const std::vector<std::string>& names,
                       const Eigen::VectorXd& est) {
    json t;
    t["names"] = names;
    t["estimate"] = gcr::vector_to_json(est);
    return t;
  };
  out["beta"] = beta_rows.empty() ? bare_table(fit.beta_names, fit.beta)
                                  : gcr::wald_to_json(beta_rows);
  out["alpha"] = alpha_rows.empty() ? bare_table(fit.alpha_names, fit.alpha)
                                    : gcr::wald_to_json(alpha_rows);
  if (!inference_ok) out["warnings"].push_back("inference failed: " + inference_error);
  gcr::write_json_file(out, flags.out_path);

  std::printf("family: %s   clusters: %d   observations: %zu\n", flags.family.c_str(),
              designs.n_clusters(), designs.n_obs());
  std::printf("converged: %s   outer iterations: %d   phi: %.6f%s\n",
              fit.converged ? "yes" : "no", fit.outer_iters, fit.phi,
              family.dispersion_known ? " (known)" : "");
  if (!beta_rows.empty()) print_wald("mean model (beta)", beta_rows);
  if (!alpha_rows.empty()) print_wald("correlation model (alpha)", alpha_rows);
  if (fit.alpha_frozen)
    std::printf("alpha frozen at 0 (independence working correlation)\n");
  std::printf("wrote %s\n", flags.out_path.c_str());

  if (!fit.converged) {
    std::fprintf(stderr,
                 "{\"error\":{\"category\":\"nonconvergence\",\"message\":"
                 "\"fit did not converge in %d outer iterations\"}}\n",
                 flags.max_outer);
    return 3;
  }
  return 0;
}

int run_simulate(const std::string& scenario, int n, std::uint64_t seed,
                 const std::string& out_csv, const std::string& out_truth) {
  gcr::ScenarioSpec spec;
  spec.study = gcr::ScenarioSpec::study_from_name(scenario);
  spec.n_clusters = n;
  spec.seed = seed;
  const auto gen = gcr::make_scenario(spec);
  gcr::write_scenario_csv(gen, out_csv);

  json truth;
  truth["schema_version"] = gcr::kSchemaVersion;
  truth["manifest"] = gcr::make_manifest(
      "simulate",
      manifest_args({{"scenario", scenario},
                     {"n", std::to_string(n)},
                     {"out", out_csv}}),
      seed, "");
  truth["scenario"] = scenario;
  truth["family"] = gen.family;
  truth["phi0"] = gen.phi0;
  truth["beta0"] = gcr::vector_to_json(gen.beta0);
  if (gen.alpha0.size() > 0) truth["alpha0"] = gcr::vector_to_json(gen.alpha0);
  else truth["corr_rule"] = gen.corr_rule;
  truth["mean_formula"] = gen.mean_formula;
  truth["corr_formula"] = gen.corr_formula;
  truth["cluster_col"] = "cluster";
  truth["response_col"] = "y";
  truth["retries"] = gen.retries;
  json clusters = json::array();
  for (int i = 0; i < gen.dataset.n_clusters(); ++i) {
    json c;
    c["id"] = gen.dataset.cluster_id(i);
    c["m"] = gen.dataset.cluster_size(i);
    c["mu0"] = gcr::vector_to_json(gen.mu0[i]);
    c["sigma0"] = gcr::matrix_to_json(gen.sigma0[i]);
    clusters.push_back(std::move(c));
  }
  truth["clusters"] = std::move(clusters);
  if (!out_truth.empty()) gcr::write_json_file(truth, out_truth);

  std::printf("scenario %s: %d clusters, %zu observations (%lld resampled draws)\n",
              scenario.c_str(), gen.dataset.n_clusters(), gen.dataset.n_obs(),
              gen.retries);
  std::printf("wrote %s%s%s\n", out_csv.c_str(),
              out_truth.empty() ? "" : " and ", out_truth.c_str());
  return 0;
}

int run_diagnose(const std::string& fit_path, const std::string& data_path,
                 const std::vector<std::string>& subgroups, std::uint64_t seed,
                 const std::string& out_path) {
  const json fit_json = gcr::read_json_file(fit_path);
  const auto art = gcr::fit_artifact_from_json(fit_json);
  const auto data =
      gcr::load_csv(data_path, art.cluster_col, art.response_col, art.order_col);
  const auto mf = gcr::MeanFormula::parse(art.mean_formula);
  const auto cf = gcr::CorrFormula::parse(art.corr_formula);
  const auto family = gcr::FamilySpec::from_name(art.family);
  const auto designs = gcr::build_designs(data, mf, cf);
  const auto residuals =
      gcr::standardized_residuals(designs, family, art.beta, art.alpha, art.phi);

  json out;
  out["schema_version"] = gcr::kSchemaVersion;
  out["manifest"] = gcr::make_manifest(
      "diagnose", manifest_args({{"fit", fit_path}, {"data", data_path}}), seed,
      data_path);
  json rows = json::array();
  std::printf("  %-36s %12s %12s %9s %11s\n", "subgroup", "rho_hat", "n_pairs",
              "t", "p");
  for (const auto& text : subgroups) {
    const auto spec = gcr::SubgroupSpec::parse(text);
    const auto res = gcr::subgroup_empirical_corr(residuals, data, spec, seed);
    json r;
    r["subgroup"] = res.name;
    r["rho_hat"] = res.rho_hat;
    r["n_pairs"] = res.n_pairs;
    r["subsampled"] = res.subsampled;
    if (res.p_defined) {
      r["t"] = res.t_stat;
      r["p_value"] = res.p_value;
    } else {
      r["t"] = nullptr;
      r["p_value"] = nullptr;
    }
    rows.push_back(std::move(r));
    if (res.p_defined)
      std::printf("  %-36s %12.5f %12lld %9.3f %11.4g%s\n", res.name.c_str(),
                  res.rho_hat, res.n_pairs, res.t_stat, res.p_value,
                  res.subsampled ? " (subsampled)" : "");
    else
      std::printf("  %-36s %12.5f %12lld %9s %11s\n", res.name.c_str(),
                  res.rho_hat, res.n_pairs, "--", "n/a");
  }
  out["subgroups"] = std::move(rows);
  if (!out_path.empty()) {
    gcr::write_json_file(out, out_path);
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

struct CvFlags {
  std::string data_path, cluster_col, response_col, order_col;
  std::string family = "bernoulli";
  std::string mean_formula;
  std::string corr_formula = "intercept";
  std::string stratify;
  std::string out_path = "cv.json";
  int folds = 5;
  int repeats = 15;
  std::uint64_t seed = 0;
  int threads = 0;
};

int run_cv(const CvFlags& flags) {
  const auto data = gcr::load_csv(flags.data_path, flags.cluster_col,
                                  flags.response_col, flags.order_col);
  const auto mf = gcr::MeanFormula::parse(flags.mean_formula);
  const auto cf = gcr::CorrFormula::parse(flags.corr_formula);
  const auto family = gcr::FamilySpec::from_name(flags.family);
  gcr::CVConfig cvcfg;
  cvcfg.folds = flags.folds;
  cvcfg.repeats = flags.repeats;
  cvcfg.stratify_col = flags.stratify;
  cvcfg.seed = flags.seed;
  const int threads = flags.threads > 0 ? flags.threads : gcr::default_threads();
  const auto report =
      gcr::repeated_cv(data, mf, cf, family, cvcfg, gcr::FitConfig{}, threads);

  json out;
  out["schema_version"] = gcr::kSchemaVersion;
  out["manifest"] = gcr::make_manifest(
      "cv",
      manifest_args({{"data", flags.data_path},
                     {"family", flags.family},
                     {"mean", flags.mean_formula},
                     {"corr", flags.corr_formula},
                     {"folds", std::to_string(flags.folds)},
                     {"repeats", std::to_string(flags.repeats)},
                     {"stratify", flags.stratify}}),
      flags.seed, flags.data_path);
  out["folds"] = flags.folds;
  out["repeats"] = flags.repeats;
  out["failed_folds"] = report.failed_folds;
  json folds = json::array();
  for (const auto& s : report.folds) {
    json f;
    f["repeat"] = s.repeat;
    f["fold"] = s.fold;
    f["n_test"] = s.n_test;
    f["failed"] = s.failed;
    if (s.failed) f["error"] = s.error;
    f["brier"] = s.brier;
    if (std::isfinite(s.logloss)) f["log_loss"] = s.logloss;
    else f["log_loss"] = nullptr;
    f["mae"] = s.mae;
    folds.push_back(std::move(f));
  }
  out["fold_scores"] = std::move(folds);
  out["repeat_brier"] = report.repeat_brier;
  out["repeat_mae"] = report.repeat_mae;
  json rl = json::array();
  for (double v : report.repeat_logloss)
    rl.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  out["repeat_log_loss"] = std::move(rl);
  out["cv_brier"] = report.cv_brier;
  out["cv_log_loss"] = std::isfinite(report.cv_logloss) ? json(report.cv_logloss)
                                                        : json(nullptr);
  out["cv_mae"] = report.cv_mae;
  gcr::write_json_file(out, flags.out_path);

  std::printf("CV over %d folds x %d repeats (%d failed folds)\n", flags.folds,
              flags.repeats, report.failed_folds);
  std::printf("  CV1 (Brier/MSE): %.6f\n", report.cv_brier);
  if (std::isfinite(report.cv_logloss))
    std::printf("  CV2 (Log Loss) : %.6f\n", report.cv_logloss);
  std::printf("  MAE            : %.6f\n", report.cv_mae);
  std::printf("wrote %s\n", flags.out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generalized correlation regression toolkit"};
  app.require_subcommand(1);

  FitFlags fit;
  auto* cmd_fit = app.add_subcommand("fit", "fit a model to clustered data");
  cmd_fit->add_option("--data", fit.data_path, "input CSV")->required();
  cmd_fit->add_option("--cluster", fit.cluster_col, "cluster id column")->required();
  cmd_fit->add_option("--response", fit.response_col, "response column")->required();
  cmd_fit->add_option("--order", fit.order_col, "within-cluster ordering column");
  cmd_fit->add_option("--family", fit.family, "gaussian|poisson|bernoulli|gamma");
  cmd_fit->add_option("--mean", fit.mean_formula, "mean-model formula");
  cmd_fit->add_option("--corr", fit.corr_formula, "pair-covariate formula");
  cmd_fit->add_option("--step", fit.step, "scoring step size in (0,1]");
  cmd_fit->add_option("--tol", fit.tol, "convergence tolerance");
  cmd_fit->add_option("--max-outer", fit.max_outer, "outer iteration limit");
  cmd_fit->add_option("--max-inner", fit.max_inner, "inner iteration limit");
  cmd_fit->add_flag("--freeze-alpha", fit.freeze_alpha,
                    "keep alpha at 0 (independence working correlation)");
  cmd_fit->add_flag("--no-backtracking", fit.no_backtracking,
                    "disable step halving on the pseudo-likelihood");
  cmd_fit->add_option("--seed", fit.seed, "seed recorded in the manifest");
  cmd_fit->add_option("--threads", fit.threads, "worker thread bound");
  cmd_fit->add_option("--out", fit.out_path, "output JSON path");

  std::string sim_scenario;
  int sim_n = 100;
  std::uint64_t sim_seed = 0;
  std::string sim_out = "data.csv", sim_truth;
  auto* cmd_sim = app.add_subcommand("simulate", "generate a preset scenario");
  cmd_sim->add_option("--scenario", sim_scenario,
                      "study1_gaussian|study1_poisson|study1_bernoulli|"
                      "study2_case1..study2_case4")
      ->required();
  cmd_sim->add_option("--n", sim_n, "number of clusters")->required();
  cmd_sim->add_option("--seed", sim_seed, "generator seed");
  cmd_sim->add_option("--out", sim_out, "output CSV path");
  cmd_sim->add_option("--truth", sim_truth, "ground-truth JSON path");

  std::string diag_fit, diag_data, diag_out;
  std::vector<std::string> diag_subgroups;
  std::uint64_t diag_seed = 0;
  auto* cmd_diag = app.add_subcommand("diagnose", "subgroup residual correlations");
  cmd_diag->add_option("--fit", diag_fit, "fit JSON from `gcr fit`")->required();
  cmd_diag->add_option("--data", diag_data, "input CSV")->required();
  cmd_diag->add_option("--subgroup", diag_subgroups,
                       "subgroup spec, e.g. \"within:same(mom)\"")
      ->required();
  cmd_diag->add_option("--seed", diag_seed, "seed for pair subsampling");
  cmd_diag->add_option("--out", diag_out, "output JSON path");

  CvFlags cv;
  auto* cmd_cv = app.add_subcommand("cv", "repeated k-fold cross-validation");
  cmd_cv->add_option("--data", cv.data_path, "input CSV")->required();
  cmd_cv->add_option("--cluster", cv.cluster_col, "cluster id column")->required();
  cmd_cv->add_option("--response", cv.response_col, "response column")->required();
  cmd_cv->add_option("--order", cv.order_col, "within-cluster ordering column");
  cmd_cv->add_option("--family", cv.family, "gaussian|poisson|bernoulli|gamma");
  cmd_cv->add_option("--mean", cv.mean_formula, "mean-model formula");
  cmd_cv->add_option("--corr", cv.corr_formula, "pair-covariate formula");
  cmd_cv->add_option("--folds", cv.folds, "number of folds");
  cmd_cv->add_option("--repeats", cv.repeats, "number of repeats");
  cmd_cv->add_option("--stratify", cv.stratify, "cluster-level stratification column");
  cmd_cv->add_option("--seed", cv.seed, "fold assignment seed");
  cmd_cv->add_option("--threads", cv.threads, "worker thread bound");
  cmd_cv->add_option("--out", cv.out_path, "output JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    std::fprintf(stderr, "{\"error\":{\"category\":\"usage\",\"message\":\"%s\"}}\n",
                 e.what());
    return 1;
  }

  try {
    if (cmd_fit->parsed()) return run_fit(fit);
    if (cmd_sim->parsed())
      return run_simulate(sim_scenario, sim_n, sim_seed, sim_out, sim_truth);
    if (cmd_diag->parsed())
      return run_diagnose(diag_fit, diag_data, diag_subgroups, diag_seed, diag_out);
    if (cmd_cv->parsed()) return run_cv(cv);
  } catch (const gcr::Error& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '"' || c == '\n') c = '\'';
    std::fprintf(stderr, "{\"error\":{\"category\":\"%s\",\"message\":\"%s\"}}\n",
                 e.category(), msg.c_str());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '"' || c == '\n') c = '\'';
    std::fprintf(stderr,
                 "{\"error\":{\"category\":\"numerical\",\"message\":\"%s\"}}\n",
                 msg.c_str());
    return 4;
  }
  return 1;
}
