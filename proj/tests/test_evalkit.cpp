#include <catch2/catch_amalgamated.hpp>

#include "gcr/evalkit.hpp"
#include "gcr/simgen.hpp"

using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("brier score hand checks") {
  CHECK(gcr::brier_score((VectorXd(2) << 1, 0).finished(),
                         (VectorXd(2) << 1, 0).finished()) == 0.0);
  CHECK(gcr::brier_score((VectorXd(2) << 1, 1).finished(),
                         (VectorXd(2) << 0.5, 0.5).finished()) == Approx(0.25));
  CHECK(gcr::brier_score((VectorXd(3) << 1, 0, 1).finished(),
                         (VectorXd(3) << 0.8, 0.3, 0.6).finished()) ==
        Approx((0.04 + 0.09 + 0.16) / 3));
  CHECK_THROWS_AS(gcr::brier_score(VectorXd::Zero(2), VectorXd::Zero(3)), gcr::Error);
}

TEST_CASE("log loss hand checks") {
  CHECK(gcr::log_loss((VectorXd(1) << 1).finished(),
                      (VectorXd(1) << 0.5).finished()) == Approx(std::log(2.0)));
  CHECK(gcr::log_loss((VectorXd(2) << 1, 0).finished(),
                      (VectorXd(2) << 0.9, 0.2).finished()) ==
        Approx(-(std::log(0.9) + std::log(0.8)) / 2));
  // exact predictions clip to the floor
  CHECK(gcr::log_loss((VectorXd(2) << 1, 0).finished(),
                      (VectorXd(2) << 1.0, 0.0).finished()) ==
        Approx(0.0).margin(1e-10));
}

TEST_CASE("mae hand checks") {
  CHECK(gcr::mae_counts((VectorXd(2) << 0, 2).finished(),
                        (VectorXd(2) << 1, 1).finished()) == Approx(1.0));
  CHECK(gcr::mae_counts((VectorXd(3) << 5, 0, 3).finished(),
                        (VectorXd(3) << 4.5, 1, 3).finished()) == Approx(0.5));
}

TEST_CASE("mmd and mcd") {
  std::vector<VectorXd> mu_hat{(VectorXd(2) << 3, 4).finished()};
  std::vector<VectorXd> mu0{VectorXd::Zero(2)};
  std::vector<MatrixXd> sig_hat{(MatrixXd(2, 2) << 3, 0, 0, 4).finished()};
  std::vector<MatrixXd> sig0{MatrixXd::Zero(2, 2)};
  const auto [mmd, mcd] = gcr::mmd_mcd(mu_hat, mu0, sig_hat, sig0);
  CHECK(mmd == Approx(5.0));
  CHECK(mcd == Approx(5.0));
  const auto [z1, z2] = gcr::mmd_mcd(mu0, mu0, sig0, sig0);
  CHECK(z1 == 0.0);
  CHECK(z2 == 0.0);
}

TEST_CASE("repeated cv: partition validity, determinism and fold count") {
  gcr::ScenarioSpec spec;
  spec.study = gcr::Study::Study2Case1;
  spec.n_clusters = 40;
  spec.seed = 5;
  const auto gen = gcr::make_scenario(spec);
  const auto family = gcr::FamilySpec::from_name("bernoulli");
  const auto mf = gcr::MeanFormula::parse(gen.mean_formula);
  const auto cf = gcr::CorrFormula::parse(gen.corr_formula);

  gcr::CVConfig cfg;
  cfg.folds = 5;
  cfg.repeats = 3;
  cfg.seed = 1;
  const auto rep = gcr::repeated_cv(gen.dataset, mf, cf, family, cfg, {}, 2);
  CHECK(rep.folds.size() == 15);
  CHECK(rep.failed_folds == 0);
  size_t held_out = 0;
  for (const auto& f : rep.folds)
    if (f.repeat == 0) held_out += f.n_test;
  CHECK(held_out == gen.dataset.n_obs());
  for (const auto& f : rep.folds) {
    CHECK(f.brier >= 0.0);
    CHECK(f.brier <= 1.0);
    CHECK(f.logloss >= 0.0);
  }
  // deterministic under the same seed, including thread count changes
  const auto rep2 = gcr::repeated_cv(gen.dataset, mf, cf, family, cfg, {}, 1);
  for (size_t i = 0; i < rep.folds.size(); ++i) {
    CHECK(rep.folds[i].brier == rep2.folds[i].brier);
    CHECK(rep.folds[i].logloss == rep2.folds[i].logloss);
  }
  CHECK(rep.cv_brier == rep2.cv_brier);

  // per-repeat means average the fold scores exactly
  for (int r = 0; r < 3; ++r) {
    double s = 0;
    for (int f = 0; f < 5; ++f) s += rep.folds[r * 5 + f].brier;
    CHECK(rep.repeat_brier[r] == Approx(s / 5).margin(1e-12));
  }
}

TEST_CASE("cv stratification keeps strata proportions per fold") {
  gcr::ScenarioSpec spec;
  spec.study = gcr::Study::Study2Case1;
  spec.n_clusters = 30;
  spec.seed = 9;
  const auto gen = gcr::make_scenario(spec);
  // stratify by a cluster-level split derived from cluster parity
  std::vector<std::string> cl;
  std::vector<double> y;
  gcr::Column x, grp;
  for (int i = 0; i < gen.dataset.n_clusters(); ++i) {
    const auto [b, e] = gen.dataset.span(i);
    for (size_t r = b; r < e; ++r) {
      cl.push_back(gen.dataset.cluster_id(i));
      y.push_back(gen.dataset.response(r));
      x.raw.push_back(gen.dataset.column("x1").raw[r]);
      grp.raw.push_back(i % 2 ? "t" : "c");
    }
  }
  auto data = gcr::ClusteredDataset::from_rows(cl, y, {{"x1", x}, {"grp", grp}});
  gcr::CVConfig cfg;
  cfg.folds = 5;
  cfg.repeats = 2;
  cfg.seed = 4;
  cfg.stratify_col = "grp";
  const auto rep = gcr::repeated_cv(data, gcr::MeanFormula::parse("x1"),
                                    gcr::CorrFormula::parse("intercept"),
                                    gcr::FamilySpec::from_name("bernoulli"), cfg);
  CHECK(rep.folds.size() == 10);
  CHECK(rep.failed_folds == 0);
}

TEST_CASE("richer correlation formula wins the paired CV comparison") {
  gcr::ScenarioSpec spec;
  spec.study = gcr::Study::Study2Case2;
  spec.n_clusters = 120;
  spec.seed = 42;
  const auto gen = gcr::make_scenario(spec);
  gcr::CVConfig cfg;
  cfg.folds = 5;
  cfg.repeats = 15;
  cfg.seed = 294;
  const auto mf = gcr::MeanFormula::parse(gen.mean_formula);
  const auto family = gcr::FamilySpec::from_name("bernoulli");
  const auto rich = gcr::repeated_cv(
      gen.dataset, mf, gcr::CorrFormula::parse(gen.corr_formula), family, cfg, {}, 2);
  const auto flat = gcr::repeated_cv(
      gen.dataset, mf, gcr::CorrFormula::parse("intercept"), family, cfg, {}, 2);
  CHECK(rich.cv_brier < flat.cv_brier);
  // the per-repeat vectors support a paired comparison downstream
  double mean_diff = 0.0;
  for (int r = 0; r < cfg.repeats; ++r)
    mean_diff += rich.repeat_brier[r] - flat.repeat_brier[r];
  mean_diff /= cfg.repeats;
  CHECK(mean_diff == Approx(rich.cv_brier - flat.cv_brier).margin(1e-12));
}

TEST_CASE("cv validation errors") {
  gcr::CVConfig cfg;
  cfg.folds = 1;
  CHECK_THROWS_AS(cfg.validate(), gcr::Error);
  cfg = {};
  cfg.repeats = 0;
  CHECK_THROWS_AS(cfg.validate(), gcr::Error);
}
