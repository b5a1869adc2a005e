#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "gcr/error.hpp"
#include "gcr/fitter.hpp"
#include "gcr/rng.hpp"
#include "gcr/threading.hpp"

namespace gcr {

inline double brier_score(const Eigen::VectorXd& y, const Eigen::VectorXd& p) {
  if (y.size() != p.size()) fail_data("brier_score length mismatch");
  if (y.size() == 0) fail_data("brier_score needs observations");
  return (y - p).squaredNorm() / static_cast<double>(y.size());
}

inline double log_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& p) {
  if (y.size() != p.size()) fail_data("log_loss length mismatch");
  if (y.size() == 0) fail_data("log_loss needs observations");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double pc = std::clamp(p[i], 1e-12, 1.0 - 1e-12);
    total += y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
  }
  return -total / static_cast<double>(y.size());
}

inline double mae_counts(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) fail_data("mae length mismatch");
  if (y.size() == 0) fail_data("mae needs observations");
  return (y - yhat).cwiseAbs().sum() / static_cast<double>(y.size());
}

// Mean l2 deviation of cluster means and mean Frobenius deviation of cluster
// covariances from ground truth.
inline std::pair<double, double> mmd_mcd(
    const std::vector<Eigen::VectorXd>& mu_hat,
    const std::vector<Eigen::VectorXd>& mu0,
    const std::vector<Eigen::MatrixXd>& sigma_hat,
    const std::vector<Eigen::MatrixXd>& sigma0) {
  const size_t n = mu_hat.size();
  if (mu0.size() != n || sigma_hat.size() != n || sigma0.size() != n)
    fail_data("mmd_mcd cluster count mismatch");
  double mmd = 0.0, mcd = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (mu_hat[i].size() != mu0[i].size() ||
        sigma_hat[i].rows() != sigma0[i].rows())
      fail_data("mmd_mcd shape mismatch at cluster " + std::to_string(i));
    mmd += (mu_hat[i] - mu0[i]).norm();
    mcd += (sigma_hat[i] - sigma0[i]).norm();
  }
  return {mmd / static_cast<double>(n), mcd / static_cast<double>(n)};
}

struct CVConfig {
  int folds = 5;
  int repeats = 15;
  std::string stratify_col;
  std::uint64_t seed = 0;

  void validate() const {
    if (folds < 2) fail_data("cross-validation needs at least 2 folds");
    if (repeats < 1) fail_data("cross-validation needs at least 1 repeat");
  }
};

struct FoldScore {
  int repeat = 0;
  int fold = 0;
  double brier = std::numeric_limits<double>::quiet_NaN();
  double logloss = std::numeric_limits<double>::quiet_NaN();
  double mae = std::numeric_limits<double>::quiet_NaN();
  size_t n_test = 0;
  bool failed = false;
  std::string error;
};

struct MetricReport {
  std::vector<FoldScore> folds;  // ordered by (repeat, fold)
  std::vector<double> repeat_brier, repeat_logloss, repeat_mae;
  double cv_brier = 0.0, cv_logloss = 0.0, cv_mae = 0.0;
  int failed_folds = 0;
};

namespace detail {

// Cluster-atomic fold assignment: clusters are stratified by the (first-row)
// value of the stratification column, shuffled within each stratum by the
// repeat's substream, and dealt round-robin into folds.
inline std::vector<int> fold_of_cluster(const ClusteredDataset& data,
                                        const CVConfig& cfg, int repeat) {
  const int nc = data.n_clusters();
  std::map<std::string, std::vector<int>> strata;
  for (int i = 0; i < nc; ++i) {
    std::string key;
    if (!cfg.stratify_col.empty()) {
      const Column& col = data.column(cfg.stratify_col);
      key = detail::trim(col.raw[data.span(i).first]);
    }
    strata[key].push_back(i);
  }
  Philox rng(cfg.seed, static_cast<std::uint64_t>(repeat) + 1);
  std::vector<int> fold(nc, 0);
  for (auto& [key, members] : strata) {
    for (size_t j = members.size(); j > 1; --j) {
      const auto pick = static_cast<size_t>(rng.uniform() * j);
      std::swap(members[j - 1], members[std::min(pick, j - 1)]);
    }
    for (size_t j = 0; j < members.size(); ++j)
      fold[members[j]] = static_cast<int>(j % cfg.folds);
  }
  return fold;
}

}  // namespace detail

// Repeated stratified k-fold cross-validation with cluster-atomic folds.
// Predictions are the marginal means mu(x' beta_hat) from the training fit;
// metrics are computed on the held-out observations. The Brier column is the
// mean squared error on the response scale (the Brier score proper for
// Bernoulli responses); log loss is reported for Bernoulli only.
inline MetricReport repeated_cv(const ClusteredDataset& data,
                                const MeanFormula& mf, const CorrFormula& cf,
                                const FamilySpec& family, const CVConfig& cvcfg,
                                const FitConfig& fitcfg = {}, int n_threads = 1) {
  cvcfg.validate();
  const DesignBundle designs = build_designs(data, mf, cf);
  if (data.n_clusters() < cvcfg.folds)
    fail_data("fewer clusters than folds");

  std::vector<std::vector<int>> folds_by_repeat(cvcfg.repeats);
  for (int r = 0; r < cvcfg.repeats; ++r)
    folds_by_repeat[r] = detail::fold_of_cluster(data, cvcfg, r);

  MetricReport report;
  report.folds.resize(static_cast<size_t>(cvcfg.repeats) * cvcfg.folds);

  parallel_for(
      cvcfg.repeats * cvcfg.folds, n_threads, [&](int task) {
        const int r = task / cvcfg.folds;
        const int f = task % cvcfg.folds;
        FoldScore score;
        score.repeat = r;
        score.fold = f;
        const auto& fold = folds_by_repeat[r];
        std::vector<int> train, test;
        for (int i = 0; i < data.n_clusters(); ++i)
          (fold[i] == f ? test : train).push_back(i);
        try {
          if (test.empty()) fail_data("empty test fold");
          const DesignBundle train_designs = designs.subset(train);
          const FitResult fit = fit_gcr(train_designs, family, fitcfg);
          std::vector<double> yv, pv;
          for (int i : test) {
            const Eigen::VectorXd eta = designs.x[i] * fit.beta;
            for (Eigen::Index j = 0; j < eta.size(); ++j) {
              yv.push_back(designs.y[i][j]);
              pv.push_back(family_moments(family, eta[j], fit.phi).mu);
            }
          }
          Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(yv.data(), yv.size());
          Eigen::VectorXd p = Eigen::Map<Eigen::VectorXd>(pv.data(), pv.size());
          score.n_test = yv.size();
          score.brier = brier_score(y, p);
          if (family.family == Family::Bernoulli) score.logloss = log_loss(y, p);
          score.mae = mae_counts(y, p);
        } catch (const std::exception& e) {
          score.failed = true;
          score.error = e.what();
        }
        report.folds[task] = std::move(score);
      });

  report.repeat_brier.resize(cvcfg.repeats, std::numeric_limits<double>::quiet_NaN());
  report.repeat_logloss.resize(cvcfg.repeats, std::numeric_limits<double>::quiet_NaN());
  report.repeat_mae.resize(cvcfg.repeats, std::numeric_limits<double>::quiet_NaN());
  const bool binary = family.family == Family::Bernoulli;
  for (int r = 0; r < cvcfg.repeats; ++r) {
    double sb = 0.0, sl = 0.0, sm = 0.0;
    int ok = 0;
    for (int f = 0; f < cvcfg.folds; ++f) {
      const FoldScore& s = report.folds[r * cvcfg.folds + f];
      if (s.failed) {
        ++report.failed_folds;
        continue;
      }
      sb += s.brier;
      sm += s.mae;
      if (binary) sl += s.logloss;
      ++ok;
    }
    if (ok > 0) {
      report.repeat_brier[r] = sb / ok;
      report.repeat_mae[r] = sm / ok;
      if (binary) report.repeat_logloss[r] = sl / ok;
    }
  }
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    int n = 0;
    for (double x : v)
      if (std::isfinite(x)) { s += x; ++n; }
    return n > 0 ? s / n : std::numeric_limits<double>::quiet_NaN();
  };
  report.cv_brier = mean_of(report.repeat_brier);
  report.cv_logloss = binary ? mean_of(report.repeat_logloss)
                             : std::numeric_limits<double>::quiet_NaN();
  report.cv_mae = mean_of(report.repeat_mae);
  return report;
}

}  // namespace gcr
