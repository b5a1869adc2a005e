#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gcr/error.hpp"
#include "gcr/fitter.hpp"
#include "gcr/stats.hpp"

namespace gcr {

// Symmetric numerical Hessian A(h) of the pseudo-log-likelihood in alpha,
// built from central differences of the score S2 with a per-coordinate step
// h_i = h_base * max(1, |alpha_i|).
inline Eigen::MatrixXd numerical_hessian(const DesignBundle& designs,
                                         const FamilySpec& family,
                                         const Eigen::VectorXd& beta,
                                         const Eigen::VectorXd& alpha, double phi,
                                         double h_base = 1e-5) {
  if (!(h_base > 0.0)) fail_data("hessian step must be positive");
  const int d = static_cast<int>(alpha.size());
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i) {
    const double h = h_base * std::max(1.0, std::fabs(alpha[i]));
    Eigen::VectorXd up = alpha, dn = alpha;
    up[i] += h;
    dn[i] -= h;
    a.col(i) = (pl_score_S2(designs, family, beta, up, phi) -
                pl_score_S2(designs, family, beta, dn, phi)) /
               (2.0 * h);
  }
  if (!a.allFinite())
    fail_numerical("numerical Hessian has non-finite entries; try a larger step h");
  return (a + a.transpose()) / 2.0;
}

// Asymptotic covariances: cov(beta) = H1^{-1} (model-based), and for alpha
// the sandwich A^{-1} H2_outer A^{-1} with A the numerical Hessian and
// H2_outer the empirical outer product of per-cluster scores.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> param_covariances(
    const DesignBundle& designs, const FamilySpec& family,
    const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha, double phi,
    double h_base = 1e-5) {
  const Eigen::MatrixXd h1 = gee_info_h1(designs, family, beta, alpha, phi);
  Eigen::LDLT<Eigen::MatrixXd> l1(h1);
  Eigen::VectorXd dd = l1.vectorD().cwiseAbs();
  if (l1.info() != Eigen::Success ||
      dd.minCoeff() <= 1e-14 * std::max(1.0, dd.maxCoeff()))
    fail_numerical("H1 is numerically singular (condition estimate " +
                   std::to_string(dd.maxCoeff() / std::max(dd.minCoeff(), 1e-300)) +
                   ")");
  Eigen::MatrixXd cov_beta =
      l1.solve(Eigen::MatrixXd::Identity(h1.rows(), h1.cols()));
  cov_beta = ((cov_beta + cov_beta.transpose()) / 2.0).eval();

  Eigen::MatrixXd cov_alpha(alpha.size(), alpha.size());
  if (alpha.size() > 0) {
    const Eigen::MatrixXd ahat =
        numerical_hessian(designs, family, beta, alpha, phi, h_base);
    const Eigen::MatrixXd h2o =
        pl_info_H2(designs, family, beta, alpha, phi, InfoMode::OuterProduct);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ahat);
    if (!lu.isInvertible())
      fail_numerical("numerical Hessian for alpha is singular");
    const Eigen::MatrixXd ainv =
        lu.solve(Eigen::MatrixXd::Identity(ahat.rows(), ahat.cols()));
    cov_alpha = ainv * h2o * ainv.transpose();
    cov_alpha = ((cov_alpha + cov_alpha.transpose()) / 2.0).eval();
  }
  return {cov_beta, cov_alpha};
}

struct WaldRow {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  std::string stars;
};

inline std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.1) return ".";
  return "";
}

// Wald z-tests against the standard normal reference.
inline std::vector<WaldRow> wald_table(const std::vector<std::string>& names,
                                       const Eigen::VectorXd& estimates,
                                       const Eigen::MatrixXd& cov) {
  const int k = static_cast<int>(estimates.size());
  if (static_cast<int>(names.size()) != k || cov.rows() != k || cov.cols() != k)
    fail_data("wald_table shape mismatch");
  std::vector<WaldRow> rows;
  rows.reserve(k);
  for (int i = 0; i < k; ++i) {
    const double var = cov(i, i);
    if (!(var > 0.0))
      fail_numerical("nonpositive variance for parameter '" + names[i] + "'");
    WaldRow row;
    row.name = names[i];
    row.estimate = estimates[i];
    row.std_error = std::sqrt(var);
    row.z = estimates[i] / row.std_error;
    row.p_value = std::erfc(std::fabs(row.z) / kSqrt2);
    row.stars = significance_stars(row.p_value);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gcr
