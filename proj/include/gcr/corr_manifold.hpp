#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <string>

#include "gcr/error.hpp"
#include "gcr/vecl.hpp"

namespace gcr {

inline constexpr double kSymTol = 1e-12;
inline constexpr double kPdTol = 1e-12;
inline constexpr double kEigDegenTol = 1e-10;
inline constexpr double kFixedPointTol = 1e-12;
inline constexpr int kFixedPointMaxIter = 200;

// Symmetrizes (A + A^T)/2 when the asymmetry is below tolerance, rejects
// otherwise.
inline Eigen::MatrixXd require_symmetric(const Eigen::MatrixXd& a,
                                         double tol = kSymTol) {
  if (a.rows() != a.cols()) fail_data("matrix must be square");
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > tol)
    fail_data("matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  return (a + a.transpose()) / 2.0;
}

// Validates the correlation-matrix invariants: symmetry, unit diagonal,
// off-diagonal entries in [-1,1] and strictly positive spectrum.
inline Eigen::MatrixXd require_corr_matrix(const Eigen::MatrixXd& r_in) {
  Eigen::MatrixXd r = require_symmetric(r_in);
  const int m = static_cast<int>(r.rows());
  for (int i = 0; i < m; ++i) {
    if (std::fabs(r(i, i) - 1.0) > kSymTol)
      fail_data("correlation matrix must have unit diagonal, entry (" +
                std::to_string(i) + "," + std::to_string(i) + ") is " +
                std::to_string(r(i, i)));
    for (int j = 0; j < i; ++j)
      if (std::fabs(r(i, j)) > 1.0 + kSymTol)
        fail_data("correlation entry out of [-1,1] at (" + std::to_string(i) +
                  "," + std::to_string(j) + ")");
  }
  return r;
}

enum class MatrixFunc { Log, Exp, InvSqrt };

// f(A) = Q f(Lambda) Q^T from the spectral decomposition of a symmetric A.
inline Eigen::MatrixXd sym_matrix_function(const Eigen::MatrixXd& a,
                                           MatrixFunc which) {
  const Eigen::MatrixXd s = require_symmetric(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success) fail_numerical("eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  if (which != MatrixFunc::Exp && ev.minCoeff() <= kPdTol)
    fail_numerical("matrix is not positive definite (smallest eigenvalue " +
                   std::to_string(ev.minCoeff()) + ")");
  switch (which) {
    case MatrixFunc::Log: ev = ev.array().log(); break;
    case MatrixFunc::Exp: ev = ev.array().exp(); break;
    case MatrixFunc::InvSqrt: ev = ev.array().rsqrt(); break;
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// A correlation matrix together with the spectral decomposition of its
// logarithm. R and log R share eigenvectors, so one decomposition serves
// R, R^{-1}, R^{-1/2}, log|R| and the Jacobian machinery below.
struct CorrState {
  Eigen::MatrixXd r;
  Eigen::VectorXd log_eig;  // eigenvalues of log R
  Eigen::MatrixXd q;        // orthonormal eigenvectors

  int dim() const { return static_cast<int>(r.rows()); }
  double log_det() const { return log_eig.sum(); }
  Eigen::MatrixXd inverse() const {
    return q * (-log_eig).array().exp().matrix().asDiagonal() * q.transpose();
  }
  Eigen::MatrixXd inv_sqrt() const {
    return q * (-0.5 * log_eig).array().exp().matrix().asDiagonal() *
           q.transpose();
  }
};

// Recovers the unique correlation matrix with vecl(log R) = gamma by the
// fixed-point diagonal adjustment x <- x - log diag(e^{G[x]}), started from
// x = 0 and iterated until max|diag(e^{G[x]}) - 1| < 1e-12.
inline CorrState corr_state_from_gamma(const Eigen::VectorXd& gamma, int m) {
  if (!gamma.allFinite()) fail_data("gamma vector must be finite");
  Eigen::MatrixXd g = unvecl_sym(gamma, m);
  double resid = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kFixedPointMaxIter; ++it) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    if (es.info() != Eigen::Success) fail_numerical("eigendecomposition failed");
    const Eigen::VectorXd ev = es.eigenvalues();
    Eigen::MatrixXd e = es.eigenvectors() * ev.array().exp().matrix().asDiagonal() *
                        es.eigenvectors().transpose();
    e = ((e + e.transpose()) / 2.0).eval();
    resid = (e.diagonal().array() - 1.0).abs().maxCoeff();
    if (resid < kFixedPointTol) return CorrState{std::move(e), ev, es.eigenvectors()};
    g.diagonal() -= e.diagonal().array().log().matrix();
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", resid);
  fail_numerical("fixed-point diagonal adjustment did not converge in " +
                 std::to_string(kFixedPointMaxIter) + " iterations (residual " +
                 buf + ")");
}

inline CorrState corr_state_from_gamma(const Eigen::VectorXd& gamma) {
  return corr_state_from_gamma(gamma, vecl_dim(gamma.size()));
}

inline CorrState corr_state_from_matrix(const Eigen::MatrixXd& r_in) {
  const Eigen::MatrixXd r = require_corr_matrix(r_in);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
  if (es.info() != Eigen::Success) fail_numerical("eigendecomposition failed");
  if (es.eigenvalues().minCoeff() <= kPdTol)
    fail_numerical("correlation matrix is not positive definite "
                   "(smallest eigenvalue " +
                   std::to_string(es.eigenvalues().minCoeff()) + ")");
  return CorrState{r, es.eigenvalues().array().log(), es.eigenvectors()};
}

// gamma = vecl(log R), the generalized z-transformation.
inline Eigen::VectorXd gz_transform(const Eigen::MatrixXd& r) {
  const CorrState st = corr_state_from_matrix(r);
  return vecl(st.q * st.log_eig.asDiagonal() * st.q.transpose());
}

// Inverse transformation via the fixed-point diagonal adjustment.
inline Eigen::MatrixXd gz_inverse(const Eigen::VectorXd& gamma) {
  return corr_state_from_gamma(gamma).r;
}

inline Eigen::MatrixXd gz_inverse(const Eigen::VectorXd& gamma, int m) {
  return corr_state_from_gamma(gamma, m).r;
}

namespace detail {

// First divided differences of exp at the eigenvalues; the equal-eigenvalue
// branch uses the limit e^{lambda_j} (threshold 1e-10 absolute).
inline Eigen::MatrixXd exp_divided_differences(const Eigen::VectorXd& lam) {
  const int m = static_cast<int>(lam.size());
  const Eigen::VectorXd el = lam.array().exp();
  Eigen::MatrixXd xi(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k) {
      const double d = lam[j] - lam[k];
      xi(j, k) = std::fabs(d) < kEigDegenTol ? el[j] : (el[j] - el[k]) / d;
    }
  return xi;
}

// Daleckii–Krein: the derivative of e^G in direction dG is
// Q (Xi .* (Q^T dG Q)) Q^T with Xi the divided differences above.
inline Eigen::MatrixXd dexp_apply(const CorrState& st, const Eigen::MatrixXd& xi,
                                  const Eigen::MatrixXd& dg) {
  const Eigen::MatrixXd inner = st.q.transpose() * dg * st.q;
  return st.q * xi.cwiseProduct(inner) * st.q.transpose();
}

}  // namespace detail

// Sensitivity of the pairwise correlations rho = vecl(R) to gamma-directions
// given by the columns of w: returns (d rho / d gamma) * w without forming the
// full Jacobian. Each direction perturbs the off-diagonal of G symmetrically;
// the diagonal of G co-moves to keep diag(R) = 1, which is the elimination
// term E_d A E_d^T below.
inline Eigen::MatrixXd corr_sensitivity(const CorrState& st,
                                        const Eigen::MatrixXd& w) {
  const int m = st.dim();
  const int np = vecl_size(m);
  if (w.rows() != np) fail_data("direction matrix has wrong row count");
  const Eigen::MatrixXd xi = detail::exp_divided_differences(st.log_eig);

  // d_mat(s,t) = d[e^G]_ss / d G_tt
  Eigen::MatrixXd d_mat(m, m);
  for (int t = 0; t < m; ++t) {
    Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(m, m);
    dir(t, t) = 1.0;
    d_mat.col(t) = detail::dexp_apply(st, xi, dir).diagonal();
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(d_mat);
  const Eigen::VectorXd dd = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success ||
      dd.minCoeff() <= 1e-14 * std::max(1.0, dd.maxCoeff()))
    fail_numerical("diagonal response matrix is numerically singular "
                   "(condition estimate " +
                   std::to_string(dd.maxCoeff() / std::max(dd.minCoeff(), 1e-300)) +
                   ")");

  Eigen::MatrixXd out(np, w.cols());
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    const Eigen::MatrixXd dg = unvecl_sym(w.col(c), m);
    const Eigen::MatrixXd unconstrained = detail::dexp_apply(st, xi, dg);
    const Eigen::VectorXd x = ldlt.solve(unconstrained.diagonal());
    const Eigen::MatrixXd correction =
        detail::dexp_apply(st, xi, Eigen::MatrixXd(x.asDiagonal()));
    out.col(c) = vecl(unconstrained - correction);
  }
  return out;
}

// Jacobian d rho / d gamma of the pairwise correlations with respect to the
// transformed vector, both in vecl order. Diagonal entries are nonnegative
// (monotonicity of the transform) and checked to -1e-12.
inline Eigen::MatrixXd jacobian_rho_gamma(const CorrState& st) {
  const int np = vecl_size(st.dim());
  const Eigen::MatrixXd jac =
      corr_sensitivity(st, Eigen::MatrixXd::Identity(np, np));
  if (np > 0 && jac.diagonal().minCoeff() < -1e-12)
    fail_numerical("Jacobian lost monotonicity: diagonal entry " +
                   std::to_string(jac.diagonal().minCoeff()));
  return jac;
}

inline Eigen::MatrixXd jacobian_rho_gamma(const Eigen::MatrixXd& r) {
  return jacobian_rho_gamma(corr_state_from_matrix(r));
}

}  // namespace gcr
