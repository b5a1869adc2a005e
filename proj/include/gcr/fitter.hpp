#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gcr/corr_manifold.hpp"
#include "gcr/error.hpp"
#include "gcr/exp_family.hpp"
#include "gcr/formula.hpp"

namespace gcr {

struct FitConfig {
  double step_lambda = 0.5;  // scoring step size in (0,1]
  int outer_max = 100;
  int inner_max = 50;
  double tol_outer = 1e-8;  // max relative parameter change
  double tol_inner = 1e-8;
  bool backtracking = true;
  bool freeze_alpha = false;  // keep alpha at 0: independence working fit

  void validate() const {
    if (!(step_lambda > 0.0 && step_lambda <= 1.0))
      fail_data("step_lambda must lie in (0,1]");
    if (!(tol_outer > 0.0 && tol_inner > 0.0)) fail_data("tolerances must be positive");
    if (outer_max < 1 || inner_max < 1) fail_data("iteration limits must be >= 1");
  }
};

struct FitResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  double phi = 1.0;
  bool converged = false;
  int outer_iters = 0;
  std::vector<double> pl_trace;
  std::vector<Eigen::MatrixXd> cluster_r;
  std::vector<std::string> beta_names;
  std::vector<std::string> alpha_names;
  std::vector<std::string> warnings;
  bool alpha_frozen = false;
};

namespace detail {

// Mean-model state of one cluster at (beta, phi): linear predictor, moments,
// the GEE derivative dmu/deta and the standardized residual nu.
struct MeanState {
  Eigen::VectorXd eta, theta, mu, var_unit, dmu, sd, nu;
};

inline MeanState mean_state(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const FamilySpec& family, const Eigen::VectorXd& beta,
                            double phi) {
  MeanState st;
  st.eta = x * beta;
  const int m = static_cast<int>(st.eta.size());
  st.theta.resize(m);
  st.mu.resize(m);
  st.var_unit.resize(m);
  st.dmu.resize(m);
  st.sd.resize(m);
  st.nu.resize(m);
  for (int j = 0; j < m; ++j) {
    const MomentBundle mb = family_moments(family, st.eta[j], phi);
    st.theta[j] = mb.theta;
    st.mu[j] = mb.mu;
    st.var_unit[j] = mb.var_unit;
    st.dmu[j] = mean_derivative(family, st.eta[j]);
    st.sd[j] = std::sqrt(phi * mb.var_unit);
    st.nu[j] = (y[j] - mb.mu) / st.sd[j];
  }
  return st;
}

inline double max_rel_change(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(b[i] - a[i]) / std::max(1.0, std::fabs(a[i])));
  return worst;
}

}  // namespace detail

// Dispersion estimate phi = sum r^2 / (N - p) from Pearson residuals; for
// families with known dispersion the fitter pins phi = 1 instead.
inline double estimate_phi(const DesignBundle& designs, const FamilySpec& family,
                           const Eigen::VectorXd& beta) {
  if (family.dispersion_known) return 1.0;
  const auto n = static_cast<long long>(designs.n_obs());
  const long long p = designs.p();
  if (n <= p)
    fail_data("cannot estimate dispersion: N = " + std::to_string(n) +
              " observations but p = " + std::to_string(p) + " parameters");
  double ss = 0.0;
  for (int i = 0; i < designs.n_clusters(); ++i) {
    const Eigen::VectorXd eta = designs.x[i] * beta;
    for (Eigen::Index j = 0; j < eta.size(); ++j) {
      const double r = pearson_residual(family, designs.y[i][j], eta[j], 1.0);
      ss += r * r;
    }
  }
  return ss / static_cast<double>(n - p);
}

namespace detail {

// Correlation states for all clusters at gamma_i = W_i * alpha. Singleton
// clusters carry the trivial 1x1 state.
inline std::vector<CorrState> cluster_corr_states(const DesignBundle& designs,
                                                  const Eigen::VectorXd& alpha) {
  std::vector<CorrState> states;
  states.reserve(designs.n_clusters());
  for (int i = 0; i < designs.n_clusters(); ++i) {
    const int m = designs.cluster_size(i);
    if (m == 1) {
      states.push_back(CorrState{Eigen::MatrixXd::Ones(1, 1),
                                 Eigen::VectorXd::Zero(1),
                                 Eigen::MatrixXd::Ones(1, 1)});
    } else {
      states.push_back(corr_state_from_gamma(designs.w[i] * alpha, m));
    }
  }
  return states;
}

inline Eigen::VectorXd gee_step_impl(const DesignBundle& designs,
                                     const FamilySpec& family,
                                     const Eigen::VectorXd& beta,
                                     const std::vector<CorrState>& states,
                                     double phi, Eigen::MatrixXd* h1_out) {
  const int p = designs.p();
  Eigen::MatrixXd h1 = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < designs.n_clusters(); ++i) {
    const MeanState ms = mean_state(designs.x[i], designs.y[i], family, beta, phi);
    // D = diag(dmu) X, V^{-1} = S^{-1} R^{-1} S^{-1} with S = diag(sd)
    const Eigen::MatrixXd ds = ms.dmu.cwiseQuotient(ms.sd).asDiagonal() * designs.x[i];
    const Eigen::MatrixXd rinv = states[i].inverse();
    h1.noalias() += ds.transpose() * rinv * ds;
    s1.noalias() += ds.transpose() * (rinv * ms.nu);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h1);
  const Eigen::VectorXd dd = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success ||
      dd.minCoeff() <= 1e-14 * std::max(1.0, dd.maxCoeff()))
    fail_numerical("GEE information H1 is numerically singular (condition estimate " +
                   std::to_string(dd.maxCoeff() / std::max(dd.minCoeff(), 1e-300)) + ")");
  if (h1_out) *h1_out = h1;
  return beta + ldlt.solve(s1);
}

}  // namespace detail

// One GEE Fisher-scoring step for beta at the working correlation implied by
// alpha: beta + H1^{-1} S1.
inline Eigen::VectorXd gee_step(const DesignBundle& designs, const FamilySpec& family,
                                const Eigen::VectorXd& beta,
                                const Eigen::VectorXd& alpha, double phi) {
  const auto states = detail::cluster_corr_states(designs, alpha);
  return detail::gee_step_impl(designs, family, beta, states, phi, nullptr);
}

// GEE information H1 = sum D^T V^{-1} D (model-based covariance of beta).
inline Eigen::MatrixXd gee_info_h1(const DesignBundle& designs,
                                   const FamilySpec& family,
                                   const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& alpha, double phi) {
  const auto states = detail::cluster_corr_states(designs, alpha);
  const int p = designs.p();
  Eigen::MatrixXd h1 = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < designs.n_clusters(); ++i) {
    const detail::MeanState ms =
        detail::mean_state(designs.x[i], designs.y[i], family, beta, phi);
    const Eigen::MatrixXd ds = ms.dmu.cwiseQuotient(ms.sd).asDiagonal() * designs.x[i];
    h1.noalias() += ds.transpose() * states[i].inverse() * ds;
  }
  return h1;
}

// Gaussian pseudo-log-likelihood -1/2 sum_i [ log|R_i| + nu_i^T R_i^{-1} nu_i ]
// (larger is better). Size-1 clusters contribute -nu^2/2, constant in alpha.
inline double pl_objective(const DesignBundle& designs, const FamilySpec& family,
                           const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha,
                           double phi) {
  double total = 0.0;
  for (int i = 0; i < designs.n_clusters(); ++i) {
    const detail::MeanState ms =
        detail::mean_state(designs.x[i], designs.y[i], family, beta, phi);
    const int m = designs.cluster_size(i);
    if (m == 1) {
      total += -0.5 * ms.nu[0] * ms.nu[0];
      continue;
    }
    const CorrState st = corr_state_from_gamma(designs.w[i] * alpha, m);
    const Eigen::VectorXd t = st.inverse() * ms.nu;
    total += -0.5 * (st.log_det() + ms.nu.dot(t));
  }
  return total;
}

namespace detail {

// a''''(theta) / a''(theta)^2 recovered from the canonical parameter.
inline double kurt_ratio_at_theta(const FamilySpec& family, double theta) {
  switch (family.family) {
    case Family::Gaussian: return 0.0;
    case Family::Poisson: return std::exp(-theta);
    case Family::Bernoulli: {
      const double p = 1.0 / (1.0 + std::exp(-theta));
      return (1.0 - 6.0 * p + 6.0 * p * p) / (p * (1.0 - p));
    }
    case Family::Gamma: return 6.0;
  }
  fail_numerical("unreachable family branch");
}

inline Eigen::MatrixXd pseudo_expectation_from_state(const FamilySpec& family,
                                                     const CorrState& st,
                                                     const Eigen::VectorXd& theta,
                                                     double phi) {
  const int m = st.dim();
  const Eigen::MatrixXd a = st.inverse();
  const int np = vecl_size(m);
  Eigen::MatrixXd out(np, np);
  for_each_pair(m, [&](int j, int k, int row) {
    for_each_pair(m, [&](int l, int s, int col) {
      out(row, col) = a(j, l) * a(k, s) + a(j, s) * a(k, l);
    });
  });
  if (family.family != Family::Gaussian) {
    // kurtosis part as a rank-m update with v_t[(j,k)] = b(t,j) b(t,k)
    const Eigen::MatrixXd b = st.inv_sqrt();
    Eigen::MatrixXd v(np, m);
    Eigen::VectorXd c(m);
    for (int t = 0; t < m; ++t) {
      c[t] = phi * kurt_ratio_at_theta(family, theta[t]);
      for_each_pair(m, [&](int j, int k, int row) { v(row, t) = b(t, j) * b(t, k); });
    }
    out.noalias() += v * c.asDiagonal() * v.transpose();
  }
  return (out + out.transpose()) / 2.0;
}

}  // namespace detail

// Pseudo-expectation of J_i = eta_i eta_i^T under the diagonal fourth-cumulant
// assumption: E(eta_jk eta_ls) = a_jl a_ks + a_js a_kl
//   + phi * sum_t kurt_ratio(theta_t) b_tj b_ts b_tk b_tl,
// with a = R^{-1} entries and b = R^{-1/2} entries. Reduces to the Gaussian
// Wishart form when kurt_ratio is identically zero.
inline Eigen::MatrixXd pseudo_expectation_J(const FamilySpec& family,
                                            const Eigen::MatrixXd& r,
                                            const Eigen::VectorXd& theta,
                                            double phi) {
  const CorrState st = corr_state_from_matrix(r);
  if (theta.size() != st.dim())
    fail_data("theta length must match the matrix dimension");
  return detail::pseudo_expectation_from_state(family, st, theta, phi);
}

namespace detail {

// Everything the alpha scoring step needs from one pass over the clusters.
struct AlphaEval {
  double pl = 0.0;
  Eigen::VectorXd s2;
  Eigen::MatrixXd h2;
};

enum class AlphaParts { PlOnly, Score, ScoreAndInfo };

// Single pass over clusters computing the pseudo-log-likelihood, the score
// S2 and (optionally) the pseudo-expectation information H2. Accumulation
// runs in cluster order so results are bit-reproducible.
inline AlphaEval eval_alpha(const DesignBundle& designs, const FamilySpec& family,
                            const std::vector<MeanState>& means,
                            const Eigen::VectorXd& alpha, double phi,
                            AlphaParts parts) {
  const int d = designs.d();
  AlphaEval ev;
  ev.s2 = Eigen::VectorXd::Zero(d);
  ev.h2 = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < designs.n_clusters(); ++i) {
    const int m = designs.cluster_size(i);
    const MeanState& ms = means[i];
    if (m == 1) {
      ev.pl += -0.5 * ms.nu[0] * ms.nu[0];
      continue;  // no pairs: skipped in S2/H2
    }
    const CorrState st = corr_state_from_gamma(designs.w[i] * alpha, m);
    const Eigen::MatrixXd rinv = st.inverse();
    const Eigen::VectorXd t = rinv * ms.nu;
    ev.pl += -0.5 * (st.log_det() + ms.nu.dot(t));
    if (parts == AlphaParts::PlOnly) continue;

    // eta = vecl(R^{-1} Rhat R^{-1} - R^{-1}) with Rhat = nu nu^T
    const int np = vecl_size(m);
    Eigen::VectorXd eta(np);
    for_each_pair(m, [&](int j, int k, int idx) {
      eta[idx] = t[j] * t[k] - rinv(j, k);
    });
    const Eigen::MatrixXd jw = corr_sensitivity(st, designs.w[i]);
    ev.s2.noalias() += jw.transpose() * eta;
    if (parts == AlphaParts::ScoreAndInfo) {
      const Eigen::MatrixXd pe =
          pseudo_expectation_from_state(family, st, ms.theta, phi);
      ev.h2.noalias() += jw.transpose() * pe * jw;
    }
  }
  return ev;
}

inline std::vector<MeanState> all_mean_states(const DesignBundle& designs,
                                              const FamilySpec& family,
                                              const Eigen::VectorXd& beta,
                                              double phi) {
  std::vector<MeanState> means;
  means.reserve(designs.n_clusters());
  for (int i = 0; i < designs.n_clusters(); ++i)
    means.push_back(mean_state(designs.x[i], designs.y[i], family, beta, phi));
  return means;
}

}  // namespace detail

// Pseudo-likelihood score S2 = sum_i W_i^T (d rho_i / d gamma_i)^T
// vecl(R_i^{-1} Rhat_i R_i^{-1} - R_i^{-1}); equals the exact gradient of
// pl_objective with respect to alpha.
inline Eigen::VectorXd pl_score_S2(const DesignBundle& designs,
                                   const FamilySpec& family,
                                   const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& alpha, double phi) {
  const auto means = detail::all_mean_states(designs, family, beta, phi);
  return detail::eval_alpha(designs, family, means, alpha, phi,
                            detail::AlphaParts::Score)
      .s2;
}

enum class InfoMode { OuterProduct, PseudoExpectation };

// Information for alpha. The pseudo-expectation mode drives the scoring
// steps; the outer-product mode (empirical score covariance) feeds inference.
inline Eigen::MatrixXd pl_info_H2(const DesignBundle& designs,
                                  const FamilySpec& family,
                                  const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& alpha, double phi,
                                  InfoMode mode) {
  const auto means = detail::all_mean_states(designs, family, beta, phi);
  const int d = designs.d();
  if (mode == InfoMode::PseudoExpectation)
    return detail::eval_alpha(designs, family, means, alpha, phi,
                              detail::AlphaParts::ScoreAndInfo)
        .h2;
  Eigen::MatrixXd h2 = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < designs.n_clusters(); ++i) {
    const int m = designs.cluster_size(i);
    if (m == 1) continue;
    const CorrState st = corr_state_from_gamma(designs.w[i] * alpha, m);
    const Eigen::MatrixXd rinv = st.inverse();
    const Eigen::VectorXd t = rinv * means[i].nu;
    Eigen::VectorXd eta(vecl_size(m));
    for_each_pair(m, [&](int j, int k, int idx) { eta[idx] = t[j] * t[k] - rinv(j, k); });
    const Eigen::VectorXd si = corr_sensitivity(st, designs.w[i]).transpose() * eta;
    h2.noalias() += si * si.transpose();
  }
  return h2;
}

// Joint estimation of (beta, alpha, phi) by modified Fisher scoring:
// per outer iteration, update phi from the Pearson residuals, run the alpha
// scoring loop alpha <- alpha + lambda H2^{-1} S2 to convergence (with
// backtracking on the pseudo-log-likelihood), then take one GEE step for
// beta. Initialization: beta from an independence working fit, alpha = 0.
inline FitResult fit_gcr(const DesignBundle& designs, const FamilySpec& family,
                         const FitConfig& config = {}) {
  config.validate();
  const int p = designs.p();
  const int d = designs.d();
  const size_t n_obs = designs.n_obs();
  if (static_cast<size_t>(p) >= n_obs)
    fail_data("mean model has p = " + std::to_string(p) +
              " columns but only N = " + std::to_string(n_obs) + " observations");
  const bool fit_alpha = !config.freeze_alpha && d > 0;
  if (fit_alpha && designs.n_pairs() == 0)
    fail_numerical("no within-cluster pairs: correlation parameters are not estimable");

  FitResult res;
  res.beta_names = designs.beta_names;
  res.alpha_names = designs.alpha_names;
  res.alpha_frozen = !fit_alpha;

  // independence working fit for beta (R = I; phi cancels from the step)
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(d);
  {
    const auto states = detail::cluster_corr_states(designs, alpha);
    bool init_ok = false;
    for (int it = 0; it < 100; ++it) {
      const Eigen::VectorXd next =
          detail::gee_step_impl(designs, family, beta, states, 1.0, nullptr);
      const double ch = detail::max_rel_change(beta, next);
      beta = next;
      if (ch < config.tol_outer) { init_ok = true; break; }
    }
    if (!init_ok)
      res.warnings.push_back("independence initialization did not fully converge");
  }

  double phi = family.dispersion_known ? 1.0 : estimate_phi(designs, family, beta);
  res.pl_trace.push_back(pl_objective(designs, family, beta, alpha, phi));

  bool converged = false;
  int outer = 0;
  for (outer = 1; outer <= config.outer_max; ++outer) {
    phi = family.dispersion_known ? 1.0 : estimate_phi(designs, family, beta);
    const Eigen::VectorXd alpha_outer_start = alpha;

    if (fit_alpha) {
      const auto means = detail::all_mean_states(designs, family, beta, phi);
      for (int s = 1; s <= config.inner_max; ++s) {
        const detail::AlphaEval ev = detail::eval_alpha(
            designs, family, means, alpha, phi, detail::AlphaParts::ScoreAndInfo);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.h2);
        const Eigen::VectorXd dd = ldlt.vectorD().cwiseAbs();
        if (ldlt.info() != Eigen::Success ||
            dd.minCoeff() <= 1e-14 * std::max(1.0, dd.maxCoeff()))
          fail_numerical(
              "pseudo-expectation information H2 is numerically singular "
              "(condition estimate " +
              std::to_string(dd.maxCoeff() / std::max(dd.minCoeff(), 1e-300)) + ")");
        const Eigen::VectorXd dir = ldlt.solve(ev.s2);
        // a trial step can leave the numerically representable region (huge
        // gamma); such trials count as rejected and the step is halved
        auto try_pl = [&](const Eigen::VectorXd& a, double& out) {
          try {
            out = detail::eval_alpha(designs, family, means, a, phi,
                                     detail::AlphaParts::PlOnly)
                      .pl;
            return std::isfinite(out);
          } catch (const Error&) {
            return false;
          }
        };
        double lam = config.step_lambda;
        Eigen::VectorXd alpha_try = alpha + lam * dir;
        double pl_try = 0.0;
        bool evaluable = try_pl(alpha_try, pl_try);
        if (config.backtracking) {
          const double lam_min = config.step_lambda / 64.0;
          while ((!evaluable || pl_try < ev.pl) && lam > lam_min * 1.0000001) {
            lam /= 2.0;
            alpha_try = alpha + lam * dir;
            evaluable = try_pl(alpha_try, pl_try);
          }
          if (!evaluable)
            fail_numerical(
                "alpha scoring step is not evaluable even at the smallest "
                "backtracking step");
          if (pl_try < ev.pl)
            res.warnings.push_back(
                "alpha step accepted despite decreasing pseudo-likelihood at outer " +
                std::to_string(outer) + ", inner " + std::to_string(s));
        } else if (!evaluable) {
          fail_numerical("alpha scoring step left the feasible region");
        }
        const double ch = detail::max_rel_change(alpha, alpha_try);
        alpha = alpha_try;
        res.pl_trace.push_back(pl_try);
        if (ch < config.tol_inner) break;
      }
    }

    const Eigen::VectorXd beta_next =
        gee_step(designs, family, beta, alpha, phi);
    const double ch_outer =
        std::max(detail::max_rel_change(beta, beta_next),
                 detail::max_rel_change(alpha_outer_start, alpha));
    beta = beta_next;
    if (ch_outer < config.tol_outer) { converged = true; break; }
  }

  res.beta = beta;
  res.alpha = alpha;
  res.phi = family.dispersion_known ? 1.0 : estimate_phi(designs, family, beta);
  res.converged = converged;
  res.outer_iters = std::min(outer, config.outer_max);
  const auto states = detail::cluster_corr_states(designs, alpha);
  res.cluster_r.reserve(states.size());
  for (const auto& st : states) res.cluster_r.push_back(st.r);
  return res;
}

inline FitResult fit_gcr(const ClusteredDataset& data, const MeanFormula& mf,
                         const CorrFormula& cf, const FamilySpec& family,
                         const FitConfig& config = {}) {
  return fit_gcr(build_designs(data, mf, cf), family, config);
}

}  // namespace gcr
