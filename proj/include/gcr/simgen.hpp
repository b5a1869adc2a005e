#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gcr/corr_manifold.hpp"
#include "gcr/dataset.hpp"
#include "gcr/error.hpp"
#include "gcr/rng.hpp"
#include "gcr/stats.hpp"
#include "gcr/vecl.hpp"

namespace gcr {

// Gaussian cluster draw: mu + chol(Sigma) z.
inline Eigen::VectorXd gen_gaussian_cluster(const Eigen::VectorXd& mu,
                                            const Eigen::MatrixXd& sigma,
                                            Philox& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    fail_numerical("covariance matrix is not positive definite");
  Eigen::VectorXd z(mu.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mu + llt.matrixL() * z;
}

// Attainable correlation interval between Bernoulli(p1) and Bernoulli(p2),
// from the Frechet bounds on the joint success probability.
struct FrechetBounds {
  double lo;
  double hi;
};

inline FrechetBounds bernoulli_corr_bounds(double p1, double p2) {
  const double q1 = 1.0 - p1, q2 = 1.0 - p2;
  const double s = std::sqrt(p1 * q1 * p2 * q2);
  return {(std::max(0.0, p1 + p2 - 1.0) - p1 * p2) / s,
          (std::min(p1, p2) - p1 * p2) / s};
}

// Solves Phi2(Phi^-1(p1), Phi^-1(p2); delta) = target * sqrt(p1 q1 p2 q2)
// + p1 p2 for the tetrachoric correlation delta by bisection; the left side
// is monotone increasing in delta.
inline double solve_tetrachoric(double p1, double p2, double target_corr) {
  if (!(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0))
    fail_data("tetrachoric margins must lie in (0,1)");
  const FrechetBounds fb = bernoulli_corr_bounds(p1, p2);
  if (!(target_corr > fb.lo && target_corr < fb.hi))
    fail_numerical("target correlation " + std::to_string(target_corr) +
                   " violates the Frechet bounds [" + std::to_string(fb.lo) +
                   ", " + std::to_string(fb.hi) + "] for margins (" +
                   std::to_string(p1) + ", " + std::to_string(p2) + ")");
  if (target_corr == 0.0) return 0.0;
  const double h = norm_ppf(p1), k = norm_ppf(p2);
  const double p11 = target_corr * std::sqrt(p1 * (1 - p1) * p2 * (1 - p2)) + p1 * p2;
  double lo = -1.0 + 1e-12, hi = 1.0 - 1e-12;
  while (hi - lo > 1e-10) {
    const double mid = (lo + hi) / 2.0;
    if (bvn_cdf(h, k, mid) < p11) lo = mid; else hi = mid;
  }
  return (lo + hi) / 2.0;
}

namespace detail {

// Draws a centered multivariate normal with the given correlation via the
// spectral square root; feasibility (positive definiteness) is the caller's
// concern and is re-checked here.
inline Eigen::VectorXd mvn_draw(const Eigen::MatrixXd& corr, Philox& rng) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 1e-10)
    fail_numerical("latent correlation matrix is not positive definite");
  Eigen::VectorXd z(corr.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return es.eigenvectors() *
         (es.eigenvalues().array().sqrt() * z.array()).matrix();
}

}  // namespace detail

// Emrich-Piedmonte draw of correlated Bernoulli outcomes: thresholds a latent
// multivariate normal whose pairwise correlations solve the tetrachoric
// equations.
inline Eigen::VectorXd gen_bernoulli_cluster(const Eigen::VectorXd& p,
                                             const Eigen::MatrixXd& r_target,
                                             Philox& rng) {
  const int m = static_cast<int>(p.size());
  if (m == 1) return (Eigen::VectorXd(1) << (rng.uniform() < p[0] ? 1.0 : 0.0)).finished();
  Eigen::MatrixXd delta = Eigen::MatrixXd::Identity(m, m);
  for_each_pair(m, [&](int j, int k, int) {
    const double dd = solve_tetrachoric(p[j], p[k], r_target(j, k));
    delta(j, k) = dd;
    delta(k, j) = dd;
  });
  const Eigen::VectorXd z = detail::mvn_draw(delta, rng);
  Eigen::VectorXd y(m);
  for (int t = 0; t < m; ++t) y[t] = z[t] <= norm_ppf(p[t]) ? 1.0 : 0.0;
  return y;
}

namespace detail {

// Poisson quantile thresholds in latent z space: t_k = Phi^-1(F(k)), so the
// NORTA transform F^-1(Phi(z)) becomes a binary search over z.
struct PoissonThresholds {
  std::vector<double> z;

  explicit PoissonThresholds(double mu) {
    if (!(mu > 0.0)) fail_data("Poisson mean must be positive");
    double pmf = std::exp(-mu), cdf = pmf;
    int k = 0;
    const int cap = static_cast<int>(mu + 20.0 * std::sqrt(mu) + 200.0);
    while (cdf < 1.0 - 1e-13 && k < cap) {
      z.push_back(norm_ppf(std::min(cdf, 1.0 - 1e-16)));
      ++k;
      pmf *= mu / k;
      cdf += pmf;
    }
    z.push_back(std::numeric_limits<double>::infinity());
  }

  double value(double zval) const {
    const auto it = std::lower_bound(z.begin(), z.end(), zval);
    return static_cast<double>(it - z.begin());
  }
};

// Pearson correlation of the NORTA pair at latent correlation r. The product
// expectation decomposes exactly over the quantile thresholds,
//   E[X Y] = sum_{k,l >= 1} P(X >= k, Y >= l) = sum_{k,l} P(Z1 > t_k, Z2 > t_l),
// each term a bivariate normal orthant probability. Truncating terms below
// 1e-10 bounds the error on the matched correlation by ~1e-6.
inline double poisson_norta_corr(const PoissonThresholds& qa,
                                 const PoissonThresholds& qb, double mu_a,
                                 double mu_b, double r) {
  const size_t ka = qa.z.size() - 1, kb = qb.z.size() - 1;  // drop sentinels
  double exy = 0.0;
  for (size_t k = 0; k < ka; ++k) {
    if (norm_cdf(-qa.z[k]) * static_cast<double>(kb) < 1e-10) break;
    for (size_t l = 0; l < kb; ++l) {
      const double term = bvn_upper(qa.z[k], qb.z[l], r);
      exy += term;
      if (term < 1e-10 && qb.z[l] > 0.0) break;  // terms decrease in l
    }
  }
  return (exy - mu_a * mu_b) / std::sqrt(mu_a * mu_b);
}

}  // namespace detail

// Matches the latent normal correlation r so that the NORTA-transformed
// Poisson pair attains the target correlation; bisection on r against the
// orthant-sum evaluation above (monotone increasing in r).
inline double solve_poisson_latent(double mu_a, double mu_b, double target) {
  if (target == 0.0) return 0.0;
  const detail::PoissonThresholds qa(mu_a), qb(mu_b);
  const double edge = 1.0 - 1e-9;
  const double fhi = detail::poisson_norta_corr(qa, qb, mu_a, mu_b, edge);
  const double flo = detail::poisson_norta_corr(qa, qb, mu_a, mu_b, -edge);
  if (!(target > flo && target < fhi))
    fail_numerical("target correlation " + std::to_string(target) +
                   " is unattainable for Poisson margins (" +
                   std::to_string(mu_a) + ", " + std::to_string(mu_b) +
                   "); attainable range [" + std::to_string(flo) + ", " +
                   std::to_string(fhi) + "]");
  double lo = -edge, hi = edge;
  while (hi - lo > 1e-5) {
    const double mid = (lo + hi) / 2.0;
    if (detail::poisson_norta_corr(qa, qb, mu_a, mu_b, mid) < target) lo = mid;
    else hi = mid;
  }
  return (lo + hi) / 2.0;
}

// Yahav-Shmueli style NORTA draw of correlated Poisson counts.
inline Eigen::VectorXd gen_poisson_cluster(const Eigen::VectorXd& mu,
                                           const Eigen::MatrixXd& r_target,
                                           Philox& rng) {
  const int m = static_cast<int>(mu.size());
  std::vector<detail::PoissonThresholds> quant;
  quant.reserve(m);
  for (int t = 0; t < m; ++t) quant.emplace_back(mu[t]);
  if (m == 1) {
    Eigen::VectorXd y(1);
    y[0] = quant[0].value(rng.normal());
    return y;
  }
  Eigen::MatrixXd latent = Eigen::MatrixXd::Identity(m, m);
  for_each_pair(m, [&](int j, int k, int) {
    const double r = solve_poisson_latent(mu[j], mu[k], r_target(j, k));
    latent(j, k) = r;
    latent(k, j) = r;
  });
  const Eigen::VectorXd z = detail::mvn_draw(latent, rng);
  Eigen::VectorXd y(m);
  for (int t = 0; t < m; ++t) y[t] = quant[t].value(z[t]);
  return y;
}

// ---------------------------------------------------------------------------
// Preset scenarios
// ---------------------------------------------------------------------------

enum class Study {
  Study1Gaussian,
  Study1Poisson,
  Study1Bernoulli,
  Study2Case1,
  Study2Case2,
  Study2Case3,
  Study2Case4,
};

struct ScenarioSpec {
  Study study = Study::Study1Gaussian;
  int n_clusters = 100;
  std::uint64_t seed = 0;

  static Study study_from_name(const std::string& name) {
    if (name == "study1_gaussian") return Study::Study1Gaussian;
    if (name == "study1_poisson") return Study::Study1Poisson;
    if (name == "study1_bernoulli") return Study::Study1Bernoulli;
    if (name == "study2_case1") return Study::Study2Case1;
    if (name == "study2_case2") return Study::Study2Case2;
    if (name == "study2_case3") return Study::Study2Case3;
    if (name == "study2_case4") return Study::Study2Case4;
    fail_data("unknown scenario '" + name + "'");
  }
  static const char* study_name(Study s) {
    switch (s) {
      case Study::Study1Gaussian: return "study1_gaussian";
      case Study::Study1Poisson: return "study1_poisson";
      case Study::Study1Bernoulli: return "study1_bernoulli";
      case Study::Study2Case1: return "study2_case1";
      case Study::Study2Case2: return "study2_case2";
      case Study::Study2Case3: return "study2_case3";
      case Study::Study2Case4: return "study2_case4";
    }
    return "?";
  }
};

struct GeneratedData {
  ClusteredDataset dataset;
  std::vector<Eigen::VectorXd> mu0;     // true marginal means per cluster
  std::vector<Eigen::MatrixXd> sigma0;  // true covariance per cluster
  Eigen::VectorXd beta0;
  Eigen::VectorXd alpha0;     // empty when the truth is a raw correlation rule
  std::string corr_rule;      // human-readable rule for the study-2 cases
  double phi0 = 1.0;
  std::string family;
  std::string mean_formula;
  std::string corr_formula;
  std::vector<std::string> column_order;  // CSV column order after cluster,y
  long long retries = 0;
};

namespace detail {

struct ScenarioCluster {
  int m = 0;
  Eigen::VectorXd x1, x2, u, v, obs;
  Eigen::VectorXd y;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

}  // namespace detail

// Builds a full preset dataset with per-cluster ground truth. Study-1 targets
// come from gz_inverse of W alpha0 (model-generated); Study-2 targets follow
// the raw correlation rules of the four cases. Infeasible clusters are
// resampled from the cluster's own substream, up to 1000 attempts.
inline GeneratedData make_scenario(const ScenarioSpec& spec) {
  if (spec.n_clusters < 1) fail_data("scenario needs at least one cluster");
  GeneratedData out;
  const Study study = spec.study;
  const bool study1 = study == Study::Study1Gaussian ||
                      study == Study::Study1Poisson ||
                      study == Study::Study1Bernoulli;

  out.beta0 = (Eigen::VectorXd(3) << 1.0, -0.5, 0.5).finished();
  out.phi0 = 1.0;
  out.mean_formula = "x1 + x2";
  switch (study) {
    case Study::Study1Gaussian:
    case Study::Study1Poisson:
      out.alpha0 = (Eigen::VectorXd(3) << 0.2, -0.2, 0.3).finished();
      out.corr_formula = "intercept + diff(u) + sqdiff(u)";
      out.family = study == Study::Study1Gaussian ? "gaussian" : "poisson";
      out.column_order = {"x1", "x2", "u"};
      break;
    case Study::Study1Bernoulli:
      out.alpha0 = (Eigen::VectorXd(2) << 0.05, 0.15).finished();
      out.corr_formula = "intercept + same(v)";
      out.family = "bernoulli";
      out.column_order = {"x1", "x2", "v"};
      break;
    case Study::Study2Case1:
      out.corr_rule = "0.05 + 0.15*I(u_j=u_k=0) + 0.2*I(u_j=u_k=1)";
      out.corr_formula = "intercept + same(u)";
      out.family = "bernoulli";
      out.column_order = {"x1", "x2", "u"};
      break;
    case Study::Study2Case2:
      out.corr_rule =
          "0.05 + 0.15*I(u_j=u_k=0) + 0.2*I(u_j=u_k=1) - 0.05|x1_j-x1_k| "
          "- 0.05|x2_j-x2_k| - 0.05|v_j-v_k|";
      out.corr_formula =
          "intercept + same(u) + absdiff(x1) + absdiff(x2) + absdiff(v)";
      out.family = "bernoulli";
      out.column_order = {"x1", "x2", "u", "v"};
      break;
    case Study::Study2Case3:
      out.corr_rule = "0.4 * 0.6^|j-k|";
      out.corr_formula = "intercept + absdiff(obs)";
      out.family = "bernoulli";
      out.column_order = {"x1", "x2", "obs"};
      break;
    case Study::Study2Case4:
      out.corr_rule =
          "0.4 * 0.6^|j-k| - 0.05|x1_j-x1_k| - 0.05|x2_j-x2_k| - 0.05|v_j-v_k|";
      out.corr_formula =
          "intercept + absdiff(obs) + absdiff(x1) + absdiff(x2) + absdiff(v)";
      out.family = "bernoulli";
      out.column_order = {"x1", "x2", "v", "obs"};
      break;
  }

  std::vector<detail::ScenarioCluster> clusters(spec.n_clusters);
  for (int i = 0; i < spec.n_clusters; ++i) {
    Philox rng(spec.seed, static_cast<std::uint64_t>(i) + 1);
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      if (attempt > 0) ++out.retries;
      detail::ScenarioCluster cl;
      cl.m = study1 ? rng.binomial(6, 0.8) + 1 : rng.binomial(5, 0.8) + 2;
      const int m = cl.m;
      cl.x1.resize(m);
      cl.x2.resize(m);
      cl.u.resize(m);
      cl.v.resize(m);
      cl.obs.resize(m);
      for (int j = 0; j < m; ++j) {
        // (x1, x2) bivariate standard normal with correlation 0.5
        const double z1 = rng.normal(), z2 = rng.normal();
        cl.x1[j] = z1;
        cl.x2[j] = 0.5 * z1 + std::sqrt(0.75) * z2;
        cl.obs[j] = j + 1;
        switch (study) {
          case Study::Study1Gaussian:
          case Study::Study1Poisson: cl.u[j] = rng.uniform(); break;
          case Study::Study1Bernoulli: cl.v[j] = rng.binomial(1, 0.5); break;
          case Study::Study2Case1: cl.u[j] = rng.binomial(1, 0.5); break;
          case Study::Study2Case2:
          case Study::Study2Case4:
            cl.u[j] = rng.binomial(1, 0.5);
            cl.v[j] = rng.binomial(4, 0.5);
            break;
          case Study::Study2Case3: break;
        }
      }
      Eigen::VectorXd eta(m), mean(m), var(m);
      for (int j = 0; j < m; ++j) {
        eta[j] = out.beta0[0] + out.beta0[1] * cl.x1[j] + out.beta0[2] * cl.x2[j];
        if (out.family == "gaussian") { mean[j] = eta[j]; var[j] = 1.0; }
        else if (out.family == "poisson") { mean[j] = std::exp(eta[j]); var[j] = mean[j]; }
        else { mean[j] = 1.0 / (1.0 + std::exp(-eta[j])); var[j] = mean[j] * (1.0 - mean[j]); }
      }

      // target correlation matrix
      Eigen::MatrixXd r;
      try {
        if (study1) {
          if (m == 1) {
            r = Eigen::MatrixXd::Ones(1, 1);
          } else {
            Eigen::VectorXd gamma(vecl_size(m));
            for_each_pair(m, [&](int j, int k, int idx) {
              double g = out.alpha0[0];
              if (study == Study::Study1Bernoulli) {
                g += out.alpha0[1] * (cl.v[j] == cl.v[k] ? 1.0 : 0.0);
              } else {
                const double du = cl.u[j] - cl.u[k];
                g += out.alpha0[1] * du + out.alpha0[2] * du * du;
              }
              gamma[idx] = g;
            });
            r = gz_inverse(gamma, m);
          }
        } else {
          r = Eigen::MatrixXd::Identity(m, m);
          for_each_pair(m, [&](int j, int k, int) {
            double rho = 0.0;
            switch (study) {
              case Study::Study2Case1:
                rho = 0.05 + 0.15 * (cl.u[j] == 0 && cl.u[k] == 0 ? 1.0 : 0.0) +
                      0.2 * (cl.u[j] == 1 && cl.u[k] == 1 ? 1.0 : 0.0);
                break;
              case Study::Study2Case2:
                rho = 0.05 + 0.15 * (cl.u[j] == 0 && cl.u[k] == 0 ? 1.0 : 0.0) +
                      0.2 * (cl.u[j] == 1 && cl.u[k] == 1 ? 1.0 : 0.0) -
                      0.05 * std::fabs(cl.x1[j] - cl.x1[k]) -
                      0.05 * std::fabs(cl.x2[j] - cl.x2[k]) -
                      0.05 * std::fabs(cl.v[j] - cl.v[k]);
                break;
              case Study::Study2Case3:
                rho = 0.4 * std::pow(0.6, std::fabs(cl.obs[j] - cl.obs[k]));
                break;
              case Study::Study2Case4:
                rho = 0.4 * std::pow(0.6, std::fabs(cl.obs[j] - cl.obs[k])) -
                      0.05 * std::fabs(cl.x1[j] - cl.x1[k]) -
                      0.05 * std::fabs(cl.x2[j] - cl.x2[k]) -
                      0.05 * std::fabs(cl.v[j] - cl.v[k]);
                break;
              default: break;
            }
            r(j, k) = rho;
            r(k, j) = rho;
          });
          if (m > 1) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
            if (es.eigenvalues().minCoeff() <= 1e-10)
              fail_numerical("rule correlation matrix is not positive definite");
          }
        }

        // responses
        if (out.family == "gaussian") {
          const Eigen::MatrixXd sig =
              var.cwiseSqrt().asDiagonal() * r * var.cwiseSqrt().asDiagonal();
          cl.y = gen_gaussian_cluster(mean, sig, rng);
        } else if (out.family == "poisson") {
          cl.y = gen_poisson_cluster(mean, r, rng);
        } else {
          cl.y = gen_bernoulli_cluster(mean, r, rng);
        }
        cl.mu = mean;
        cl.sigma = var.cwiseSqrt().asDiagonal() * r * var.cwiseSqrt().asDiagonal();
        clusters[i] = std::move(cl);
        ok = true;
      } catch (const Error&) {
        // infeasible draw: resample the whole cluster
      }
    }
    if (!ok)
      fail_numerical("scenario cluster " + std::to_string(i + 1) +
                     " remained infeasible after 1000 attempts");
  }

  // assemble the dataset
  std::vector<std::string> cluster_of_row;
  std::vector<double> response;
  std::map<std::string, Column> cols;
  for (const auto& name : out.column_order) cols[name] = Column{};
  auto push_value = [&](const std::string& name, double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    cols[name].raw.emplace_back(buf);
  };
  for (int i = 0; i < spec.n_clusters; ++i) {
    const auto& cl = clusters[i];
    for (int j = 0; j < cl.m; ++j) {
      cluster_of_row.push_back(std::to_string(i + 1));
      response.push_back(cl.y[j]);
      for (const auto& name : out.column_order) {
        if (name == "x1") push_value(name, cl.x1[j]);
        else if (name == "x2") push_value(name, cl.x2[j]);
        else if (name == "u") push_value(name, cl.u[j]);
        else if (name == "v") push_value(name, cl.v[j]);
        else if (name == "obs") push_value(name, cl.obs[j]);
      }
    }
    out.mu0.push_back(clusters[i].mu);
    out.sigma0.push_back(clusters[i].sigma);
  }
  out.dataset = ClusteredDataset::from_rows(std::move(cluster_of_row),
                                            std::move(response), std::move(cols));
  return out;
}

// Writes the generated dataset as CSV with columns cluster,y,<covariates>.
inline void write_scenario_csv(const GeneratedData& gen, const std::string& path) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) fail_data("cannot write '" + path + "'");
  outf << "cluster,y";
  for (const auto& name : gen.column_order) outf << "," << name;
  outf << "\n";
  const ClusteredDataset& ds = gen.dataset;
  char buf[40];
  for (int i = 0; i < ds.n_clusters(); ++i) {
    const auto [begin, end] = ds.span(i);
    for (size_t rrow = begin; rrow < end; ++rrow) {
      outf << ds.cluster_id(i);
      std::snprintf(buf, sizeof(buf), "%.17g", ds.response(rrow));
      outf << "," << buf;
      for (const auto& name : gen.column_order)
        outf << "," << ds.column(name).raw[rrow];
      outf << "\n";
    }
  }
}

}  // namespace gcr
