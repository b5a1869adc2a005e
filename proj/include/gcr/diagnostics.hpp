#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "gcr/corr_manifold.hpp"
#include "gcr/dataset.hpp"
#include "gcr/error.hpp"
#include "gcr/fitter.hpp"
#include "gcr/rng.hpp"
#include "gcr/stats.hpp"

namespace gcr {

// Standardized residuals eps_i = V_i^{-1/2} (y_i - mu_i) with the symmetric
// spectral inverse square root of V_i = A^{1/2} R_i A^{1/2}. Under a correct
// fit Var(eps_i) is approximately the identity.
inline std::vector<Eigen::VectorXd> standardized_residuals(
    const DesignBundle& designs, const FamilySpec& family,
    const Eigen::VectorXd& beta, const Eigen::VectorXd& alpha, double phi) {
  const auto states = detail::cluster_corr_states(designs, alpha);
  std::vector<Eigen::VectorXd> out;
  out.reserve(designs.n_clusters());
  for (int i = 0; i < designs.n_clusters(); ++i) {
    const detail::MeanState ms =
        detail::mean_state(designs.x[i], designs.y[i], family, beta, phi);
    const int m = designs.cluster_size(i);
    if (m == 1) {
      out.push_back(ms.nu);
      continue;
    }
    const Eigen::MatrixXd v = ms.sd.asDiagonal() * states[i].r * ms.sd.asDiagonal();
    out.push_back(sym_matrix_function(v, MatrixFunc::InvSqrt) *
                  (designs.y[i] - ms.mu));
  }
  return out;
}

inline std::vector<Eigen::VectorXd> standardized_residuals(
    const DesignBundle& designs, const FamilySpec& family, const FitResult& fit) {
  return standardized_residuals(designs, family, fit.beta, fit.alpha, fit.phi);
}

// A subgroup is a symmetric predicate over observation pairs: a cluster scope
// (within / between / all) plus AND-combined conditions on column values.
struct SubgroupSpec {
  enum class Scope { Within, Between, All };
  struct Cond {
    enum class Kind { Same, BothEq, AbsDiffEq } kind;
    std::string col;
    std::string value;  // BothEq: the level; AbsDiffEq: the difference
  };
  std::string name;
  Scope scope = Scope::Within;
  std::vector<Cond> conds;

  // "within", "between", "all", optionally followed by ":" and a list of
  // conditions joined with "&": same(col), botheq(col,v), absdiff_eq(col,k).
  static SubgroupSpec parse(const std::string& text);
};

inline SubgroupSpec SubgroupSpec::parse(const std::string& text) {
  SubgroupSpec spec;
  spec.name = text;
  std::string scope = text, rest;
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    scope = text.substr(0, colon);
    rest = text.substr(colon + 1);
  }
  scope = detail::trim(scope);
  if (scope == "within") spec.scope = Scope::Within;
  else if (scope == "between") spec.scope = Scope::Between;
  else if (scope == "all") spec.scope = Scope::All;
  else fail_data("subgroup scope must be within|between|all, got '" + scope + "'");

  size_t pos = 0;
  while (pos < rest.size()) {
    size_t amp = rest.find('&', pos);
    if (amp == std::string::npos) amp = rest.size();
    const std::string piece = detail::trim(rest.substr(pos, amp - pos));
    pos = amp + 1;
    if (piece.empty()) continue;
    const auto open = piece.find('(');
    if (open == std::string::npos || piece.back() != ')')
      fail_data("cannot parse subgroup condition '" + piece + "'");
    const std::string fn = detail::trim(piece.substr(0, open));
    const std::string args = piece.substr(open + 1, piece.size() - open - 2);
    Cond cond;
    if (fn == "same") {
      cond.kind = Cond::Kind::Same;
      cond.col = detail::trim(args);
    } else if (fn == "botheq" || fn == "absdiff_eq") {
      cond.kind = fn == "botheq" ? Cond::Kind::BothEq : Cond::Kind::AbsDiffEq;
      const auto comma = args.find(',');
      if (comma == std::string::npos)
        fail_data("condition '" + piece + "' needs two arguments");
      cond.col = detail::trim(args.substr(0, comma));
      cond.value = detail::trim(args.substr(comma + 1));
    } else {
      fail_data("unknown subgroup condition '" + fn + "'");
    }
    spec.conds.push_back(std::move(cond));
  }
  return spec;
}

struct SubgroupResult {
  std::string name;
  double rho_hat = 0.0;
  long long n_pairs = 0;
  double t_stat = 0.0;
  double p_value = 1.0;
  bool p_defined = true;
  bool subsampled = false;
};

namespace detail {

inline bool pair_matches(const ClusteredDataset& data,
                         const std::vector<SubgroupSpec::Cond>& conds, size_t a,
                         size_t b) {
  for (const auto& cond : conds) {
    const Column& col = data.column(cond.col);
    switch (cond.kind) {
      case SubgroupSpec::Cond::Kind::Same:
        if (!cells_equal(col, a, b)) return false;
        break;
      case SubgroupSpec::Cond::Kind::BothEq:
        if (!level_matches(col, a, cond.value) ||
            !level_matches(col, b, cond.value))
          return false;
        break;
      case SubgroupSpec::Cond::Kind::AbsDiffEq: {
        if (!col.numeric) fail_data("absdiff_eq needs a numeric column");
        double target;
        if (!parse_double(cond.value, target))
          fail_data("absdiff_eq value '" + cond.value + "' is not numeric");
        if (std::fabs(std::fabs(col.values[a] - col.values[b]) - target) > 1e-9)
          return false;
        break;
      }
    }
  }
  return true;
}

struct RunningMoments {
  long long n = 0;
  double sum = 0.0;
  double sumsq = 0.0;
  void add(double v) {
    ++n;
    sum += v;
    sumsq += v * v;
  }
};

}  // namespace detail

// Empirical subgroup correlation: the mean of eps_a * eps_b over qualifying
// unordered pairs (each counted once; the products are symmetric, so an
// ordered-sum average would be identical), with a one-sample t-test of the
// products against zero. Cross-cluster enumeration beyond `cap` pairs is
// subsampled uniformly (with replacement) from the seeded generator.
inline SubgroupResult subgroup_empirical_corr(
    const std::vector<Eigen::VectorXd>& residuals, const ClusteredDataset& data,
    const SubgroupSpec& spec, std::uint64_t seed = 0,
    long long cap = 5'000'000) {
  if (static_cast<int>(residuals.size()) != data.n_clusters())
    fail_data("residuals do not match the dataset");
  const int nc = data.n_clusters();
  detail::RunningMoments acc;
  bool subsampled = false;

  const bool want_within = spec.scope != SubgroupSpec::Scope::Between;
  const bool want_between = spec.scope != SubgroupSpec::Scope::Within;

  if (want_within) {
    for (int i = 0; i < nc; ++i) {
      const auto [begin, end] = data.span(i);
      const int m = static_cast<int>(end - begin);
      for (int j = 1; j < m; ++j)
        for (int k = 0; k < j; ++k) {
          if (!detail::pair_matches(data, spec.conds, begin + j, begin + k))
            continue;
          acc.add(residuals[i][j] * residuals[i][k]);
        }
    }
  }
  if (want_between) {
    const size_t n = data.n_obs();
    long long cross = 0;
    for (int i = 0; i < nc; ++i)
      cross += static_cast<long long>(data.cluster_size(i)) *
               static_cast<long long>(n - data.cluster_size(i));
    cross /= 2;
    if (cross <= cap) {
      for (int i = 0; i < nc; ++i) {
        const auto [bi, ei] = data.span(i);
        for (int t = i + 1; t < nc; ++t) {
          const auto [bt, et] = data.span(t);
          for (size_t a = bi; a < ei; ++a)
            for (size_t b = bt; b < et; ++b) {
              if (!detail::pair_matches(data, spec.conds, a, b)) continue;
              acc.add(residuals[i][a - bi] * residuals[t][b - bt]);
            }
        }
      }
    } else {
      subsampled = true;
      Philox rng(seed, 0x7375627361ULL);
      long long drawn = 0;
      while (drawn < cap) {
        const auto a = static_cast<size_t>(rng.uniform() * n);
        const auto b = static_cast<size_t>(rng.uniform() * n);
        if (a >= n || b >= n || a == b) continue;
        const int ca = data.cluster_of(a), cb = data.cluster_of(b);
        if (ca == cb) continue;
        ++drawn;
        if (!detail::pair_matches(data, spec.conds, a, b)) continue;
        acc.add(residuals[ca][a - data.span(ca).first] *
                residuals[cb][b - data.span(cb).first]);
      }
    }
  }

  if (acc.n == 0)
    fail_data("subgroup '" + spec.name + "' matched no observation pairs");

  SubgroupResult res;
  res.name = spec.name;
  res.subsampled = subsampled;
  res.n_pairs = acc.n;
  res.rho_hat = acc.sum / static_cast<double>(acc.n);
  if (acc.n < 2) {
    res.p_defined = false;
    res.p_value = std::numeric_limits<double>::quiet_NaN();
    res.t_stat = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  const double mean = res.rho_hat;
  const double var =
      std::max(0.0, (acc.sumsq - acc.n * mean * mean) / (acc.n - 1.0));
  if (var < 1e-300) {
    res.t_stat = mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    res.p_value = mean == 0.0 ? 1.0 : 0.0;
    return res;
  }
  res.t_stat = mean / std::sqrt(var / static_cast<double>(acc.n));
  res.p_value = t_test_pvalue(res.t_stat, static_cast<double>(acc.n - 1));
  return res;
}

}  // namespace gcr
