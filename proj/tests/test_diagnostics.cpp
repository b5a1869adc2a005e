#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gcr/diagnostics.hpp"
#include "oracles.hpp"

using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
const gcr::FamilySpec kGaussian = gcr::FamilySpec::from_name("gaussian");

gcr::ClusteredDataset residual_dataset(const std::vector<std::vector<double>>& ys) {
  std::vector<std::string> cl;
  std::vector<double> y;
  gcr::Column g;
  int c = 0;
  for (const auto& cluster : ys) {
    for (double v : cluster) {
      cl.push_back("c" + std::to_string(c));
      y.push_back(v);
      g.raw.push_back(c % 2 ? "a" : "b");
    }
    ++c;
  }
  return gcr::ClusteredDataset::from_rows(cl, y, {{"g", g}});
}

}  // namespace

TEST_CASE("standardized residuals reduce to pearson residuals at R = I") {
  std::mt19937 gen(47);
  auto prob = oracle::random_problem(kGaussian, 10, 4, gen);
  const auto& d = prob.designs;
  const VectorXd beta = VectorXd::Zero(d.p());
  const auto eps = gcr::standardized_residuals(d, kGaussian, beta,
                                               VectorXd::Zero(d.d()), 1.0);
  for (int i = 0; i < d.n_clusters(); ++i) {
    for (Eigen::Index j = 0; j < d.y[i].size(); ++j) {
      const double eta = d.x[i].row(j) * beta;
      CHECK(eps[i][j] ==
            Approx(gcr::pearson_residual(kGaussian, d.y[i][j], eta, 1.0))
                .epsilon(1e-10));
    }
  }
}

TEST_CASE("size-1 cluster residual is the scalar pearson residual") {
  auto data = residual_dataset({{2.0}});
  auto d = gcr::build_designs(data, gcr::MeanFormula::parse(""),
                              gcr::CorrFormula::parse("intercept"));
  const auto eps = gcr::standardized_residuals(d, kGaussian, VectorXd::Zero(1),
                                               VectorXd::Zero(1), 4.0);
  CHECK(eps[0][0] == Approx(2.0 / 2.0));  // (y - 0)/sqrt(phi * 1)
}

TEST_CASE("subgroup correlation by hand enumeration") {
  // residuals {(1,1),(1,-1),(2)}: within-cluster rho = (1 - 1)/2 = 0
  std::vector<VectorXd> resid;
  resid.push_back((VectorXd(2) << 1, 1).finished());
  resid.push_back((VectorXd(2) << 1, -1).finished());
  resid.push_back((VectorXd(1) << 2).finished());
  auto data = residual_dataset({{1, 1}, {1, -1}, {2}});
  const auto spec = gcr::SubgroupSpec::parse("within");
  const auto res = gcr::subgroup_empirical_corr(resid, data, spec);
  CHECK(res.n_pairs == 2);
  CHECK(res.rho_hat == Approx(0.0).margin(1e-14));
}

TEST_CASE("degenerate subgroup cases") {
  // all-zero residuals: rho = 0, p = 1
  std::vector<VectorXd> zeros;
  zeros.push_back(VectorXd::Zero(2));
  zeros.push_back(VectorXd::Zero(2));
  auto data = residual_dataset({{0, 0}, {0, 0}});
  const auto res = gcr::subgroup_empirical_corr(
      zeros, data, gcr::SubgroupSpec::parse("within"));
  CHECK(res.rho_hat == 0.0);
  CHECK(res.p_value == 1.0);

  // a single pair: t-test undefined
  std::vector<VectorXd> one;
  one.push_back((VectorXd(2) << 1, 1).finished());
  one.push_back((VectorXd(1) << -1).finished());
  auto data2 = residual_dataset({{1, 1}, {-1}});
  const auto res2 = gcr::subgroup_empirical_corr(
      one, data2, gcr::SubgroupSpec::parse("within"));
  CHECK(res2.n_pairs == 1);
  CHECK(res2.rho_hat == Approx(1.0));
  CHECK_FALSE(res2.p_defined);

  // empty subgroup is an error naming the spec
  CHECK_THROWS_WITH(
      gcr::subgroup_empirical_corr(one, data2,
                                   gcr::SubgroupSpec::parse("within:botheq(g,zzz)")),
      Catch::Matchers::ContainsSubstring("botheq(g,zzz)"));
}

TEST_CASE("pair counting matches brute force and conditions filter pairs") {
  std::mt19937 gen(53);
  std::normal_distribution<double> nd(0.0, 1.0);
  // 4 clusters of sizes 3,2,2,1 with a binary column
  std::vector<std::vector<double>> ys = {{1, 2, 3}, {4, 5}, {6, 7}, {8}};
  auto data = residual_dataset(ys);
  std::vector<VectorXd> resid;
  for (const auto& c : ys) {
    VectorXd v(c.size());
    for (size_t j = 0; j < c.size(); ++j) v[j] = nd(gen);
    resid.push_back(v);
  }
  const auto within =
      gcr::subgroup_empirical_corr(resid, data, gcr::SubgroupSpec::parse("within"));
  CHECK(within.n_pairs == 3 + 1 + 1);
  const auto between =
      gcr::subgroup_empirical_corr(resid, data, gcr::SubgroupSpec::parse("between"));
  const long long total = 8 * 7 / 2;
  CHECK(between.n_pairs == total - 5);
  const auto all =
      gcr::subgroup_empirical_corr(resid, data, gcr::SubgroupSpec::parse("all"));
  CHECK(all.n_pairs == total);
  // same(g): clusters 0 and 2 share level "b"; cluster 1 and 3 share "a"
  const auto same_g = gcr::subgroup_empirical_corr(
      resid, data, gcr::SubgroupSpec::parse("between:same(g)"));
  // cross pairs with equal g: c0 x c2 (3*2) + c1 x c3 (2*1)
  CHECK(same_g.n_pairs == 6 + 2);
}

TEST_CASE("misfit detection: independence fit leaves residual correlation") {
  // strongly exchangeable data, independence (frozen-alpha) fit
  std::mt19937 gen(59);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int n = 80, m = 4;
  MatrixXd r = MatrixXd::Constant(m, m, 0.5);
  r.diagonal().setOnes();
  Eigen::LLT<MatrixXd> llt(r);
  std::vector<std::string> cl;
  std::vector<double> y;
  gcr::Column x;
  for (int i = 0; i < n; ++i) {
    VectorXd z(m);
    for (int j = 0; j < m; ++j) z[j] = nd(gen);
    const VectorXd draw = llt.matrixL() * z;
    for (int j = 0; j < m; ++j) {
      cl.push_back("c" + std::to_string(i));
      y.push_back(draw[j]);
      x.raw.push_back("0");
    }
  }
  auto data = gcr::ClusteredDataset::from_rows(cl, y, {{"x", x}});
  auto designs = gcr::build_designs(data, gcr::MeanFormula::parse(""),
                                    gcr::CorrFormula::parse("intercept"));
  gcr::FitConfig frozen;
  frozen.freeze_alpha = true;
  const auto fit_ind = gcr::fit_gcr(designs, kGaussian, frozen);
  const auto eps_ind = gcr::standardized_residuals(designs, kGaussian, fit_ind);
  const auto bad = gcr::subgroup_empirical_corr(
      eps_ind, data, gcr::SubgroupSpec::parse("within"));
  CHECK(bad.rho_hat > 0.3);
  CHECK(bad.p_value < 0.01);

  // the correctly specified fit removes it
  const auto fit_ok = gcr::fit_gcr(designs, kGaussian);
  const auto eps_ok = gcr::standardized_residuals(designs, kGaussian, fit_ok);
  const auto good = gcr::subgroup_empirical_corr(
      eps_ok, data, gcr::SubgroupSpec::parse("within"));
  CHECK(std::fabs(good.rho_hat) < 0.1);
}

TEST_CASE("subgroup spec parsing") {
  const auto s1 = gcr::SubgroupSpec::parse("within:same(mom)");
  CHECK(s1.scope == gcr::SubgroupSpec::Scope::Within);
  REQUIRE(s1.conds.size() == 1);
  CHECK(s1.conds[0].col == "mom");
  const auto s2 = gcr::SubgroupSpec::parse("within:botheq(indig,2)");
  CHECK(s2.conds[0].kind == gcr::SubgroupSpec::Cond::Kind::BothEq);
  CHECK(s2.conds[0].value == "2");
  const auto s3 = gcr::SubgroupSpec::parse("within:absdiff_eq(momEd,1) & same(mom)");
  CHECK(s3.conds.size() == 2);
  CHECK_THROWS_AS(gcr::SubgroupSpec::parse("sideways"), gcr::Error);
  CHECK_THROWS_AS(gcr::SubgroupSpec::parse("within:frob(x)"), gcr::Error);
}
