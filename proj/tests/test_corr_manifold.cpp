#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gcr/corr_manifold.hpp"
#include "oracles.hpp"

using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd corr2(double rho) {
  MatrixXd r(2, 2);
  r << 1.0, rho, rho, 1.0;
  return r;
}

}  // namespace

TEST_CASE("sym_matrix_function identities") {
  const MatrixXd i3 = MatrixXd::Identity(3, 3);
  CHECK(gcr::sym_matrix_function(i3, gcr::MatrixFunc::Log).cwiseAbs().maxCoeff() ==
        Approx(0.0).margin(1e-14));
  CHECK((gcr::sym_matrix_function(MatrixXd::Zero(3, 3), gcr::MatrixFunc::Exp) - i3)
            .cwiseAbs()
            .maxCoeff() == Approx(0.0).margin(1e-14));

  // closed form: eigenvalues 1 +- rho give off-diagonal atanh(rho)
  const MatrixXd lg = gcr::sym_matrix_function(corr2(0.6), gcr::MatrixFunc::Log);
  CHECK(lg(1, 0) == Approx(std::log(2.0)).epsilon(1e-10));
  CHECK(lg(1, 0) == Approx(oracle::spectral_log(corr2(0.6))(1, 0)).epsilon(1e-12));
}

TEST_CASE("sym_matrix_function exp(log) round trip on PD inputs") {
  std::mt19937 gen(11);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd r = oracle::random_corr(5, gen);
    const MatrixXd back = gcr::sym_matrix_function(
        gcr::sym_matrix_function(r, gcr::MatrixFunc::Log), gcr::MatrixFunc::Exp);
    CHECK((back - r).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("sym_matrix_function error paths") {
  MatrixXd bad(2, 2);
  bad << 1.0, 0.5, 0.2, 1.0;
  CHECK_THROWS_AS(gcr::sym_matrix_function(bad, gcr::MatrixFunc::Log), gcr::Error);

  MatrixXd npd(2, 2);
  npd << 1.0, 2.0, 2.0, 1.0;  // eigenvalues -1 and 3
  CHECK_THROWS_WITH(gcr::sym_matrix_function(npd, gcr::MatrixFunc::Log),
                    Catch::Matchers::ContainsSubstring("smallest eigenvalue"));
  CHECK_THROWS_AS(gcr::sym_matrix_function(npd, gcr::MatrixFunc::InvSqrt),
                  gcr::Error);
  CHECK_NOTHROW(gcr::sym_matrix_function(npd, gcr::MatrixFunc::Exp));
}

TEST_CASE("gz_transform basic examples") {
  CHECK(gcr::gz_transform(MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <
        1e-14);
  const VectorXd g = gcr::gz_transform(corr2(0.6));
  REQUIRE(g.size() == 1);
  CHECK(g[0] == Approx(std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("gz_transform reduces to Fisher z for m = 2") {
  for (double rho : {-0.95, -0.5, 0.0, 0.5, 0.95}) {
    const VectorXd g = gcr::gz_transform(corr2(rho));
    CHECK(std::fabs(g[0] - std::atanh(rho)) < 1e-10);
  }
}

TEST_CASE("gz_transform is order-invariant") {
  std::mt19937 gen(23);
  const int m = 5;
  const MatrixXd r = oracle::random_corr(m, gen);
  // a fixed permutation
  std::vector<int> perm = {3, 0, 4, 1, 2};
  MatrixXd pr(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) pr(i, j) = r(perm[i], perm[j]);
  const MatrixXd lg = gcr::unvecl_sym(gcr::gz_transform(r), m) ;
  const MatrixXd lg_full = oracle::spectral_log(r);
  const VectorXd gp = gcr::gz_transform(pr);
  gcr::for_each_pair(m, [&](int j, int k, int idx) {
    CHECK(std::fabs(gp[idx] - lg_full(perm[j], perm[k])) < 1e-10);
  });
  (void)lg;
}

TEST_CASE("gz_inverse basic examples") {
  CHECK((gcr::gz_inverse(VectorXd::Zero(3), 3) - MatrixXd::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  VectorXd g(1);
  g << std::log(2.0);
  const MatrixXd r = gcr::gz_inverse(g);
  CHECK(r(1, 0) == Approx(0.6).epsilon(1e-10));
  CHECK(r(0, 0) == Approx(1.0).margin(1e-12));
}

TEST_CASE("gz round trip on random correlation matrices") {
  std::mt19937 gen(37);
  std::uniform_int_distribution<int> md(2, 12);
  for (int t = 0; t < 100; ++t) {
    const int m = md(gen);
    const MatrixXd r = oracle::random_corr(m, gen);
    const MatrixXd back = gcr::gz_inverse(gcr::gz_transform(r), m);
    CHECK((back - r).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("gz_inverse rejects non-vecl lengths and non-finite input") {
  CHECK_THROWS_AS(gcr::gz_inverse(VectorXd::Zero(4)), gcr::Error);
  VectorXd bad(1);
  bad << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(gcr::gz_inverse(bad), gcr::Error);
}

TEST_CASE("jacobian at the identity is the identity") {
  for (int m : {2, 3, 5}) {
    const MatrixXd jac = gcr::jacobian_rho_gamma(MatrixXd::Identity(m, m));
    CHECK((jac - MatrixXd::Identity(jac.rows(), jac.cols())).cwiseAbs().maxCoeff() <
          1e-10);
  }
}

TEST_CASE("jacobian matches the 2x2 closed form 1 - rho^2") {
  const MatrixXd jac = gcr::jacobian_rho_gamma(corr2(0.6));
  REQUIRE(jac.rows() == 1);
  CHECK(jac(0, 0) == Approx(0.64).epsilon(1e-8));
}

TEST_CASE("jacobian matches finite differences of gz_inverse") {
  std::mt19937 gen(53);
  for (int t = 0; t < 8; ++t) {
    const int m = 3 + t % 4;
    const MatrixXd r = oracle::random_corr(m, gen);
    const VectorXd gamma = gcr::gz_transform(r);
    const MatrixXd jac = gcr::jacobian_rho_gamma(r);
    const MatrixXd fd = oracle::fd_jacobian(
        [&](const VectorXd& g) { return gcr::vecl(gcr::gz_inverse(g, m)); }, gamma,
        1e-6);
    const double denom = std::max(1.0, fd.cwiseAbs().maxCoeff());
    CHECK((jac - fd).cwiseAbs().maxCoeff() / denom < 1e-6);
    CHECK(jac.diagonal().minCoeff() >= -1e-12);
  }
}

TEST_CASE("corr_sensitivity agrees with explicit Jacobian times W") {
  std::mt19937 gen(71);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int m = 6;
  const MatrixXd r = oracle::random_corr(m, gen);
  const auto st = gcr::corr_state_from_matrix(r);
  MatrixXd w(gcr::vecl_size(m), 3);
  for (int i = 0; i < w.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) w(i, j) = nd(gen);
  const MatrixXd fast = gcr::corr_sensitivity(st, w);
  const MatrixXd full = gcr::jacobian_rho_gamma(st) * w;
  CHECK((fast - full).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fixed point residual reaches tolerance quickly") {
  std::mt19937 gen(89);
  std::normal_distribution<double> nd(0.0, 0.4);
  for (int t = 0; t < 20; ++t) {
    const int m = 2 + t % 9;
    VectorXd gamma(gcr::vecl_size(m));
    for (int i = 0; i < gamma.size(); ++i) gamma[i] = nd(gen);
    const MatrixXd r = gcr::gz_inverse(gamma, m);
    CHECK((r.diagonal().array() - 1.0).abs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(r);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    // the round trip closes
    CHECK((gcr::gz_transform(r) - gamma).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("require_corr_matrix rejects invalid inputs") {
  MatrixXd r = corr2(0.5);
  r(0, 0) = 1.5;
  CHECK_THROWS_AS(gcr::gz_transform(r), gcr::Error);
  MatrixXd sing = MatrixXd::Ones(3, 3);  // rank one, eigenvalues {3,0,0}
  CHECK_THROWS_AS(gcr::gz_transform(sing), gcr::Error);
}
