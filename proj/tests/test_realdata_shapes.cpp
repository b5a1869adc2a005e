// The published study datasets are not shipped; these tests feed synthetic
// files of the same long-format shapes through the full pipeline to make sure
// the stated model formulas fit without error.
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "gcr/gcr.hpp"

namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("toenail-shaped longitudinal file fits the visit/time models") {
  std::mt19937 gen(101);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::ostringstream csv;
  csv << "patientID,outcome,treatment,time,visit\n";
  for (int pat = 1; pat <= 40; ++pat) {
    const int treatment = pat % 2;
    const int visits = 2 + int(ud(gen) * 5);
    double t = 0.0;
    for (int v = 1; v <= visits; ++v) {
      t += 0.5 + 3.5 * ud(gen);
      const int y = ud(gen) < 0.4 ? 1 : 0;
      csv << pat << "," << y << "," << treatment << "," << t << "," << v << "\n";
    }
  }
  const auto path = write_temp("gcr_toenail.csv", csv.str());
  const auto data = gcr::load_csv(path, "patientID", "outcome", "visit");
  REQUIRE(data.n_clusters() == 40);

  const auto mf = gcr::MeanFormula::parse("treatment + time + treatment:time");
  // treatment is constant within a patient, so a treatment-arm indicator
  // I(treatment = 1) is botheq(treatment, 1)
  for (const char* corr :
       {"intercept + botheq(treatment,1) + logabsdiff(visit)",
        "intercept + botheq(treatment,1) + logabsdiff(time)"}) {
    const auto designs =
        gcr::build_designs(data, mf, gcr::CorrFormula::parse(corr));
    REQUIRE(designs.p() == 4);
    REQUIRE(designs.d() == 3);
    const auto fit =
        gcr::fit_gcr(designs, gcr::FamilySpec::from_name("bernoulli"));
    CHECK(fit.converged);
    CHECK(std::isfinite(fit.alpha.sum()));
  }
}

TEST_CASE("prenatal-shaped multilevel file fits the family correlation model") {
  std::mt19937 gen(103);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::ostringstream csv;
  csv << "kid,mom,cluster,prenat,childAge,motherAge,birthOrd,indig,momEd,"
         "husEd,husEmpl,toilet,TV,pcInd81,ssDist\n";
  int kid = 0;
  for (int comm = 1; comm <= 30; ++comm) {
    const double pc = ud(gen), ss = ud(gen);
    const int mothers = 1 + int(ud(gen) * 3);
    for (int mth = 0; mth < mothers; ++mth) {
      const int mom = comm * 100 + mth;
      const int indig = int(ud(gen) * 3);
      const int momEd = int(ud(gen) * 3), husEd = int(ud(gen) * 3);
      const int husEmpl = int(ud(gen) * 5);
      const int toilet = ud(gen) < 0.5, tv = int(ud(gen) * 3);
      const int births = 1 + int(ud(gen) * 3);
      for (int b = 0; b < births; ++b) {
        csv << ++kid << "," << mom << "," << comm << "," << (ud(gen) < 0.5)
            << "," << (ud(gen) < 0.5) << "," << (ud(gen) < 0.5) << ","
            << int(ud(gen) * 4) << "," << indig << "," << momEd << "," << husEd
            << "," << husEmpl << "," << toilet << "," << tv << "," << pc << ","
            << ss << "\n";
      }
    }
  }
  const auto path = write_temp("gcr_prenatal.csv", csv.str());
  const auto data = gcr::load_csv(path, "cluster", "prenat");
  REQUIRE(data.n_clusters() == 30);

  const auto mf = gcr::MeanFormula::parse(
      "childAge + motherAge + C(birthOrd) + C(indig) + C(momEd) + C(husEd) + "
      "C(husEmpl) + toilet + C(TV) + pcInd81 + ssDist");
  const auto cf = gcr::CorrFormula::parse(
      "intercept + same(mom) + botheq(indig,0) + botheq(indig,1) + "
      "botheq(indig,2) + botheq(husEmpl,0) + botheq(husEmpl,1) + "
      "botheq(husEmpl,2) + botheq(husEmpl,3) + botheq(husEmpl,4)");
  const auto designs = gcr::build_designs(data, mf, cf);
  CHECK(designs.p() == 1 + 2 + 3 + 2 + 2 + 2 + 4 + 1 + 2 + 2);
  CHECK(designs.d() == 10);
  gcr::FitConfig cfg;
  cfg.outer_max = 60;
  const auto fit = gcr::fit_gcr(designs, gcr::FamilySpec::from_name("bernoulli"), cfg);
  CHECK(std::isfinite(fit.alpha.sum()));
  CHECK(std::isfinite(fit.beta.sum()));

  // residual diagnostics on typical subgroup specs run end to end
  const auto eps = gcr::standardized_residuals(
      designs, gcr::FamilySpec::from_name("bernoulli"), fit);
  for (const char* sub : {"within", "between", "within:same(mom)",
                          "within:botheq(indig,2)", "within:absdiff_eq(momEd,1)"}) {
    const auto res = gcr::subgroup_empirical_corr(eps, data,
                                                  gcr::SubgroupSpec::parse(sub));
    CHECK(std::isfinite(res.rho_hat));
  }
}

TEST_CASE("grouse-ticks-shaped count file fits the brood model") {
  std::mt19937 gen(107);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::ostringstream csv;
  csv << "Index,Ticks,Brood,Location,cHeight,Year\n";
  int index = 0;
  for (int loc = 1; loc <= 25; ++loc) {
    const double height = -50 + 100 * ud(gen);
    const int broods = 1 + int(ud(gen) * 2);
    for (int b = 0; b < broods; ++b) {
      const int brood = loc * 10 + b;
      const int chicks = 1 + int(ud(gen) * 3);
      for (int c = 0; c < chicks; ++c) {
        csv << ++index << "," << int(ud(gen) * 8) << "," << brood << "," << loc
            << "," << height << "," << int(ud(gen) * 3) << "\n";
      }
    }
  }
  const auto path = write_temp("gcr_ticks.csv", csv.str());
  const auto data = gcr::load_csv(path, "Location", "Ticks");
  const auto designs = gcr::build_designs(
      data, gcr::MeanFormula::parse("cHeight + C(Year)"),
      gcr::CorrFormula::parse("intercept + same(Brood)"));
  REQUIRE(designs.p() == 4);
  REQUIRE(designs.d() == 2);
  const auto fit = gcr::fit_gcr(designs, gcr::FamilySpec::from_name("poisson"));
  CHECK(std::isfinite(fit.alpha.sum()));
  CHECK(std::isfinite(fit.beta.sum()));
}
