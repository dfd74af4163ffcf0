#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fdapred/lmm.hpp"
#include "fdapred/simulate.hpp"

using namespace fdapred;

namespace {

SubjectRecord visits(const std::string& id, const std::vector<double>& t,
                     const std::vector<double>& fvc,
                     const std::vector<double>& timp = {}) {
  SubjectRecord s;
  s.id = id;
  for (std::size_t i = 0; i < t.size(); ++i) {
    Observation o;
    o.time = t[i];
    o.values["FVC"] = fvc[i];
    if (!timp.empty()) o.values["TIMP"] = timp[i];
    s.observations.push_back(o);
  }
  return s;
}

LmmSpec null_spec() {
  LmmSpec spec;
  spec.outcome = "FVC";
  return spec;
}

}  // namespace

TEST_CASE("design construction: snapping, dropping, subject filter") {
  Dataset ds;
  ds.subjects.push_back(
      visits("a", {0.0, 5.5, 12.8}, {100, 95, 90}));   // 12.8 -> 12
  ds.subjects.push_back(visits("b", {0.0, 3.0}, {80, 78}));  // 3.0 dropped
  ds.subjects.push_back(visits("c", {0.0, 6.0}, {70, 69}));

  LmmDesign d = build_design(ds, null_spec());
  REQUIRE(d.blocks.size() == 2);  // b keeps one row only
  CHECK(d.fixed_effects == 2);
  CHECK(d.total_rows == 5);
  CHECK(d.blocks[0].id == "a");
  CHECK(d.blocks[0].x(1, 1) == 6.0);   // snapped time
  CHECK(d.blocks[0].x(2, 1) == 12.0);
  CHECK(d.blocks[0].z(0, 0) == 1.0);
  CHECK(d.blocks[0].z(2, 1) == 12.0);
}

TEST_CASE("design construction: biomarker column and log transform") {
  Dataset ds;
  ds.subjects.push_back(
      visits("a", {0.0, 6.0, 12.0}, {100, 95, 90}, {200, 150, 100}));
  ds.subjects.push_back(
      visits("b", {0.0, 6.0, 12.0}, {80, 78, 75}, {300, -1, 250}));

  LmmSpec spec = null_spec();
  spec.biomarker = "TIMP";
  LmmDesign d = build_design(ds, spec);
  REQUIRE(d.blocks.size() == 2);
  CHECK(d.fixed_effects == 3);
  CHECK(d.dropped_rows == 1);  // b's negative biomarker under log
  CHECK(d.blocks[0].x(0, 2) == doctest::Approx(std::log(200.0)));

  spec.log_biomarker = false;
  LmmDesign raw = build_design(ds, spec);
  CHECK(raw.dropped_rows == 0);
  CHECK(raw.blocks[0].x(0, 2) == doctest::Approx(200.0));
}

TEST_CASE("rescaled datasets are rejected") {
  Dataset ds;
  ds.subjects.push_back(visits("a", {0.0, 0.1}, {1, 2}));
  ds.time_scale = 60.0;
  CHECK_THROWS_AS(build_design(ds, null_spec()), DataError);
}

TEST_CASE("profiled likelihood reduces to OLS when random effects vanish") {
  Dataset ds;
  ds.subjects.push_back(visits("a", {0.0, 6.0, 12.0}, {100, 97, 93}));
  ds.subjects.push_back(visits("b", {0.0, 6.0, 12.0}, {82, 80, 75}));
  ds.subjects.push_back(visits("c", {0.0, 6.0}, {91, 88}));
  LmmDesign d = build_design(ds, null_spec());

  LmmLikelihood ll = profile_likelihood(d, Eigen::Matrix2d::Zero(), 1.0);

  Eigen::MatrixXd x(8, 2);
  Eigen::VectorXd y(8);
  int r = 0;
  for (const auto& b : d.blocks)
    for (int i = 0; i < b.y.size(); ++i, ++r) {
      x.row(r) = b.x.row(i);
      y(r) = b.y(i);
    }
  Eigen::VectorXd ols = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  CHECK((ll.beta - ols).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("profiled likelihood matches a dense multivariate normal oracle") {
  Dataset ds;
  ds.subjects.push_back(visits("a", {0.0, 6.0, 12.0}, {101.2, 96.4, 93.8}));
  ds.subjects.push_back(visits("b", {0.0, 12.0}, {84.1, 79.9}));
  LmmDesign d = build_design(ds, null_spec());

  Eigen::Matrix2d sigma;
  sigma << 9.0, 1.2, 1.2, 0.5;
  double s2 = 4.0;
  LmmLikelihood ll = profile_likelihood(d, sigma, s2);

  // oracle: GLS beta, then the exact Gaussian density per subject block
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  std::vector<Eigen::MatrixXd> vs;
  for (const auto& b : d.blocks) {
    Eigen::MatrixXd v =
        b.z * sigma * b.z.transpose() +
        s2 * Eigen::MatrixXd::Identity(b.y.size(), b.y.size());
    vs.push_back(v);
    Eigen::MatrixXd vinv = v.inverse();
    a += b.x.transpose() * vinv * b.x;
    rhs += b.x.transpose() * vinv * b.y;
  }
  Eigen::Vector2d beta = a.ldlt().solve(rhs);
  double nll = 0.0;
  for (std::size_t k = 0; k < d.blocks.size(); ++k) {
    const auto& b = d.blocks[k];
    Eigen::VectorXd r = b.y - b.x * beta;
    nll += 0.5 * (std::log(vs[k].determinant()) +
                  r.dot(vs[k].inverse() * r) +
                  b.y.size() * std::log(2.0 * M_PI));
  }
  CHECK(std::abs(ll.nll - nll) < 1e-10);
  CHECK((ll.beta - beta).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(ll.reml_logdet - std::log(a.determinant())) < 1e-10);
}

TEST_CASE("maximum likelihood recovers planted fixed effects") {
  LmmTruth truth;
  truth.subjects = 400;
  truth.seed = 17;
  Dataset ds = generate_lmm(truth);

  LmmSpec spec = null_spec();
  spec.biomarker = "TIMP";
  LmmFit fit = fit_ml(build_design(ds, spec));

  CHECK(fit.converged);
  CHECK(!fit.boundary);
  CHECK(fit.beta(0) == doctest::Approx(100.0).epsilon(0.05));
  CHECK(fit.beta(1) == doctest::Approx(-0.5).epsilon(0.35));
  CHECK(fit.beta(2) == doctest::Approx(-5.0).epsilon(0.2));
  CHECK(fit.residual_variance == doctest::Approx(25.0).epsilon(0.35));
  CHECK(fit.random_covariance(0, 0) == doctest::Approx(16.0).epsilon(0.5));
  CHECK(fit.rows > 0);
  CHECK(fit.subjects == 400);
}

TEST_CASE("fit is invariant to subject order and equivariant to scale") {
  LmmTruth truth;
  truth.subjects = 60;
  truth.seed = 2;
  Dataset ds = generate_lmm(truth);
  LmmSpec spec = null_spec();
  spec.biomarker = "TIMP";

  LmmFit base = fit_ml(build_design(ds, spec));

  Dataset shuffled = ds;
  std::reverse(shuffled.subjects.begin(), shuffled.subjects.end());
  LmmFit rev = fit_ml(build_design(shuffled, spec));
  CHECK((rev.beta - base.beta).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(rev.log_likelihood == doctest::Approx(base.log_likelihood));

  Dataset doubled = ds;
  for (auto& s : doubled.subjects)
    for (auto& o : s.observations) o.values["FVC"] *= 2.0;
  LmmFit twice = fit_ml(build_design(doubled, spec));
  CHECK((twice.beta - 2.0 * base.beta).cwiseAbs().maxCoeff() < 5e-3);
  CHECK(twice.residual_variance ==
        doctest::Approx(4.0 * base.residual_variance).epsilon(1e-2));
}

TEST_CASE("likelihood ratio test flags an informative biomarker") {
  LmmTruth truth;
  truth.subjects = 150;
  truth.seed = 5;
  Dataset ds = generate_lmm(truth);

  LmmSpec spec = null_spec();
  spec.biomarker = "TIMP";
  LmmComparison cmp = compare_with_null(ds, spec);
  CHECK(cmp.lrt.statistic > 0.0);
  CHECK(cmp.lrt.p_value < 0.01);
  CHECK(cmp.full.rows == cmp.null_fit.rows);
  CHECK(cmp.lrt.statistic ==
        doctest::Approx(2.0 * (cmp.full.log_likelihood -
                               cmp.null_fit.log_likelihood)));
}

TEST_CASE("likelihood ratio test is quiet when the biomarker is noise") {
  LmmTruth truth;
  truth.subjects = 150;
  truth.seed = 6;
  truth.include_biomarker_effect = false;
  Dataset ds = generate_lmm(truth);
  LmmSpec spec = null_spec();
  spec.biomarker = "TIMP";
  LmmComparison cmp = compare_with_null(ds, spec);
  CHECK(cmp.lrt.statistic >= 0.0);
  CHECK(cmp.lrt.p_value > 1e-4);
}

TEST_CASE("mismatched designs are rejected by the ratio test") {
  LmmFit a, b;
  a.rows = 10;
  b.rows = 12;
  CHECK_THROWS_AS(lrt_biomarker(a, b), DataError);
}

TEST_CASE("population prediction applies the fixed effects only") {
  LmmFit fit;
  fit.beta = Eigen::Vector3d(100.0, -0.5, -2.0);
  CHECK(predict_population(fit, 6.0, 3.0) ==
        doctest::Approx(100.0 - 3.0 - 6.0));
  LmmFit null_fit;
  null_fit.beta = Eigen::Vector2d(90.0, -1.0);
  CHECK(predict_population(null_fit, 12.0) == doctest::Approx(78.0));
}

TEST_CASE("leave-one-subject-out MSE: two constant subjects") {
  Dataset ds;
  ds.subjects.push_back(visits("a", {0.0, 6.0, 12.0}, {10, 10, 10}));
  ds.subjects.push_back(visits("b", {0.0, 6.0, 12.0}, {20, 20, 20}));
  LooCvResult cv = loo_cv_mse(ds, null_spec());
  // each fold fits a flat line on the other subject and misses by 10
  CHECK(cv.mse == doctest::Approx(100.0).epsilon(1e-6));
  CHECK(cv.skipped_folds == 0);
  CHECK(cv.rows_used == 6);
}

TEST_CASE("cross-validation prefers the model with the real predictor") {
  LmmTruth truth;
  truth.subjects = 120;
  truth.seed = 31;
  Dataset ds = generate_lmm(truth);
  LmmSpec full = null_spec();
  full.biomarker = "TIMP";
  LooCvResult with = loo_cv_mse(ds, full);
  LooCvResult without = loo_cv_mse(ds, null_spec());
  CHECK(with.mse < without.mse);
}
