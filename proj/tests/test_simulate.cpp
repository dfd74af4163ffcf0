#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fdapred/simulate.hpp"
#include "fdapred/stats.hpp"

using namespace fdapred;

namespace {

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.subjects.size() != b.subjects.size()) return false;
  for (std::size_t i = 0; i < a.subjects.size(); ++i) {
    if (a.subjects[i].id != b.subjects[i].id) return false;
    if (a.subjects[i].observations.size() !=
        b.subjects[i].observations.size())
      return false;
    for (std::size_t j = 0; j < a.subjects[i].observations.size(); ++j) {
      if (a.subjects[i].observations[j].time !=
          b.subjects[i].observations[j].time)
        return false;
      if (a.subjects[i].observations[j].values !=
          b.subjects[i].observations[j].values)
        return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("eigenfunction families are orthonormal") {
  SimTruth fourier;
  CHECK_NOTHROW(fourier.validate());

  SimTruth legendre;
  legendre.eigen_family = "legendre";
  CHECK_NOTHROW(legendre.validate());

  for (const auto& family : {std::string("fourier"), std::string("legendre")}) {
    SimTruth t;
    t.eigen_family = family;
    t.eigenvalues = Eigen::Vector3d(9.0, 4.0, 1.0);
    for (int a = 1; a <= 3; ++a)
      for (int b = 1; b <= 3; ++b) {
        double q = stats::integrate_gl6(
            [&](double u) {
              return t.eigenfunction_at(a, u) * t.eigenfunction_at(b, u);
            },
            0.0, 1.0, 256);
        CHECK(q == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-8));
      }
  }
}

TEST_CASE("degenerate truths are rejected") {
  SimTruth ascending;
  ascending.eigenvalues = Eigen::Vector2d(1.0, 2.0);
  CHECK_THROWS_AS(ascending.validate(), ConfigError);

  SimTruth unknown;
  unknown.eigen_family = "chebyshev";
  CHECK_THROWS_AS(unknown.validate(), ConfigError);

  SimTruth negative;
  negative.noise_variance = -1.0;
  CHECK_THROWS_AS(negative.validate(), ConfigError);
}

TEST_CASE("generation is deterministic in the seed") {
  SimTruth truth;
  truth.subjects = 40;
  truth.seed = 7;
  SimOutput a = generate(truth);
  SimOutput b = generate(truth);
  CHECK(datasets_equal(a.dataset, b.dataset));
  CHECK((a.true_scores - b.true_scores).norm() == 0.0);

  truth.seed = 8;
  SimOutput c = generate(truth);
  CHECK(!datasets_equal(a.dataset, c.dataset));
}

TEST_CASE("per-subject streams are independent of the cohort size") {
  SimTruth small;
  small.subjects = 10;
  SimTruth big = small;
  big.subjects = 25;
  SimOutput a = generate(small);
  SimOutput b = generate(big);
  for (int i = 0; i < 10; ++i) {
    CHECK(a.dataset.subjects[i].id == b.dataset.subjects[i].id);
    CHECK(a.dataset.subjects[i].observations.size() ==
          b.dataset.subjects[i].observations.size());
    for (std::size_t j = 0; j < a.dataset.subjects[i].observations.size();
         ++j)
      CHECK(a.dataset.subjects[i].observations[j].values ==
            b.dataset.subjects[i].observations[j].values);
  }
}

TEST_CASE("visit schedule invariants") {
  SimTruth truth;
  truth.subjects = 200;
  truth.seed = 3;
  SimOutput out = generate(truth);
  REQUIRE(out.dataset.subjects.size() == 200);
  for (const auto& s : out.dataset.subjects) {
    CHECK(s.observations.size() >= 2);
    double prev = -1.0;
    for (const auto& o : s.observations) {
      CHECK(o.time > prev);
      prev = o.time;
      CHECK(o.time >= 0.0);
      CHECK(o.time <= truth.horizon_months);
      // jittered visits stay within a month of the 6-month grid
      double nearest =
          std::round(o.time / truth.visit_step_months) *
          truth.visit_step_months;
      double slack = truth.jitter_months + 1e-9;
      CHECK(std::abs(o.time - std::clamp(nearest, 0.0,
                                         truth.horizon_months)) <= slack);
      CHECK(o.has("FVC"));
    }
  }
}

TEST_CASE("Monte Carlo moments match the planted truth") {
  SimTruth truth;
  truth.subjects = 4000;
  truth.seed = 19;
  SimOutput out = generate(truth);

  // score variances approach the planted eigenvalues
  for (int l = 0; l < 2; ++l) {
    double mean = out.true_scores.col(l).mean();
    double var =
        (out.true_scores.col(l).array() - mean).square().sum() /
        (truth.subjects - 1);
    CHECK(std::abs(mean) < 3.0 * std::sqrt(truth.eigenvalues(l) /
                                           truth.subjects));
    CHECK(var == doctest::Approx(truth.eigenvalues(l)).epsilon(0.1));
  }

  // scores across components are uncorrelated
  double cross = (out.true_scores.col(0).array() -
                  out.true_scores.col(0).mean())
                     .cwiseProduct(out.true_scores.col(1).array() -
                                   out.true_scores.col(1).mean())
                     .sum() /
                 (truth.subjects - 1);
  CHECK(std::abs(cross) < 0.05 * std::sqrt(truth.eigenvalues(0) *
                                           truth.eigenvalues(1)));

  // measurement noise variance around the noiseless signal
  double sse = 0.0;
  int n = 0;
  for (int i = 0; i < truth.subjects; ++i) {
    const auto& s = out.dataset.subjects[i];
    for (const auto& o : s.observations) {
      double t = o.time / truth.horizon_months;
      double signal = truth.mean_at(t);
      for (int l = 1; l <= 2; ++l)
        signal += out.true_scores(i, l - 1) * truth.eigenfunction_at(l, t);
      double e = *o.value("FVC") - signal;
      sse += e * e;
      ++n;
    }
  }
  CHECK(sse / n == doctest::Approx(truth.noise_variance).epsilon(0.05));
}

TEST_CASE("mixed-model generator: determinism and planted moments") {
  LmmTruth truth;
  truth.subjects = 3000;
  truth.seed = 23;
  Dataset a = generate_lmm(truth);
  Dataset b = generate_lmm(truth);
  CHECK(datasets_equal(a, b));

  // E[y | t=0] = beta0 + beta2 * E[log biomarker]
  double sum0 = 0.0;
  int n0 = 0;
  for (const auto& s : a.subjects)
    for (const auto& o : s.observations)
      if (o.time == 0.0) {
        sum0 += *o.value("FVC");
        ++n0;
      }
  REQUIRE(n0 > 1000);
  double expected = truth.beta(0) + truth.beta(2) * truth.biomarker_log_mean;
  CHECK(sum0 / n0 == doctest::Approx(expected).epsilon(0.01));

  for (const auto& s : a.subjects) {
    CHECK(s.observations.size() >= 2);
    for (const auto& o : s.observations) {
      CHECK((o.time == 0.0 || o.time == 6.0 || o.time == 12.0));
      CHECK(o.has("TIMP"));
      CHECK(*o.value("TIMP") > 0.0);
    }
  }
}
