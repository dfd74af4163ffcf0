#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fdapred/cleaning.hpp"
#include "fdapred/csv.hpp"

using namespace fdapred;

namespace {

Dataset ingest_text(const std::string& text) {
  std::istringstream in(text);
  return ingest_csv_stream(in, default_column_map(), "<test>");
}

Observation obs(double t, std::map<std::string, double> values) {
  Observation o;
  o.time = t;
  o.values = std::move(values);
  return o;
}

std::map<std::string, double> full_visit(double fvc) {
  return {{"FVC", fvc}, {"TLC", 80.0},  {"DLCO", 70.0}, {"TIMP", 200.0},
          {"P3NP", 8.0}, {"HA", 50.0}, {"NT", 300.0}};
}

Dataset make_complete(int subjects, int visits) {
  Dataset ds;
  for (int i = 0; i < subjects; ++i) {
    SubjectRecord s;
    s.id = "s" + std::to_string(i);
    for (int j = 0; j < visits; ++j)
      s.observations.push_back(obs(6.0 * j, full_visit(100.0 - j)));
    ds.subjects.push_back(s);
  }
  return ds;
}

}  // namespace

TEST_CASE("csv ingest: values, missing cells, ordering") {
  Dataset ds = ingest_text(
      "id,time,FVC,TLC,DLCO,TIMP,P3NP,HA,NT\n"
      "a,0,95.5,,70,200,8,50,300\n"
      "a,6,90,,NA,210,9,55,310\n"
      "b,12,85,75,65,,,,\n");
  REQUIRE(ds.subjects.size() == 2);
  CHECK(ds.subjects[0].id == "a");
  CHECK(ds.subjects[0].observations.size() == 2);
  CHECK(*ds.subjects[0].observations[0].value("FVC") == doctest::Approx(95.5));
  CHECK(!ds.subjects[0].observations[0].has("TLC"));
  CHECK(!ds.subjects[0].observations[1].has("DLCO"));
  CHECK(ds.subjects[1].observations[0].time == 12.0);
  CHECK(!ds.subjects[1].observations[0].has("TIMP"));
}

TEST_CASE("csv ingest: observations sorted by time per subject") {
  Dataset ds = ingest_text(
      "id,time,FVC,TLC,DLCO,TIMP,P3NP,HA,NT\n"
      "a,12,80,,,,,,\n"
      "a,0,95,,,,,,\n");
  REQUIRE(ds.subjects[0].observations.size() == 2);
  CHECK(ds.subjects[0].observations[0].time == 0.0);
  CHECK(ds.subjects[0].observations[1].time == 12.0);
}

TEST_CASE("csv ingest errors") {
  CHECK_THROWS_AS(ingest_text("id,FVC\n"), DataError);  // missing time column
  CHECK_THROWS_AS(ingest_text("id,time,FVC,TLC,DLCO,TIMP,P3NP,HA,NT\n"
                              "a,0,xyz,,,,,,\n"),
                  DataError);
  // duplicate (subject, time)
  CHECK_THROWS_AS(ingest_text("id,time,FVC,TLC,DLCO,TIMP,P3NP,HA,NT\n"
                              "a,0,95,,,,,,\n"
                              "a,0,94,,,,,,\n"),
                  DataError);
  // parse error names the row
  try {
    ingest_text("id,time,FVC,TLC,DLCO,TIMP,P3NP,HA,NT\n"
                "a,0,95,,,,,,\n"
                "a,6,bad,,,,,,\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("csv write/ingest round trip") {
  Dataset ds = make_complete(3, 4);
  ds.subjects[1].observations[2].values.erase("HA");
  const std::string path = "roundtrip_test.csv";
  write_csv(ds, default_column_map(), path);
  Dataset back = ingest_csv(path, default_column_map());
  REQUIRE(back.subjects.size() == ds.subjects.size());
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
    REQUIRE(back.subjects[i].observations.size() ==
            ds.subjects[i].observations.size());
    for (std::size_t j = 0; j < ds.subjects[i].observations.size(); ++j) {
      CHECK(back.subjects[i].observations[j].time ==
            ds.subjects[i].observations[j].time);
      CHECK(back.subjects[i].observations[j].values ==
            ds.subjects[i].observations[j].values);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("cleaning: threshold rules, scopes and actions") {
  Dataset ds = make_complete(4, 3);
  // s0: baseline TIMP above 500 -> patient removed
  ds.subjects[0].observations[0].values["TIMP"] = 600.0;
  // s1: one FVC observation below 50 -> observation removed
  ds.subjects[1].observations[1].values["FVC"] = 40.0;
  // s2: late TIMP spike; baseline fine -> untouched by the baseline rule
  ds.subjects[2].observations[2].values["TIMP"] = 700.0;

  CleaningConfig cfg;
  cfg.rules = default_cleaning_rules();
  cfg.modeled_variables.clear();  // isolate the rule behavior
  Dataset out = apply_cleaning(ds, cfg);

  CHECK(out.find("s0") == nullptr);
  REQUIRE(out.find("s1") != nullptr);
  CHECK(out.find("s1")->observations.size() == 2);
  REQUIRE(out.find("s2") != nullptr);
  CHECK(out.find("s2")->observations.size() == 3);
  CHECK(out.find("s3")->observations.size() == 3);

  // one provenance entry per rule plus horizon and min-obs stages
  CHECK(out.provenance.size() == default_cleaning_rules().size() + 2);
  int total_removed = 0;
  for (const auto& e : out.provenance)
    total_removed += e.observations_before - e.observations_after;
  CHECK(total_removed == 4);  // 3 from s0, 1 from s1
}

TEST_CASE("cleaning: missing-value pass, horizon and minimum visits") {
  Dataset ds = make_complete(3, 3);
  ds.subjects[0].observations[1].values.erase("NT");  // incomplete visit
  ds.subjects[1].observations.push_back(obs(90.0, full_visit(70.0)));
  // s2 keeps one visit only after the missing-value pass -> dropped
  ds.subjects[2].observations[0].values.erase("FVC");
  ds.subjects[2].observations[2].values.erase("HA");

  CleaningConfig cfg;
  cfg.rules.clear();
  Dataset out = apply_cleaning(ds, cfg);

  CHECK(out.find("s0")->observations.size() == 2);
  CHECK(out.find("s1")->observations.size() == 3);  // 90-month visit cut
  CHECK(out.find("s2") == nullptr);
  for (const auto& s : out.subjects)
    for (const auto& o : s.observations) CHECK(o.time <= 60.0);
}

TEST_CASE("rescale_time: [0,1] with the month scale kept") {
  Dataset ds = make_complete(2, 3);
  Dataset r = rescale_time(ds, 60.0);
  CHECK(r.rescaled());
  CHECK(r.time_scale == 60.0);
  CHECK(r.subjects[0].observations[1].time == doctest::Approx(0.1));
  CHECK(r.months(r.subjects[0].observations[2].time) == doctest::Approx(12.0));

  Dataset late = make_complete(1, 1);
  late.subjects[0].observations[0].time = 61.0;
  CHECK_THROWS_AS(rescale_time(late, 60.0), DataError);
}

TEST_CASE("describe_baseline: hand-computed moments") {
  Dataset ds;
  double fvc[3] = {90.0, 100.0, 110.0};
  double tlc[3] = {70.0, 75.0, 95.0};
  for (int i = 0; i < 3; ++i) {
    SubjectRecord s;
    s.id = "s" + std::to_string(i);
    s.observations.push_back(obs(0.0, {{"FVC", fvc[i]}, {"TLC", tlc[i]}}));
    s.observations.push_back(obs(6.0, {{"FVC", 0.0}}));  // not baseline
    ds.subjects.push_back(s);
  }
  BaselineSummary b = describe_baseline(ds);
  auto idx = [&](const std::string& v) {
    for (std::size_t k = 0; k < b.variables.size(); ++k)
      if (b.variables[k] == v) return static_cast<int>(k);
    return -1;
  };
  int f = idx("FVC"), t = idx("TLC");
  REQUIRE(f >= 0);
  REQUIRE(t >= 0);
  CHECK(b.mean(f) == doctest::Approx(100.0));
  CHECK(b.variance(f) == doctest::Approx(100.0));
  CHECK(b.mean(t) == doctest::Approx(80.0));
  CHECK(b.variance(t) == doctest::Approx(175.0));
  // r = cov / (sd_f sd_t); cov = (10*(-10) + 0 + 10*15)/2 = 25... by hand:
  // deviations f: -10,0,10; t: -10,-5,15; cov = (100+0+150)/2 = 125
  double expected = 125.0 / std::sqrt(100.0 * 175.0);
  CHECK(b.correlation(f, t) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(b.correlation(f, f) == doctest::Approx(1.0));
  int h = idx("HA");
  if (h >= 0) CHECK(std::isnan(b.mean(h)));
}

TEST_CASE("describe_baseline: Monte Carlo correlation oracle") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> norm;
  const double rho = 0.6;
  const int n = 20000;
  Dataset ds;
  for (int i = 0; i < n; ++i) {
    double u = norm(rng), v = norm(rng);
    double x = u;
    double y = rho * u + std::sqrt(1.0 - rho * rho) * v;
    SubjectRecord s;
    s.id = std::to_string(i);
    s.observations.push_back(
        obs(0.0, {{"FVC", 100.0 + 10.0 * x}, {"TLC", 80.0 + 5.0 * y}}));
    ds.subjects.push_back(s);
  }
  BaselineSummary b = describe_baseline(ds);
  int f = -1, t = -1;
  for (std::size_t k = 0; k < b.variables.size(); ++k) {
    if (b.variables[k] == "FVC") f = static_cast<int>(k);
    if (b.variables[k] == "TLC") t = static_cast<int>(k);
  }
  CHECK(b.correlation(f, t) == doctest::Approx(rho).epsilon(0.03));
  CHECK(b.mean(f) == doctest::Approx(100.0).epsilon(0.01));
  CHECK(b.variance(f) == doctest::Approx(100.0).epsilon(0.05));
}

TEST_CASE("validate_dataset rejects broken invariants") {
  Dataset ok = make_complete(2, 2);
  CHECK_NOTHROW(validate_dataset(ok));

  Dataset dup_id = ok;
  dup_id.subjects[1].id = dup_id.subjects[0].id;
  CHECK_THROWS_AS(validate_dataset(dup_id), DataError);

  Dataset bad_order = ok;
  std::swap(bad_order.subjects[0].observations[0],
            bad_order.subjects[0].observations[1]);
  CHECK_THROWS_AS(validate_dataset(bad_order), DataError);
}
