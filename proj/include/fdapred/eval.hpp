#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fdapred/common.hpp"

namespace fdapred {

struct ForecastResult {
  std::string subject_id;
  double t_last_months = 0.0;
  double truth = 0.0;
  double prediction = 0.0;
  double gap_months = 0.0;  // to the previous visit
  bool near = false;        // gap <= 6 months
  bool early = false;       // last visit within the first 24 months

  double error() const { return truth - prediction; }
  double squared_error() const { return error() * error(); }
};

struct SubgroupStat {
  int count = 0;
  std::optional<double> mse;  // absent when the subgroup is empty
};

struct EvalReport {
  double mse_null = 0.0;
  double mse_model = 0.0;
  double r2 = 0.0;
  SubgroupStat near, far, early, late;
  std::vector<double> residuals;  // per subject, cohort order
};

struct ResidualUpdate {
  std::string biomarker;
  double alpha = 0.0;
  double beta = 0.0;
  double p_value = 1.0;
  std::vector<double> updated_predictions;
  double mse_in_sample = 0.0;
  double mse_loocv = 0.0;
  double r2_vs_original = 0.0;
  int excluded_missing = 0;
  std::vector<std::string> included_ids;
};

double mse(const std::vector<std::pair<double, double>>& pairs);

// 1 - mse_model / mse_null; may be negative.
double r_squared(double mse_model, double mse_null);

// Near/far and early/late partition MSEs plus the null-vs-model summary.
// The null forecast is the plain cohort average of observed last values
// (include-self); pass leave_one_out_null for the jackknifed variant.
EvalReport subgroup_report(const std::vector<ForecastResult>& results,
                           bool leave_one_out_null = false);

// OLS of the forecast residual on a transformed biomarker value at the
// last visit, the updated predictions, and both in-sample and
// leave-one-out MSEs of the update.
ResidualUpdate residual_update(
    const std::vector<ForecastResult>& results,
    const std::map<std::string, double>& biomarker_at_last,
    const std::string& biomarker_name, bool log_transform);

}  // namespace fdapred
