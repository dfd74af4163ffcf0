#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdapred/dataset.hpp"

namespace fdapred {

struct CleaningRule {
  enum class Op { Less, Greater };
  enum class Scope { Observation, PatientBaseline };
  enum class Action { RemoveObservation, RemovePatient };

  std::string variable;
  Op op = Op::Greater;
  double threshold = 0.0;
  Scope scope = Scope::Observation;
  Action action = Action::RemoveObservation;

  std::string describe() const;
};

struct CleaningConfig {
  std::vector<CleaningRule> rules;
  double horizon_months = 60.0;
  int min_observations = 2;
  // Observations missing any of these variables are dropped up front.
  // Empty list disables the missing-value pass.
  std::vector<std::string> modeled_variables = all_variable_names();
};

// Threshold rules from the study's patient-flow chart. Two of the chart
// captions contradict their node labels (DLCO, NT); the defaults keep
// the direction consistent with the observed value scales and can be
// overridden in the config file.
std::vector<CleaningRule> default_cleaning_rules();

// Pipeline order: missing-value pass, each rule in sequence, horizon
// cut, minimum-observations cut. Every stage appends a provenance entry
// with before/after subject and observation counts.
Dataset apply_cleaning(const Dataset& ds, const CleaningConfig& config);

// Divides all times by the horizon; the dataset keeps the scale for
// reporting in months. Errors if any time exceeds the horizon.
Dataset rescale_time(const Dataset& ds, double horizon_months);

struct BaselineSummary {
  std::vector<std::string> variables;
  Eigen::VectorXd mean;          // NaN where undefined
  Eigen::VectorXd variance;      // unbiased; NaN where undefined
  Eigen::MatrixXd correlation;   // pairwise-complete Pearson; NaN where undefined
};

// Mean/variance/correlation of each variable over subjects' first
// retained observations.
BaselineSummary describe_baseline(const Dataset& ds);

}  // namespace fdapred
