#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdapred/dataset.hpp"

namespace fdapred {

// Random intercept + slope model on the {0, 6, 12} month visit grid.
struct LmmSpec {
  std::string outcome;
  std::optional<std::string> biomarker;  // absent: null model (time only)
  bool log_biomarker = true;
  std::vector<double> grid_months = {0.0, 6.0, 12.0};
  double snap_tolerance_months = 1.0;
};

struct LmmDesign {
  struct SubjectBlock {
    std::string id;
    Eigen::VectorXd y;
    Eigen::MatrixXd x;  // fixed: (1, t[, biomarker])
    Eigen::MatrixXd z;  // random: (1, t)
  };
  std::vector<SubjectBlock> blocks;
  int fixed_effects = 0;
  int total_rows = 0;
  int dropped_rows = 0;  // non-positive biomarker under log, etc.
};

struct LmmFit {
  Eigen::VectorXd beta;            // (intercept, time[, biomarker])
  Eigen::MatrixXd beta_covariance;
  Eigen::Matrix2d random_covariance;  // Sigma for (intercept, slope)
  double residual_variance = 0.0;
  double log_likelihood = 0.0;  // ML
  double reml_criterion = 0.0;
  int iterations = 0;
  bool converged = false;
  bool boundary = false;  // Sigma numerically singular
  int rows = 0;
  int subjects = 0;
};

// Retains subjects with >= 2 grid visits carrying the outcome (and the
// biomarker, when the spec names one). Times stay in months.
LmmDesign build_design(const Dataset& ds, const LmmSpec& spec);

// Profiled Gaussian marginal likelihood at fixed variance components:
// beta by GLS, V_i = Z_i Sigma Z_i' + sigma_e2 I via per-subject Cholesky.
struct LmmLikelihood {
  double nll = 0.0;
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_covariance;
  double reml_logdet = 0.0;  // log det sum X'V^-1 X
};
LmmLikelihood profile_likelihood(const LmmDesign& design,
                                 const Eigen::Matrix2d& sigma,
                                 double sigma_e2);

// Maximum likelihood with beta profiled out by GLS; variance components
// on a log-Cholesky parameterization.
LmmFit fit_ml(const LmmDesign& design, const LmmFit* start = nullptr);

// 2(l_full - l_null) against chi-square with 1 df. Both fits must be ML
// on the same rows.
struct LrtResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
LrtResult lrt_biomarker(const LmmFit& full, const LmmFit& null_fit);

// Population-level prediction (random effects at their mean, zero).
double predict_population(const LmmFit& fit, double t_months,
                          std::optional<double> x = std::nullopt);

struct LooCvResult {
  double mse = 0.0;
  int skipped_folds = 0;
  int rows_used = 0;
};
LooCvResult loo_cv_mse(const Dataset& ds, const LmmSpec& spec);

// Fits full + null on the same rows and runs the likelihood-ratio test.
struct LmmComparison {
  LmmFit full;
  LmmFit null_fit;
  LrtResult lrt;
};
LmmComparison compare_with_null(const Dataset& ds, const LmmSpec& spec);

}  // namespace fdapred
