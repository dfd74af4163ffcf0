#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdapred/basis.hpp"
#include "fdapred/dataset.hpp"
#include "fdapred/eval.hpp"
#include "fdapred/smoothing.hpp"

namespace fdapred {

struct FitLog {
  int iterations = 0;
  double final_nll = 0.0;
  bool converged = false;
  int effective_rank = 0;  // eigenvalues above 1e-10 * lambda_1
  std::vector<double> objective_trace;
};

// Reduced-rank model: covariance Phi Lambda Phi' + sigma2 I with the
// eigenfunctions expanded in an L2-orthonormalized B-spline basis.
struct FpcaModel {
  MeanEstimate mean;
  SplineBasis basis{4};            // orthonormalized
  Eigen::MatrixXd coefficients;    // M x L, orthonormal columns
  Eigen::VectorXd eigenvalues;     // descending, positive
  double noise_variance = 0.0;
  FitLog fit_log;

  int rank() const { return static_cast<int>(eigenvalues.size()); }
};

struct SubjectScores {
  std::string subject_id;
  Eigen::VectorXd scores;               // L
  Eigen::MatrixXd conditional_covariance;  // L x L, PSD
};

struct ModelSelectionEntry {
  int rank = 0;        // L
  int basis_size = 0;  // M
  double cv_score = 0.0;
  bool feasible = false;
  int failed_folds = 0;
};

struct ModelSelectionResult {
  int chosen_rank = 0;
  int chosen_basis_size = 0;
  std::vector<ModelSelectionEntry> table;
};

struct FpcaOptions {
  std::optional<double> bandwidth;  // CV-selected when absent
  std::vector<double> bandwidth_candidates = default_bandwidth_candidates();
  int mean_grid_size = 101;
  int max_iterations = 500;
  double relative_tolerance = 1e-8;
  // Leave-one-curve-out when 0; otherwise K-fold grouping of subjects.
  int cv_folds = 0;
  int threads = 1;
};

struct ForecastOptions {
  FpcaOptions fit;
  std::vector<int> rank_grid = {1, 2, 3};
  std::vector<int> basis_grid = {5, 8, 11, 14};
  bool reselect_per_fold = false;  // reuse the full-data (L, M) by default
  double near_gap_months = 6.0;
  double early_months = 24.0;
  int min_observations = 3;
};

struct ForecastRun {
  std::vector<ForecastResult> results;
  std::vector<std::string> warnings;  // subjects whose fold failed
  FpcaModel full_model;
};

// l is 1-based (1 <= l <= L).
double eigenfunction_at(const FpcaModel& model, int l, double t);

// Row of all L eigenfunction values at t.
Eigen::VectorXd eigen_row(const FpcaModel& model, double t);

// Phi Lambda Phi' + sigma2 I at the given times.
Eigen::MatrixXd marginal_covariance(const FpcaModel& model,
                                    const Eigen::VectorXd& times);

// Gaussian marginal NLL of the mean-centered outcome, summed over
// subjects in dataset order; per-subject Cholesky with the jitter policy.
double negative_log_likelihood(const FpcaModel& model, const Dataset& ds,
                               const std::string& outcome);

// Rotates (B, Lambda) into eigen form: descending eigenvalues, columns of
// B orthonormal, each eigenfunction signed so its integral is >= 0.
void canonicalize(const SplineBasis& basis, Eigen::MatrixXd& coefficients,
                  Eigen::MatrixXd& lambda_matrix,
                  Eigen::VectorXd& eigenvalues_out);

// Fits mean (local linear) and the reduced-rank covariance by marginal
// maximum likelihood with orthonormality kept by QR retraction.
FpcaModel fit_reml(const Dataset& ds, const std::string& outcome, int rank,
                   int basis_size, const FpcaOptions& options = {},
                   const FpcaModel* init = nullptr);

// Leave-one-curve-out (or K-fold) CV over the (L, M) grid; the score is
// the held-out subjects' marginal NLL. Ties break toward smaller L then
// smaller M.
// Arg-min over feasible entries; ties toward smaller L, then smaller M.
std::pair<int, int> choose_from_table(
    const std::vector<ModelSelectionEntry>& table);

ModelSelectionResult select_model(const Dataset& ds, const std::string& outcome,
                                  const std::vector<int>& rank_grid,
                                  const std::vector<int>& basis_grid,
                                  const FpcaOptions& options = {});

// Conditional-expectation scores given the subject's sparse observations.
SubjectScores pace_scores(const FpcaModel& model, const SubjectRecord& subject,
                          const std::string& outcome);

// mu(t) + sum_l xi_l phi_l(t); t in [0,1].
double reconstruct(const FpcaModel& model, const SubjectScores& scores,
                   double t);

// Leave-last-out forecast for every subject with enough observations.
// The dataset must be rescaled (times in [0,1] with the month scale kept).
ForecastRun forecast_last(const Dataset& ds, const std::string& outcome,
                          const ForecastOptions& options = {});

}  // namespace fdapred
