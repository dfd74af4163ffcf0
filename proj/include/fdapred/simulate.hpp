#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdapred/dataset.hpp"

namespace fdapred {

// Ground truth for synthetic sparse trajectories: linear mean, analytic
// orthonormal eigenfunctions, 6-month visit grid with missed visits.
struct SimTruth {
  // mean(t) = level + slope * t, t in [0,1]
  double mean_level = 102.0;
  double mean_slope = -12.0;
  // "fourier": sqrt(2) sin(2*pi*t), sqrt(2) cos(2*pi*t), sqrt(2) sin(4*pi*t), ...
  // "legendre": shifted Legendre polynomials of degree 1, 2, ...
  std::string eigen_family = "fourier";
  Eigen::VectorXd eigenvalues = (Eigen::VectorXd(2) << 400.0, 100.0).finished();
  double noise_variance = 25.0;
  double horizon_months = 60.0;
  double visit_step_months = 6.0;
  double attendance_probability = 0.5;
  double jitter_months = 1.0;
  int subjects = 200;
  std::string outcome = "FVC";
  std::uint64_t seed = 1;

  double mean_at(double t) const { return mean_level + mean_slope * t; }
  double eigenfunction_at(int l, double t) const;  // l is 1-based

  // Throws unless the family is orthonormal on [0,1] (quadrature check).
  void validate() const;
};

struct SimOutput {
  Dataset dataset;  // times in months, ingestion schema conventions
  Eigen::MatrixXd true_scores;  // subjects x L
};

// KL draw: xi_l ~ N(0, lambda_l), Bernoulli visit attendance with jitter,
// subjects with < 2 visits redrawn. Deterministic given the seed,
// independent of evaluation order (counter-based per-subject seeding).
SimOutput generate(const SimTruth& truth);

struct LmmTruth {
  Eigen::Vector3d beta{100.0, -0.5, -5.0};  // intercept, time, biomarker
  Eigen::Matrix2d random_covariance =
      (Eigen::Matrix2d() << 16.0, 0.0, 0.0, 0.04).finished();
  double residual_variance = 25.0;
  double attendance_probability = 0.8;
  double biomarker_log_mean = 5.4;   // log-normal biomarker scale
  double biomarker_log_sd = 0.5;
  bool include_biomarker_effect = true;
  std::string outcome = "FVC";
  std::string biomarker = "TIMP";
  int subjects = 100;
  std::uint64_t seed = 1;
};

// Visits on {0, 6, 12} months; y = beta0 + beta1 t + beta2 log(biomarker)
// + gamma0 + gamma1 t + e. Subjects with < 2 visits redrawn.
Dataset generate_lmm(const LmmTruth& truth);

}  // namespace fdapred
