#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdapred/dataset.hpp"

namespace fdapred {

// Epanechnikov kernel, compact support on |u| <= 1.
inline double epanechnikov(double u) {
  double a = std::abs(u);
  return a <= 1.0 ? 0.75 * (1.0 - a * a) : 0.0;
}

struct MeanEstimate {
  Eigen::VectorXd grid;    // strictly increasing within [0,1]
  Eigen::VectorXd values;  // one per grid point
  double bandwidth = 0.0;
  std::string kernel = "epanechnikov";

  // Linear interpolation of grid values; clamps to the end points.
  double operator()(double t) const;
};

struct PointSet {
  std::vector<double> t;
  std::vector<double> y;
};

Eigen::VectorXd default_grid(int size = 101);
std::vector<double> default_bandwidth_candidates();  // 10 log-spaced in [0.05, 0.5]

// Local linear estimate at a single point. Degenerate local designs are
// retried with the bandwidth doubled up to 3 times before erroring.
double local_linear_at(const PointSet& points, double bandwidth, double t0);

MeanEstimate fit_local_linear(const PointSet& points, double bandwidth,
                              const Eigen::VectorXd& grid);

// Leave-one-subject-out CV over the candidate bandwidths; ties break
// toward the larger candidate.
double select_bandwidth(const std::vector<PointSet>& subjects,
                        const std::vector<double>& candidates);

// Pools one outcome's (t, y) pairs per subject; skips missing values.
std::vector<PointSet> subject_points(const Dataset& ds,
                                     const std::string& outcome);
PointSet pool_points(const std::vector<PointSet>& subjects);

}  // namespace fdapred
