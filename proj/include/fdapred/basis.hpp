#pragma once

#include <vector>

#include <Eigen/Dense>

#include "fdapred/common.hpp"

namespace fdapred {

// Clamped cubic B-spline basis with equally spaced interior knots on
// [0,1]. `orthonormalize()` attaches a transform mapping raw B-spline
// coefficients to an L2-orthonormal basis.
class SplineBasis {
 public:
  static constexpr int kDegree = 3;

  // size = number of basis functions M >= 4; interior knots = M - 4.
  explicit SplineBasis(int size);

  int size() const { return m_; }
  const std::vector<double>& knots() const { return knots_; }
  bool orthonormalized() const { return ortho_; }
  const Eigen::MatrixXd& transform() const;

  // Raw B-spline values at t via the de Boor recurrence. At most
  // degree+1 entries are nonzero.
  Eigen::VectorXd evaluate_raw(double t) const;

  // Values of the orthonormalized basis functions at t.
  Eigen::VectorXd evaluate_ortho(double t) const;

  // Entries \int B_a B_b dt by 6-node Gauss-Legendre per knot span.
  Eigen::MatrixXd gram_matrix() const;

  // Sets the transform to the inverse lower Cholesky factor of the
  // Gram matrix. Idempotent.
  void orthonormalize();

  // \int of each orthonormalized basis function over [0,1].
  Eigen::VectorXd ortho_integrals() const;

 private:
  int m_;
  std::vector<double> knots_;
  bool ortho_ = false;
  Eigen::MatrixXd transform_;  // M x M, lower triangular
};

}  // namespace fdapred
