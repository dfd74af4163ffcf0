#include "fdapred/basis.hpp"

#include <cmath>

#include "fdapred/stats.hpp"

namespace fdapred {

SplineBasis::SplineBasis(int size) : m_(size) {
  if (size < kDegree + 1)
    throw ConfigError("spline basis needs at least degree+1 functions");
  int interior = size - kDegree - 1;
  for (int i = 0; i <= kDegree; ++i) knots_.push_back(0.0);
  for (int i = 1; i <= interior; ++i)
    knots_.push_back(static_cast<double>(i) / (interior + 1));
  for (int i = 0; i <= kDegree; ++i) knots_.push_back(1.0);
}

const Eigen::MatrixXd& SplineBasis::transform() const {
  if (!ortho_)
    throw NumericError("basis is not orthonormalized; call orthonormalize()");
  return transform_;
}

Eigen::VectorXd SplineBasis::evaluate_raw(double t) const {
  if (t < 0.0 || t > 1.0)
    throw DataError("B-spline evaluation outside [0,1]: t = " +
                    std::to_string(t));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m_);

  // span index i with knots[i] <= t < knots[i+1]; t == 1 uses the last span
  int i = kDegree;
  int last = m_ - 1;  // last span start (knots[m_-1], knots[m_])
  while (i < last && t >= knots_[i + 1]) ++i;

  // Cox-de Boor: build the degree-3 values over the span in place.
  double vals[kDegree + 1] = {1.0, 0.0, 0.0, 0.0};
  for (int d = 1; d <= kDegree; ++d) {
    double saved = 0.0;
    for (int r = 0; r < d; ++r) {
      double left = knots_[i - d + 1 + r];
      double right = knots_[i + 1 + r];
      double denom = right - left;
      double term = denom > 0.0 ? vals[r] / denom : 0.0;
      vals[r] = saved + (right - t) * term;
      saved = (t - left) * term;
    }
    vals[d] = saved;
  }
  for (int r = 0; r <= kDegree; ++r) {
    int idx = i - kDegree + r;
    if (idx >= 0 && idx < m_) out(idx) = vals[r];
  }
  return out;
}

Eigen::VectorXd SplineBasis::evaluate_ortho(double t) const {
  return transform() * evaluate_raw(t);
}

Eigen::MatrixXd SplineBasis::gram_matrix() const {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m_, m_);
  int spans = m_ - kDegree;  // distinct knot intervals
  for (int s = 0; s < spans; ++s) {
    double lo = knots_[kDegree + s];
    double hi = knots_[kDegree + s + 1];
    double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (int k = 0; k < 6; ++k) {
      double t = mid + half * stats::GaussLegendre6::nodes[k];
      double w = half * stats::GaussLegendre6::weights[k];
      Eigen::VectorXd b = evaluate_raw(t);
      g.noalias() += w * b * b.transpose();
    }
  }
  return 0.5 * (g + g.transpose());
}

void SplineBasis::orthonormalize() {
  if (ortho_) return;  // idempotent: transform derives from the fixed Gram
  Eigen::MatrixXd g = gram_matrix();
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success)
    throw NumericError(
        "Gram matrix Cholesky failed; too many knots for this precision");
  Eigen::MatrixXd lower = llt.matrixL();
  transform_ = lower.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(m_, m_));
  ortho_ = true;
}

Eigen::VectorXd SplineBasis::ortho_integrals() const {
  Eigen::VectorXd raw = Eigen::VectorXd::Zero(m_);
  int spans = m_ - kDegree;
  for (int s = 0; s < spans; ++s) {
    double lo = knots_[kDegree + s];
    double hi = knots_[kDegree + s + 1];
    double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (int k = 0; k < 6; ++k) {
      double t = mid + half * stats::GaussLegendre6::nodes[k];
      raw += half * stats::GaussLegendre6::weights[k] * evaluate_raw(t);
    }
  }
  return transform() * raw;
}

}  // namespace fdapred
