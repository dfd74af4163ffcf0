#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "fdapred/common.hpp"

namespace fdapred {

struct OptimOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-8;
  int memory = 10;
  double armijo_c1 = 1e-4;
  int max_backtracks = 40;
};

struct OptimResult {
  Eigen::VectorXd x;
  double fval = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // accepted values, non-increasing
};

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
// Maps a free parameter vector back onto the feasible set; identity for
// unconstrained problems.
using RetractFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Central-difference gradient; adequate for low-dimensional problems.
inline GradientFn numeric_gradient(const ObjectiveFn& f, double step = 1e-6) {
  return [f, step](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (int i = 0; i < x.size(); ++i) {
      double h = step * std::max(1.0, std::abs(x(i)));
      xp(i) = x(i) + h;
      double fp = f(xp);
      xp(i) = x(i) - h;
      double fm = f(xp);
      xp(i) = x(i);
      g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
  };
}

// L-BFGS with Armijo backtracking. Every candidate point passes through
// `retract` before evaluation, so accepted objective values are monotone
// non-increasing on the feasible set. Falls back to steepest descent
// (and clears memory) when a direction fails the line search.
inline OptimResult minimize(const ObjectiveFn& f, const GradientFn& grad,
                            const Eigen::VectorXd& x0,
                            const OptimOptions& opts = {},
                            const RetractFn& retract = nullptr) {
  auto project = [&](const Eigen::VectorXd& x) {
    return retract ? retract(x) : x;
  };

  OptimResult res;
  res.x = project(x0);
  res.fval = f(res.x);
  res.objective_trace.push_back(res.fval);

  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;
  Eigen::VectorXd g = grad(res.x);

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    res.iterations = iter + 1;

    // two-loop recursion
    Eigen::VectorXd d = -g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      double gamma = s_hist.back().dot(y_hist.back()) /
                     y_hist.back().squaredNorm();
      if (gamma > 0) d *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      double beta = rho_hist[i] * y_hist[i].dot(d);
      d += (alpha[i] - beta) * s_hist[i];
    }

    double dg = g.dot(d);
    if (dg >= 0.0) {  // not a descent direction: restart
      d = -g;
      dg = g.dot(d);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    if (g.norm() < 1e-14 * std::max(1.0, std::abs(res.fval))) {
      res.converged = true;
      break;
    }

    double step = 1.0;
    Eigen::VectorXd x_new;
    double f_new = res.fval;
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      x_new = project(res.x + step * d);
      f_new = f(x_new);
      if (f_new <= res.fval + opts.armijo_c1 * step * dg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (s_hist.empty()) {
        // even 2^-max_backtracks along -g cannot improve: numerically
        // stationary (possibly at a clamped boundary)
        res.converged = true;
        break;
      }
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;  // retry from scratch with -g
    }

    Eigen::VectorXd g_new = grad(x_new);
    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd y = g_new - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }

    double decrease = res.fval - f_new;
    res.x = x_new;
    res.fval = f_new;
    res.objective_trace.push_back(res.fval);
    g = g_new;

    if (decrease <= opts.relative_tolerance *
                        std::max(1.0, std::abs(res.fval))) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace fdapred
