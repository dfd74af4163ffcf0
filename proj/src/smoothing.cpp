#include "fdapred/smoothing.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace fdapred {

double MeanEstimate::operator()(double t) const {
  const int n = static_cast<int>(grid.size());
  if (n == 0) throw NumericError("mean estimate has an empty grid");
  if (t <= grid(0)) return values(0);
  if (t >= grid(n - 1)) return values(n - 1);
  int lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    int mid = (lo + hi) / 2;
    (grid(mid) <= t ? lo : hi) = mid;
  }
  double w = (t - grid(lo)) / (grid(hi) - grid(lo));
  return (1.0 - w) * values(lo) + w * values(hi);
}

Eigen::VectorXd default_grid(int size) {
  return Eigen::VectorXd::LinSpaced(size, 0.0, 1.0);
}

std::vector<double> default_bandwidth_candidates() {
  std::vector<double> out;
  double lo = std::log(0.05), hi = std::log(0.5);
  for (int i = 0; i < 10; ++i)
    out.push_back(std::exp(lo + (hi - lo) * i / 9.0));
  return out;
}

namespace {

// Weighted least-squares line through (t - t0); returns intercept.
// Returns NaN when the local design is degenerate at this bandwidth.
double try_local_fit(const PointSet& points, double h, double t0) {
  double s0 = 0, s1 = 0, s2 = 0, q0 = 0, q1 = 0;
  int distinct = 0;
  double first_t = std::numeric_limits<double>::quiet_NaN();
  bool saw_second = false;
  const std::size_t n = points.t.size();
  for (std::size_t j = 0; j < n; ++j) {
    double d = points.t[j] - t0;
    double w = epanechnikov(d / h);
    if (w <= 0.0) continue;
    if (distinct == 0) {
      first_t = points.t[j];
      distinct = 1;
    } else if (!saw_second && points.t[j] != first_t) {
      saw_second = true;
    }
    s0 += w;
    s1 += w * d;
    s2 += w * d * d;
    q0 += w * points.y[j];
    q1 += w * d * points.y[j];
  }
  if (s0 <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (!saw_second) return q0 / s0;  // single location: constant fit
  double det = s0 * s2 - s1 * s1;
  if (det <= 1e-14 * s0 * s2 || det <= 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return (s2 * q0 - s1 * q1) / det;
}

}  // namespace

double local_linear_at(const PointSet& points, double bandwidth, double t0) {
  if (bandwidth <= 0.0) throw ConfigError("bandwidth must be positive");
  double h = bandwidth;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    double v = try_local_fit(points, h, t0);
    if (std::isfinite(v)) return v;
    h *= 2.0;
  }
  throw NumericError("local linear fit degenerate at t = " +
                     std::to_string(t0) + " even after widening");
}

MeanEstimate fit_local_linear(const PointSet& points, double bandwidth,
                              const Eigen::VectorXd& grid) {
  std::set<double> distinct(points.t.begin(), points.t.end());
  if (distinct.size() < 2)
    throw DataError("local linear smoother needs at least 2 distinct times");
  MeanEstimate est;
  est.grid = grid;
  est.bandwidth = bandwidth;
  est.values.resize(grid.size());
  for (int g = 0; g < grid.size(); ++g)
    est.values(g) = local_linear_at(points, bandwidth, grid(g));
  return est;
}

double select_bandwidth(const std::vector<PointSet>& subjects,
                        const std::vector<double>& candidates) {
  if (subjects.size() < 2)
    throw DataError("bandwidth selection needs at least 2 subjects");
  if (candidates.empty()) throw ConfigError("no bandwidth candidates");

  double best_h = 0.0;
  double best_score = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double h : candidates) {
    if (h <= 0.0) throw ConfigError("bandwidth candidates must be positive");
    double sse = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < subjects.size() && ok; ++i) {
      PointSet train;
      for (std::size_t k = 0; k < subjects.size(); ++k) {
        if (k == i) continue;
        train.t.insert(train.t.end(), subjects[k].t.begin(),
                       subjects[k].t.end());
        train.y.insert(train.y.end(), subjects[k].y.begin(),
                       subjects[k].y.end());
      }
      try {
        for (std::size_t j = 0; j < subjects[i].t.size(); ++j) {
          double pred = local_linear_at(train, h, subjects[i].t[j]);
          double e = subjects[i].y[j] - pred;
          sse += e * e;
        }
      } catch (const NumericError&) {
        ok = false;
      }
    }
    if (!ok) continue;
    // candidates ascend, so <= breaks ties toward the larger bandwidth
    if (sse <= best_score) {
      best_score = sse;
      best_h = h;
      any = true;
    }
  }
  if (!any) throw NumericError("every bandwidth candidate was degenerate");
  return best_h;
}

std::vector<PointSet> subject_points(const Dataset& ds,
                                     const std::string& outcome) {
  std::vector<PointSet> out;
  for (const auto& s : ds.subjects) {
    PointSet ps;
    for (const auto& o : s.observations)
      if (auto v = o.value(outcome)) {
        ps.t.push_back(o.time);
        ps.y.push_back(*v);
      }
    if (!ps.t.empty()) out.push_back(std::move(ps));
  }
  return out;
}

PointSet pool_points(const std::vector<PointSet>& subjects) {
  PointSet all;
  for (const auto& s : subjects) {
    all.t.insert(all.t.end(), s.t.begin(), s.t.end());
    all.y.insert(all.y.end(), s.y.begin(), s.y.end());
  }
  return all;
}

}  // namespace fdapred
