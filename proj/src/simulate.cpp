#include "fdapred/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fdapred/stats.hpp"

namespace fdapred {

namespace {

// Shifted Legendre polynomials, orthonormal on [0,1].
double shifted_legendre(int degree, double t) {
  double x = 2.0 * t - 1.0;
  double p0 = 1.0, p1 = x;
  if (degree == 0) return 1.0;
  for (int k = 1; k < degree; ++k) {
    double p2 = ((2 * k + 1) * x * p1 - k * p0) / (k + 1);
    p0 = p1;
    p1 = p2;
  }
  return std::sqrt(2.0 * degree + 1.0) * p1;
}

}  // namespace

double SimTruth::eigenfunction_at(int l, double t) const {
  if (l < 1) throw ConfigError("eigenfunction index must be >= 1");
  if (eigen_family == "fourier") {
    int pair = (l + 1) / 2;  // frequency index
    double arg = 2.0 * M_PI * pair * t;
    return std::sqrt(2.0) * (l % 2 == 1 ? std::sin(arg) : std::cos(arg));
  }
  if (eigen_family == "legendre") return shifted_legendre(l, t);
  throw ConfigError("unknown eigenfunction family '" + eigen_family + "'");
}

void SimTruth::validate() const {
  const int rank = static_cast<int>(eigenvalues.size());
  if (rank < 1) throw ConfigError("simulation truth needs >= 1 eigenvalue");
  for (int l = 0; l + 1 < rank; ++l)
    if (eigenvalues(l) < eigenvalues(l + 1))
      throw ConfigError("simulation eigenvalues must be descending");
  if (eigenvalues(rank - 1) < 0.0)
    throw ConfigError("simulation eigenvalues must be non-negative");
  if (noise_variance < 0.0) throw ConfigError("negative noise variance");
  if (attendance_probability <= 0.0 || attendance_probability > 1.0)
    throw ConfigError("attendance probability must be in (0,1]");
  if (subjects < 1) throw ConfigError("need at least one subject");
  for (int a = 1; a <= rank; ++a)
    for (int b = a; b <= rank; ++b) {
      double ip = stats::integrate_gl6(
          [&](double t) {
            return eigenfunction_at(a, t) * eigenfunction_at(b, t);
          },
          0.0, 1.0, 256);
      double expect = a == b ? 1.0 : 0.0;
      if (std::abs(ip - expect) > 1e-8)
        throw ConfigError("eigenfunction family is not orthonormal on [0,1]");
    }
}

SimOutput generate(const SimTruth& truth) {
  truth.validate();
  const int rank = static_cast<int>(truth.eigenvalues.size());
  const int n_grid =
      static_cast<int>(truth.horizon_months / truth.visit_step_months) + 1;

  SimOutput out;
  out.dataset.horizon_months = truth.horizon_months;
  out.true_scores.resize(truth.subjects, rank);

  for (int i = 0; i < truth.subjects; ++i) {
    // two mixing rounds: nearby master seeds must not share subject
    // streams, so the master seed is scrambled before the counter is added
    std::mt19937_64 rng(
        splitmix64(splitmix64(truth.seed ^ 0x5151ULL) + i));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<double> times;
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      times.clear();
      for (int g = 0; g < n_grid; ++g) {
        if (unif(rng) > truth.attendance_probability) continue;
        double t = g * truth.visit_step_months;
        if (truth.jitter_months > 0.0)
          t += (2.0 * unif(rng) - 1.0) * truth.jitter_months;
        t = std::clamp(t, 0.0, truth.horizon_months);
        times.push_back(t);
      }
      std::sort(times.begin(), times.end());
      times.erase(std::unique(times.begin(), times.end()), times.end());
      ok = times.size() >= 2;
    }
    if (!ok)
      throw NumericError(
          "attendance probability too small: could not draw >= 2 visits");

    Eigen::VectorXd xi(rank);
    for (int l = 0; l < rank; ++l)
      xi(l) = std::sqrt(truth.eigenvalues(l)) * normal(rng);
    out.true_scores.row(i) = xi.transpose();

    SubjectRecord rec;
    rec.id = "S" + std::to_string(i + 1);
    double noise_sd = std::sqrt(truth.noise_variance);
    for (double t_months : times) {
      double t = t_months / truth.horizon_months;
      double y = truth.mean_at(t);
      for (int l = 0; l < rank; ++l)
        y += xi(l) * truth.eigenfunction_at(l + 1, t);
      y += noise_sd * normal(rng);
      Observation obs;
      obs.time = t_months;
      obs.values[truth.outcome] = y;
      rec.observations.push_back(obs);
    }
    out.dataset.subjects.push_back(std::move(rec));
  }
  return out;
}

Dataset generate_lmm(const LmmTruth& truth) {
  if (truth.subjects < 2) throw ConfigError("need at least two subjects");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(truth.random_covariance);
  if (es.eigenvalues()(0) < -1e-12)
    throw ConfigError("random-effects covariance must be PSD");
  Eigen::LLT<Eigen::Matrix2d> llt(truth.random_covariance +
                                  1e-14 * Eigen::Matrix2d::Identity());
  Eigen::Matrix2d chol = llt.matrixL();

  Dataset ds;
  ds.horizon_months = 60.0;
  const std::vector<double> grid = {0.0, 6.0, 12.0};
  for (int i = 0; i < truth.subjects; ++i) {
    std::mt19937_64 rng(
        splitmix64(splitmix64(truth.seed ^ 0xa11aULL) + i));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<double> times;
    for (int attempt = 0; attempt < 1000 && times.size() < 2; ++attempt) {
      times.clear();
      for (double g : grid)
        if (unif(rng) <= truth.attendance_probability) times.push_back(g);
    }
    if (times.size() < 2)
      throw NumericError("could not draw >= 2 visits for a subject");

    Eigen::Vector2d gamma = chol * Eigen::Vector2d(normal(rng), normal(rng));
    SubjectRecord rec;
    rec.id = "S" + std::to_string(i + 1);
    double noise_sd = std::sqrt(truth.residual_variance);
    for (double t : times) {
      double biomarker =
          std::exp(truth.biomarker_log_mean +
                   truth.biomarker_log_sd * normal(rng));
      double x = std::log(biomarker);
      double y = truth.beta(0) + truth.beta(1) * t;
      if (truth.include_biomarker_effect) y += truth.beta(2) * x;
      y += gamma(0) + gamma(1) * t + noise_sd * normal(rng);
      Observation obs;
      obs.time = t;
      obs.values[truth.outcome] = y;
      obs.values[truth.biomarker] = biomarker;
      rec.observations.push_back(obs);
    }
    ds.subjects.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace fdapred
