#include "fdapred/lmm.hpp"

#include <algorithm>
#include <cmath>

#include "fdapred/optimize.hpp"
#include "fdapred/stats.hpp"

namespace fdapred {

namespace {

constexpr double kLogClamp = 15.0;

std::optional<double> snap_to_grid(double t, const std::vector<double>& grid,
                                   double tol) {
  for (double g : grid)
    if (std::abs(t - g) <= tol) return g;
  return std::nullopt;
}

Eigen::Matrix2d sigma_from_theta(const Eigen::VectorXd& theta) {
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  c(0, 0) = std::exp(std::clamp(theta(0), -kLogClamp, kLogClamp));
  c(1, 0) = theta(1);
  c(1, 1) = std::exp(std::clamp(theta(2), -kLogClamp, kLogClamp));
  return c * c.transpose();
}

// Accumulation order fixed by subject id so the fit is exactly invariant
// to the order subjects arrive in.
std::vector<int> id_order(const LmmDesign& design) {
  std::vector<int> idx(design.blocks.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return design.blocks[a].id < design.blocks[b].id;
  });
  return idx;
}

}  // namespace

LmmDesign build_design(const Dataset& ds, const LmmSpec& spec) {
  if (ds.rescaled())
    throw DataError("LMM design expects times in months, not rescaled");
  LmmDesign design;
  design.fixed_effects = spec.biomarker ? 3 : 2;

  for (const auto& s : ds.subjects) {
    std::vector<double> ys, ts, xs;
    for (const auto& o : s.observations) {
      auto g = snap_to_grid(o.time, spec.grid_months,
                            spec.snap_tolerance_months);
      if (!g) continue;
      auto y = o.value(spec.outcome);
      if (!y) continue;
      double x = 0.0;
      if (spec.biomarker) {
        auto b = o.value(*spec.biomarker);
        if (!b) continue;
        if (spec.log_biomarker) {
          if (*b <= 0.0) {
            ++design.dropped_rows;
            continue;
          }
          x = std::log(*b);
        } else {
          x = *b;
        }
      }
      ys.push_back(*y);
      ts.push_back(*g);
      xs.push_back(x);
    }
    if (ys.size() < 2) continue;
    LmmDesign::SubjectBlock blk;
    blk.id = s.id;
    const int n = static_cast<int>(ys.size());
    blk.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
    blk.x.resize(n, design.fixed_effects);
    blk.z.resize(n, 2);
    for (int j = 0; j < n; ++j) {
      blk.x(j, 0) = 1.0;
      blk.x(j, 1) = ts[j];
      if (spec.biomarker) blk.x(j, 2) = xs[j];
      blk.z(j, 0) = 1.0;
      blk.z(j, 1) = ts[j];
    }
    design.blocks.push_back(std::move(blk));
    design.total_rows += n;
  }
  if (design.blocks.empty())
    throw DataError("LMM eligible cohort is empty");
  return design;
}

LmmLikelihood profile_likelihood(const LmmDesign& design,
                                 const Eigen::Matrix2d& sigma,
                                 double sigma_e2) {
  const int p = design.fixed_effects;
  Eigen::MatrixXd xtvx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xtvy = Eigen::VectorXd::Zero(p);
  double logdet = 0.0;

  const std::vector<int> order = id_order(design);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chols;
  chols.reserve(design.blocks.size());
  for (int bi : order) {
    const auto& blk = design.blocks[bi];
    const int n = static_cast<int>(blk.y.size());
    Eigen::MatrixXd v = blk.z * sigma * blk.z.transpose();
    v.diagonal().array() += sigma_e2;
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success) {
      v.diagonal().array() += 1e-10 * v.trace() / n;
      llt.compute(v);
      if (llt.info() != Eigen::Success)
        throw NumericError("LMM covariance Cholesky failed for subject '" +
                           blk.id + "'");
    }
    Eigen::MatrixXd lmat = llt.matrixL();
    logdet += 2.0 * lmat.diagonal().array().log().sum();
    xtvx.noalias() += blk.x.transpose() * llt.solve(blk.x);
    xtvy.noalias() += blk.x.transpose() * llt.solve(blk.y);
    chols.push_back(std::move(llt));
  }

  Eigen::LLT<Eigen::MatrixXd> axtvx(xtvx);
  if (axtvx.info() != Eigen::Success)
    throw NumericError("LMM fixed-effect information matrix is singular");

  LmmLikelihood out;
  out.beta = axtvx.solve(xtvy);
  out.beta_covariance =
      axtvx.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd amat = axtvx.matrixL();
  out.reml_logdet = 2.0 * amat.diagonal().array().log().sum();

  double quad = 0.0;
  std::size_t k = 0;
  for (int bi : order) {
    Eigen::VectorXd r =
        design.blocks[bi].y - design.blocks[bi].x * out.beta;
    quad += r.dot(chols[k++].solve(r));
  }
  out.nll = 0.5 * logdet + 0.5 * quad +
            0.5 * design.total_rows * std::log(2.0 * M_PI);
  return out;
}

LmmFit fit_ml(const LmmDesign& design, const LmmFit* start) {
  if (design.total_rows <= design.fixed_effects)
    throw DataError("LMM needs more rows than fixed effects");

  // moment-based starting values from a crude overall variance
  const std::vector<int> order = id_order(design);
  double ybar = 0.0;
  for (int bi : order) ybar += design.blocks[bi].y.sum();
  ybar /= design.total_rows;
  double yvar = 0.0;
  for (int bi : order)
    yvar += (design.blocks[bi].y.array() - ybar).square().sum();
  yvar = std::max(yvar / std::max(1, design.total_rows - 1), 1e-8);

  Eigen::VectorXd theta(4);
  if (start) {
    Eigen::LLT<Eigen::Matrix2d> llt(
        start->random_covariance +
        1e-12 * yvar * Eigen::Matrix2d::Identity());
    Eigen::Matrix2d c = llt.matrixL();
    theta << std::log(std::max(c(0, 0), 1e-8)), c(1, 0),
        std::log(std::max(c(1, 1), 1e-8)),
        std::log(std::max(start->residual_variance, 1e-12 * yvar));
  } else {
    theta << 0.5 * std::log(0.2 * yvar), 0.0,
        0.5 * std::log(0.2 * yvar) - std::log(12.0),
        std::log(0.5 * yvar);
  }

  auto objective = [&](const Eigen::VectorXd& th) {
    double se2 = std::exp(std::clamp(th(3), -kLogClamp, kLogClamp));
    return profile_likelihood(design, sigma_from_theta(th), se2).nll;
  };
  auto retract = [](const Eigen::VectorXd& th) {
    Eigen::VectorXd out = th;
    out(0) = std::clamp(out(0), -kLogClamp, kLogClamp);
    out(2) = std::clamp(out(2), -kLogClamp, kLogClamp);
    out(3) = std::clamp(out(3), -kLogClamp, kLogClamp);
    return out;
  };

  OptimOptions oo;
  oo.max_iterations = 500;
  oo.relative_tolerance = 1e-8;
  OptimResult opt = minimize(objective, numeric_gradient(objective), theta,
                             oo, retract);

  double se2 = std::exp(std::clamp(opt.x(3), -kLogClamp, kLogClamp));
  Eigen::Matrix2d sigma = sigma_from_theta(opt.x);
  LmmLikelihood lik = profile_likelihood(design, sigma, se2);

  LmmFit fit;
  fit.beta = lik.beta;
  fit.beta_covariance = lik.beta_covariance;
  fit.random_covariance = sigma;
  fit.residual_variance = se2;
  fit.log_likelihood = -lik.nll;
  fit.reml_criterion = lik.nll + 0.5 * lik.reml_logdet;
  fit.iterations = opt.iterations;
  fit.converged = opt.converged;
  fit.rows = design.total_rows;
  fit.subjects = static_cast<int>(design.blocks.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sigma);
  fit.boundary = es.eigenvalues()(0) < 1e-8 * std::max(1.0, sigma.trace());
  return fit;
}

LrtResult lrt_biomarker(const LmmFit& full, const LmmFit& null_fit) {
  if (full.rows != null_fit.rows || full.subjects != null_fit.subjects)
    throw DataError("LRT requires both fits on the same rows");
  double stat = 2.0 * (full.log_likelihood - null_fit.log_likelihood);
  if (stat < -1e-6)
    throw NumericError(
        "LRT statistic is materially negative; a fit did not converge");
  LrtResult out;
  out.statistic = std::max(stat, 0.0);
  out.p_value = stats::chi_squared_sf(out.statistic, 1.0);
  return out;
}

double predict_population(const LmmFit& fit, double t_months,
                          std::optional<double> x) {
  double y = fit.beta(0) + fit.beta(1) * t_months;
  if (fit.beta.size() == 3) {
    if (!x) throw DataError("model has a biomarker term but no value given");
    y += fit.beta(2) * *x;
  }
  return y;
}

LooCvResult loo_cv_mse(const Dataset& ds, const LmmSpec& spec) {
  LmmDesign design = build_design(ds, spec);
  if (design.blocks.size() < 2)
    throw DataError("LOO CV needs at least 2 eligible subjects");
  LmmFit full = fit_ml(design);

  LooCvResult out;
  double sse = 0.0;
  for (std::size_t i = 0; i < design.blocks.size(); ++i) {
    LmmDesign train = design;
    train.blocks.erase(train.blocks.begin() + i);
    train.total_rows -= static_cast<int>(design.blocks[i].y.size());
    try {
      LmmFit fit = fit_ml(train, &full);
      if (!fit.converged) {
        ++out.skipped_folds;
        continue;
      }
      const auto& blk = design.blocks[i];
      Eigen::VectorXd pred = blk.x * fit.beta;
      sse += (blk.y - pred).squaredNorm();
      out.rows_used += static_cast<int>(blk.y.size());
    } catch (const std::exception&) {
      ++out.skipped_folds;
    }
  }
  if (out.rows_used == 0)
    throw NumericError("every LOO CV fold failed to converge");
  out.mse = sse / out.rows_used;
  return out;
}

LmmComparison compare_with_null(const Dataset& ds, const LmmSpec& spec) {
  if (!spec.biomarker)
    throw ConfigError("comparison requires a biomarker in the model spec");
  LmmDesign full_design = build_design(ds, spec);

  // null design on exactly the same rows
  LmmDesign null_design = full_design;
  null_design.fixed_effects = 2;
  for (auto& blk : null_design.blocks)
    blk.x = blk.x.leftCols(2).eval();

  LmmComparison out;
  out.full = fit_ml(full_design);
  out.null_fit = fit_ml(null_design);
  out.lrt = lrt_biomarker(out.full, out.null_fit);
  return out;
}

}  // namespace fdapred
