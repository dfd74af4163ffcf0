#include "fdapred/fpca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fdapred/optimize.hpp"
#include "fdapred/stats.hpp"

namespace fdapred {

namespace {

constexpr double kLogParamClamp = 35.0;

struct SubjectData {
  std::string id;
  Eigen::VectorXd times;
  Eigen::VectorXd resid;
  Eigen::MatrixXd basis_rows;  // N x M, orthonormalized basis at the times
};

std::vector<SubjectData> center_data(const Dataset& ds,
                                     const std::string& outcome,
                                     const MeanEstimate& mean,
                                     const SplineBasis& basis) {
  std::vector<SubjectData> out;
  for (const auto& s : ds.subjects) {
    std::vector<double> t, r;
    for (const auto& o : s.observations)
      if (auto v = o.value(outcome)) {
        t.push_back(o.time);
        r.push_back(*v - mean(o.time));
      }
    if (t.empty()) continue;
    SubjectData sd;
    sd.id = s.id;
    sd.times = Eigen::Map<Eigen::VectorXd>(t.data(), t.size());
    sd.resid = Eigen::Map<Eigen::VectorXd>(r.data(), r.size());
    sd.basis_rows.resize(t.size(), basis.size());
    for (std::size_t j = 0; j < t.size(); ++j)
      sd.basis_rows.row(j) = basis.evaluate_ortho(t[j]).transpose();
    out.push_back(std::move(sd));
  }
  return out;
}

// Cholesky with the jitter policy: up to 3 additions of 1e-10*trace/N.
Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(Eigen::MatrixXd sigma,
                                             const std::string& subject_id) {
  const int n = static_cast<int>(sigma.rows());
  double jitter = 1e-10 * sigma.trace() / n;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() == Eigen::Success) return llt;
    sigma.diagonal().array() += jitter;
  }
  throw NumericError("covariance Cholesky failed for subject '" + subject_id +
                     "'");
}

// NLL and (optionally) its gradient w.r.t. (B free, log lambda, log sigma2).
double nll_core(const std::vector<SubjectData>& data, const Eigen::MatrixXd& B,
                const Eigen::VectorXd& lambda, double sigma2,
                Eigen::MatrixXd* grad_B = nullptr,
                Eigen::VectorXd* grad_loglam = nullptr,
                double* grad_logsig = nullptr) {
  const int L = static_cast<int>(lambda.size());
  double nll = 0.0;
  long total_obs = 0;
  if (grad_B) grad_B->setZero(B.rows(), B.cols());
  if (grad_loglam) grad_loglam->setZero(L);
  if (grad_logsig) *grad_logsig = 0.0;

  for (const auto& sd : data) {
    const int n = static_cast<int>(sd.times.size());
    total_obs += n;
    Eigen::MatrixXd phi = sd.basis_rows * B;  // n x L
    Eigen::MatrixXd sigma = phi * lambda.asDiagonal() * phi.transpose();
    sigma.diagonal().array() += sigma2;
    auto llt = chol_with_jitter(sigma, sd.id);
    Eigen::MatrixXd lmat = llt.matrixL();
    double logdet = 2.0 * lmat.diagonal().array().log().sum();
    Eigen::VectorXd alpha = llt.solve(sd.resid);
    nll += 0.5 * logdet + 0.5 * sd.resid.dot(alpha);

    if (grad_B) {
      Eigen::MatrixXd sinv =
          llt.solve(Eigen::MatrixXd::Identity(n, n));
      Eigen::MatrixXd w = 0.5 * (sinv - alpha * alpha.transpose());
      grad_B->noalias() +=
          2.0 * sd.basis_rows.transpose() * w * phi * lambda.asDiagonal();
      for (int l = 0; l < L; ++l)
        (*grad_loglam)(l) +=
            lambda(l) * phi.col(l).dot(w * phi.col(l));
      *grad_logsig += sigma2 * w.trace();
    }
  }
  nll += 0.5 * static_cast<double>(total_obs) * std::log(2.0 * M_PI);
  return nll;
}

struct ParamLayout {
  int m, rank;
  int size() const { return m * rank + rank + 1; }
  Eigen::MatrixXd unpack_B(const Eigen::VectorXd& x) const {
    return Eigen::Map<const Eigen::MatrixXd>(x.data(), m, rank);
  }
  Eigen::VectorXd unpack_loglam(const Eigen::VectorXd& x) const {
    return x.segment(m * rank, rank);
  }
  double unpack_logsig(const Eigen::VectorXd& x) const {
    return x(m * rank + rank);
  }
  Eigen::VectorXd pack(const Eigen::MatrixXd& B, const Eigen::VectorXd& loglam,
                       double logsig) const {
    Eigen::VectorXd x(size());
    Eigen::Map<Eigen::MatrixXd>(x.data(), m, rank) = B;
    x.segment(m * rank, rank) = loglam;
    x(m * rank + rank) = logsig;
    return x;
  }
};

// Thin-QR with positive R diagonal; the retraction onto orthonormal B.
Eigen::MatrixXd qr_orthonormalize(const Eigen::MatrixXd& b) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
  Eigen::MatrixXd q = qr.householderQ() *
                      Eigen::MatrixXd::Identity(b.rows(), b.cols());
  Eigen::MatrixXd r =
      qr.matrixQR().topLeftCorner(b.cols(), b.cols());
  for (int j = 0; j < b.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

double linear_interp_diag(const Eigen::VectorXd& grid,
                          const Eigen::VectorXd& diag, double t) {
  const int n = static_cast<int>(grid.size());
  if (t <= grid(0)) return diag(0);
  if (t >= grid(n - 1)) return diag(n - 1);
  int lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    int mid = (lo + hi) / 2;
    (grid(mid) <= t ? lo : hi) = mid;
  }
  double w = (t - grid(lo)) / (grid(hi) - grid(lo));
  return (1.0 - w) * diag(lo) + w * diag(hi);
}

// Initial (B, lambda, sigma2): smooth the off-diagonal residual products
// onto a coarse grid with a product kernel (the diagonal carries the
// noise and is left out), eigendecompose, project onto the basis.
void initialize_parameters(const std::vector<SubjectData>& data,
                           const SplineBasis& basis, int rank,
                           Eigen::MatrixXd& B, Eigen::VectorXd& lambda,
                           double& sigma2) {
  const int grid_size = 21;
  Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(grid_size, 0.0, 1.0);

  double resid_var = 0.0;
  long nobs = 0;
  for (const auto& sd : data) {
    resid_var += sd.resid.squaredNorm();
    nobs += sd.times.size();
  }
  resid_var = nobs > 0 ? resid_var / nobs : 1.0;
  if (resid_var <= 0.0) resid_var = 1.0;

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(grid_size, grid_size);
  for (int a = 0; a < grid_size; ++a) {
    for (int b = a; b < grid_size; ++b) {
      double num = 0.0, den = 0.0;
      double h = 0.15;
      for (int widen = 0; widen < 4 && den <= 0.0; ++widen, h *= 2.0) {
        num = den = 0.0;
        for (const auto& sd : data) {
          const int n = static_cast<int>(sd.times.size());
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
              if (j == k) continue;
              double w = epanechnikov((sd.times(j) - grid(a)) / h) *
                         epanechnikov((sd.times(k) - grid(b)) / h);
              if (w <= 0.0) continue;
              num += w * sd.resid(j) * sd.resid(k);
              den += w;
            }
        }
      }
      double v = den > 0.0 ? num / den : 0.0;
      cov(a, b) = v;
      cov(b, a) = v;
    }
  }

  double dt = 1.0 / (grid_size - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // eigenvalues ascending; take the top `rank`
  Eigen::MatrixXd grid_basis(grid_size, basis.size());
  for (int g = 0; g < grid_size; ++g)
    grid_basis.row(g) = basis.evaluate_ortho(grid(g)).transpose();
  Eigen::MatrixXd gtg = grid_basis.transpose() * grid_basis;

  B.resize(basis.size(), rank);
  lambda.resize(rank);
  for (int l = 0; l < rank; ++l) {
    int idx = grid_size - 1 - l;
    double ev = es.eigenvalues()(idx) * dt;
    lambda(l) = std::max(ev, 1e-4 * resid_var);
    Eigen::VectorXd fvals = es.eigenvectors().col(idx) / std::sqrt(dt);
    B.col(l) = gtg.ldlt().solve(grid_basis.transpose() * fvals);
  }
  B = qr_orthonormalize(B);

  double mean_diag_fit = 0.0;
  long cnt = 0;
  Eigen::VectorXd cov_diag = cov.diagonal();
  for (const auto& sd : data)
    for (int j = 0; j < sd.times.size(); ++j) {
      mean_diag_fit += linear_interp_diag(grid, cov_diag, sd.times(j));
      ++cnt;
    }
  if (cnt > 0) mean_diag_fit /= cnt;
  sigma2 = std::max(resid_var - mean_diag_fit, 1e-4 * resid_var);
}

}  // namespace

double eigenfunction_at(const FpcaModel& model, int l, double t) {
  if (l < 1 || l > model.rank())
    throw DataError("eigenfunction index out of range: " + std::to_string(l));
  return model.basis.evaluate_ortho(t).dot(model.coefficients.col(l - 1));
}

Eigen::VectorXd eigen_row(const FpcaModel& model, double t) {
  return model.coefficients.transpose() * model.basis.evaluate_ortho(t);
}

Eigen::MatrixXd marginal_covariance(const FpcaModel& model,
                                    const Eigen::VectorXd& times) {
  const int n = static_cast<int>(times.size());
  Eigen::MatrixXd phi(n, model.rank());
  for (int j = 0; j < n; ++j) phi.row(j) = eigen_row(model, times(j)).transpose();
  Eigen::MatrixXd sigma =
      phi * model.eigenvalues.asDiagonal() * phi.transpose();
  sigma.diagonal().array() += model.noise_variance;
  return 0.5 * (sigma + sigma.transpose());
}

double negative_log_likelihood(const FpcaModel& model, const Dataset& ds,
                               const std::string& outcome) {
  auto data = center_data(ds, outcome, model.mean, model.basis);
  return nll_core(data, model.coefficients, model.eigenvalues,
                  model.noise_variance);
}

void canonicalize(const SplineBasis& basis, Eigen::MatrixXd& coefficients,
                  Eigen::MatrixXd& lambda_matrix,
                  Eigen::VectorXd& eigenvalues_out) {
  // B Lambda B' -> Q (R Lambda R') Q' with inner eigendecomposition
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(coefficients);
  const int rank = static_cast<int>(coefficients.cols());
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(
                                              coefficients.rows(), rank);
  Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(rank, rank);
  r = r.triangularView<Eigen::Upper>();
  Eigen::MatrixXd inner = r * lambda_matrix * r.transpose();
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);

  eigenvalues_out.resize(rank);
  Eigen::MatrixXd b_new(coefficients.rows(), rank);
  for (int l = 0; l < rank; ++l) {
    int idx = rank - 1 - l;  // descending
    eigenvalues_out(l) = es.eigenvalues()(idx);
    b_new.col(l) = q * es.eigenvectors().col(idx);
  }

  // sign convention: integral of each eigenfunction >= 0
  Eigen::VectorXd integrals = basis.ortho_integrals();
  Eigen::VectorXd at_zero = basis.evaluate_ortho(0.0);
  for (int l = 0; l < rank; ++l) {
    double integral = integrals.dot(b_new.col(l));
    double key = std::abs(integral) > 1e-10 ? integral
                                            : at_zero.dot(b_new.col(l));
    if (key < 0.0) b_new.col(l) = -b_new.col(l);
  }
  coefficients = b_new;
  lambda_matrix = eigenvalues_out.asDiagonal();
}

FpcaModel fit_reml(const Dataset& ds, const std::string& outcome, int rank,
                   int basis_size, const FpcaOptions& options,
                   const FpcaModel* init) {
  if (rank < 1 || rank > basis_size)
    throw ConfigError("fpca rank must satisfy 1 <= L <= M");
  auto subjects = subject_points(ds, outcome);
  if (static_cast<int>(subjects.size()) < rank + 1)
    throw DataError("fpca needs at least L+1 subjects with the outcome");

  FpcaModel model;
  double bandwidth = options.bandwidth
                         ? *options.bandwidth
                         : select_bandwidth(subjects,
                                            options.bandwidth_candidates);
  model.mean = fit_local_linear(pool_points(subjects), bandwidth,
                                default_grid(options.mean_grid_size));
  model.basis = SplineBasis(basis_size);
  model.basis.orthonormalize();

  auto data = center_data(ds, outcome, model.mean, model.basis);

  ParamLayout layout{basis_size, rank};
  Eigen::MatrixXd b0;
  Eigen::VectorXd lam0(rank);
  double sig0;
  if (init && init->basis.size() == basis_size && init->rank() == rank) {
    b0 = init->coefficients;
    lam0 = init->eigenvalues;
    sig0 = init->noise_variance;
  } else {
    initialize_parameters(data, model.basis, rank, b0, lam0, sig0);
  }

  auto retract = [layout](const Eigen::VectorXd& x) {
    Eigen::MatrixXd b = qr_orthonormalize(layout.unpack_B(x));
    Eigen::VectorXd loglam = layout.unpack_loglam(x).cwiseMax(-kLogParamClamp)
                                 .cwiseMin(kLogParamClamp);
    double logsig = std::clamp(layout.unpack_logsig(x), -kLogParamClamp,
                               kLogParamClamp);
    return layout.pack(b, loglam, logsig);
  };
  auto objective = [&](const Eigen::VectorXd& x) {
    return nll_core(data, layout.unpack_B(x),
                    layout.unpack_loglam(x).array().exp().matrix(),
                    std::exp(layout.unpack_logsig(x)));
  };
  auto gradient = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd b = layout.unpack_B(x);
    Eigen::MatrixXd gb;
    Eigen::VectorXd glam;
    double gsig;
    nll_core(data, b, layout.unpack_loglam(x).array().exp().matrix(),
             std::exp(layout.unpack_logsig(x)), &gb, &glam, &gsig);
    // project onto the tangent space of orthonormal matrices at b
    Eigen::MatrixXd btg = b.transpose() * gb;
    gb.noalias() -= b * (0.5 * (btg + btg.transpose()));
    return layout.pack(gb, glam, gsig);
  };

  OptimOptions oo;
  oo.max_iterations = options.max_iterations;
  oo.relative_tolerance = options.relative_tolerance;
  Eigen::VectorXd x0 = layout.pack(
      b0, lam0.array().max(1e-300).log().matrix(),
      std::log(std::max(sig0, 1e-300)));
  OptimResult opt = minimize(objective, gradient, x0, oo, retract);

  Eigen::MatrixXd b_fit = layout.unpack_B(opt.x);
  Eigen::VectorXd lam_fit =
      layout.unpack_loglam(opt.x).array().exp().matrix();
  Eigen::MatrixXd lam_mat = lam_fit.asDiagonal();
  canonicalize(model.basis, b_fit, lam_mat, lam_fit);

  model.coefficients = b_fit;
  model.eigenvalues = lam_fit;
  model.noise_variance = std::exp(layout.unpack_logsig(opt.x));
  model.fit_log.iterations = opt.iterations;
  model.fit_log.final_nll = opt.fval;
  model.fit_log.converged = opt.converged;
  model.fit_log.objective_trace = opt.objective_trace;
  model.fit_log.effective_rank = 0;
  for (int l = 0; l < rank; ++l)
    if (model.eigenvalues(l) > 1e-10 * model.eigenvalues(0))
      ++model.fit_log.effective_rank;
  return model;
}

std::pair<int, int> choose_from_table(
    const std::vector<ModelSelectionEntry>& table) {
  std::vector<const ModelSelectionEntry*> feasible;
  for (const auto& e : table)
    if (e.feasible) feasible.push_back(&e);
  if (feasible.empty())
    throw NumericError("model selection: no feasible (L, M) pair");
  std::sort(feasible.begin(), feasible.end(),
            [](const ModelSelectionEntry* a, const ModelSelectionEntry* b) {
              if (a->rank != b->rank) return a->rank < b->rank;
              return a->basis_size < b->basis_size;
            });
  const ModelSelectionEntry* best = feasible.front();
  for (const auto* e : feasible)
    if (e->cv_score < best->cv_score) best = e;
  return {best->rank, best->basis_size};
}

ModelSelectionResult select_model(const Dataset& ds, const std::string& outcome,
                                  const std::vector<int>& rank_grid,
                                  const std::vector<int>& basis_grid,
                                  const FpcaOptions& options) {
  if (rank_grid.empty() || basis_grid.empty())
    throw ConfigError("model selection grids must be nonempty");

  auto subjects = subject_points(ds, outcome);
  double bandwidth = options.bandwidth
                         ? *options.bandwidth
                         : select_bandwidth(subjects,
                                            options.bandwidth_candidates);
  FpcaOptions fixed = options;
  fixed.bandwidth = bandwidth;

  const int n_subjects = static_cast<int>(ds.subjects.size());
  int n_folds = options.cv_folds > 0
                    ? std::min(options.cv_folds, n_subjects)
                    : n_subjects;
  std::vector<std::vector<int>> folds(n_folds);
  for (int i = 0; i < n_subjects; ++i) folds[i % n_folds].push_back(i);

  ModelSelectionResult res;
  for (int rank : rank_grid) {
    for (int m : basis_grid) {
      if (rank > m) continue;
      ModelSelectionEntry entry;
      entry.rank = rank;
      entry.basis_size = m;
      FpcaModel full;
      bool full_ok = true;
      try {
        full = fit_reml(ds, outcome, rank, m, fixed);
      } catch (const std::exception&) {
        full_ok = false;
      }
      if (!full_ok) {
        entry.feasible = false;
        entry.failed_folds = n_folds;
        res.table.push_back(entry);
        continue;
      }

      std::vector<double> fold_scores(n_folds, 0.0);
      std::vector<char> fold_ok(n_folds, 1);
      parallel_for(
          static_cast<std::size_t>(n_folds), options.threads,
          [&](std::size_t fi) {
            Dataset train = ds;
            Dataset held = ds;
            train.subjects.clear();
            held.subjects.clear();
            std::set<int> held_idx(folds[fi].begin(), folds[fi].end());
            for (int i = 0; i < n_subjects; ++i)
              (held_idx.count(i) ? held : train)
                  .subjects.push_back(ds.subjects[i]);
            try {
              FpcaModel fold_model =
                  fit_reml(train, outcome, rank, m, fixed, &full);
              fold_scores[fi] =
                  negative_log_likelihood(fold_model, held, outcome);
            } catch (const std::exception&) {
              fold_ok[fi] = 0;
            }
          });
      double score = 0.0;
      for (int fi = 0; fi < n_folds; ++fi) {
        if (fold_ok[fi])
          score += fold_scores[fi];
        else
          ++entry.failed_folds;
      }
      entry.feasible = entry.failed_folds < n_folds;
      entry.cv_score = score;
      res.table.push_back(entry);
    }
  }

  // a fold failing for every candidate signals a data problem
  if (!res.table.empty()) {
    bool all_pairs_have_failures = true;
    for (const auto& e : res.table)
      if (e.failed_folds == 0) all_pairs_have_failures = false;
    if (all_pairs_have_failures) {
      bool any_feasible = false;
      for (const auto& e : res.table)
        if (e.feasible) any_feasible = true;
      if (!any_feasible)
        throw NumericError("model selection: fitting failed for every fold");
    }
  }

  auto [l, m] = choose_from_table(res.table);
  res.chosen_rank = l;
  res.chosen_basis_size = m;
  return res;
}

SubjectScores pace_scores(const FpcaModel& model, const SubjectRecord& subject,
                          const std::string& outcome) {
  std::vector<double> t, r;
  for (const auto& o : subject.observations)
    if (auto v = o.value(outcome)) {
      t.push_back(o.time);
      r.push_back(*v - model.mean(o.time));
    }
  if (t.empty())
    throw DataError("subject '" + subject.id +
                    "' has no observations of the outcome");
  const int n = static_cast<int>(t.size());
  const int rank = model.rank();
  Eigen::MatrixXd phi(n, rank);
  for (int j = 0; j < n; ++j)
    phi.row(j) = eigen_row(model, t[j]).transpose();
  Eigen::VectorXd resid = Eigen::Map<Eigen::VectorXd>(r.data(), n);

  Eigen::MatrixXd sigma =
      phi * model.eigenvalues.asDiagonal() * phi.transpose();
  sigma.diagonal().array() += model.noise_variance;
  auto llt = chol_with_jitter(sigma, subject.id);

  Eigen::MatrixXd lam = model.eigenvalues.asDiagonal();
  SubjectScores out;
  out.subject_id = subject.id;
  out.scores = lam * phi.transpose() * llt.solve(resid);
  Eigen::MatrixXd cov = lam - lam * phi.transpose() * llt.solve(phi * lam);
  out.conditional_covariance = 0.5 * (cov + cov.transpose());
  return out;
}

double reconstruct(const FpcaModel& model, const SubjectScores& scores,
                   double t) {
  if (t < 0.0 || t > 1.0)
    throw DataError("reconstruction outside [0,1]: t = " + std::to_string(t));
  return model.mean(t) + eigen_row(model, t).dot(scores.scores);
}

ForecastRun forecast_last(const Dataset& ds, const std::string& outcome,
                          const ForecastOptions& options) {
  if (!ds.rescaled())
    throw DataError("forecasting requires a rescaled dataset");
  const double scale = ds.time_scale;

  // forecast cohort: enough outcome observations
  struct CohortEntry {
    int subject_index;
    int last_obs_index;   // index into observations
    int prev_obs_index;   // previous observation carrying the outcome
  };
  std::vector<CohortEntry> cohort;
  for (int i = 0; i < static_cast<int>(ds.subjects.size()); ++i) {
    const auto& s = ds.subjects[i];
    std::vector<int> with_outcome;
    for (int j = 0; j < static_cast<int>(s.observations.size()); ++j)
      if (s.observations[j].has(outcome)) with_outcome.push_back(j);
    if (static_cast<int>(with_outcome.size()) < options.min_observations)
      continue;
    cohort.push_back({i, with_outcome.back(),
                      with_outcome[with_outcome.size() - 2]});
  }
  if (cohort.empty()) throw DataError("forecast cohort is empty");

  // Bandwidth, (L, M), and the warm-start model are computed on a base
  // dataset with every cohort subject's held-out observation removed, so
  // no held-out value can influence its own forecast.
  Dataset base = ds;
  for (const auto& e : cohort) {
    auto& obs = base.subjects[e.subject_index].observations;
    obs.erase(obs.begin() + e.last_obs_index);
  }

  FpcaOptions fit_opts = options.fit;
  if (!fit_opts.bandwidth)
    fit_opts.bandwidth = select_bandwidth(subject_points(base, outcome),
                                          fit_opts.bandwidth_candidates);

  int rank, basis_size;
  if (options.rank_grid.size() == 1 && options.basis_grid.size() == 1) {
    rank = options.rank_grid[0];
    basis_size = options.basis_grid[0];
  } else {
    auto sel = select_model(base, outcome, options.rank_grid,
                            options.basis_grid, fit_opts);
    rank = sel.chosen_rank;
    basis_size = sel.chosen_basis_size;
  }

  ForecastRun run;
  run.full_model = fit_reml(base, outcome, rank, basis_size, fit_opts);

  std::vector<std::optional<ForecastResult>> slots(cohort.size());
  std::vector<std::string> warn(cohort.size());

  parallel_for(cohort.size(), options.fit.threads, [&](std::size_t c) {
    const auto& entry = cohort[c];
    const auto& subj = ds.subjects[entry.subject_index];
    const Observation& last = subj.observations[entry.last_obs_index];
    double t_last = last.time;
    double truth = *last.value(outcome);
    double t_prev = subj.observations[entry.prev_obs_index].time;

    // the reduced dataset is built first; nothing downstream sees the
    // held-out observation
    Dataset reduced = ds;
    auto& robs = reduced.subjects[entry.subject_index].observations;
    robs.erase(robs.begin() + entry.last_obs_index);

    try {
      int fold_rank = rank, fold_m = basis_size;
      if (options.reselect_per_fold) {
        auto sel = select_model(reduced, outcome, options.rank_grid,
                                options.basis_grid, fit_opts);
        fold_rank = sel.chosen_rank;
        fold_m = sel.chosen_basis_size;
      }
      FpcaOptions per_fold = fit_opts;
      per_fold.threads = 1;
      const FpcaModel* warm =
          (fold_rank == rank && fold_m == basis_size) ? &run.full_model
                                                      : nullptr;
      FpcaModel fold_model =
          fit_reml(reduced, outcome, fold_rank, fold_m, per_fold, warm);
      SubjectScores scores = pace_scores(
          fold_model, reduced.subjects[entry.subject_index], outcome);

      ForecastResult res;
      res.subject_id = subj.id;
      res.t_last_months = t_last * scale;
      res.truth = truth;
      res.prediction = reconstruct(fold_model, scores, t_last);
      res.gap_months = (t_last - t_prev) * scale;
      res.near = res.gap_months <= options.near_gap_months + 1e-9;
      res.early = res.t_last_months <= options.early_months + 1e-9;
      slots[c] = res;
    } catch (const std::exception& e) {
      warn[c] = "forecast failed for subject '" + subj.id + "': " + e.what();
    }
  });

  for (std::size_t c = 0; c < cohort.size(); ++c) {
    if (slots[c])
      run.results.push_back(*slots[c]);
    else
      run.warnings.push_back(warn[c]);
  }
  return run;
}

}  // namespace fdapred
