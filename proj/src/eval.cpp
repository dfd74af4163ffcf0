#include "fdapred/eval.hpp"

#include <cmath>

#include "fdapred/stats.hpp"

namespace fdapred {

double mse(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw DataError("MSE of an empty sequence");
  double s = 0.0;
  for (const auto& [truth, pred] : pairs) {
    double e = truth - pred;
    s += e * e;
  }
  return s / pairs.size();
}

double r_squared(double mse_model, double mse_null) {
  if (mse_null <= 0.0) throw DataError("R^2 undefined: null MSE is zero");
  if (mse_model < 0.0) throw DataError("negative model MSE");
  return 1.0 - mse_model / mse_null;
}

EvalReport subgroup_report(const std::vector<ForecastResult>& results,
                           bool leave_one_out_null) {
  if (results.empty()) throw DataError("subgroup report of an empty cohort");
  const int n = static_cast<int>(results.size());

  double truth_sum = 0.0;
  for (const auto& r : results) truth_sum += r.truth;

  EvalReport rep;
  double sse_model = 0.0, sse_null = 0.0;
  double sse_near = 0.0, sse_far = 0.0, sse_early = 0.0, sse_late = 0.0;
  for (const auto& r : results) {
    double null_pred = leave_one_out_null && n > 1
                           ? (truth_sum - r.truth) / (n - 1)
                           : truth_sum / n;
    double se = r.squared_error();
    sse_model += se;
    double en = r.truth - null_pred;
    sse_null += en * en;
    rep.residuals.push_back(r.error());
    if (r.near) {
      sse_near += se;
      ++rep.near.count;
    } else {
      sse_far += se;
      ++rep.far.count;
    }
    if (r.early) {
      sse_early += se;
      ++rep.early.count;
    } else {
      sse_late += se;
      ++rep.late.count;
    }
  }
  rep.mse_model = sse_model / n;
  rep.mse_null = sse_null / n;
  rep.r2 = rep.mse_null > 0.0 ? r_squared(rep.mse_model, rep.mse_null) : 0.0;
  if (rep.near.count > 0) rep.near.mse = sse_near / rep.near.count;
  if (rep.far.count > 0) rep.far.mse = sse_far / rep.far.count;
  if (rep.early.count > 0) rep.early.mse = sse_early / rep.early.count;
  if (rep.late.count > 0) rep.late.mse = sse_late / rep.late.count;
  return rep;
}

ResidualUpdate residual_update(
    const std::vector<ForecastResult>& results,
    const std::map<std::string, double>& biomarker_at_last,
    const std::string& biomarker_name, bool log_transform) {
  ResidualUpdate out;
  out.biomarker = biomarker_name;

  std::vector<double> r, z, pred, truth;
  for (const auto& res : results) {
    auto it = biomarker_at_last.find(res.subject_id);
    if (it == biomarker_at_last.end() ||
        (log_transform && it->second <= 0.0)) {
      ++out.excluded_missing;
      continue;
    }
    out.included_ids.push_back(res.subject_id);
    r.push_back(res.error());
    z.push_back(log_transform ? std::log(it->second) : it->second);
    pred.push_back(res.prediction);
    truth.push_back(res.truth);
  }
  const int n = static_cast<int>(r.size());
  if (n < 3) throw DataError("residual regression needs at least 3 subjects");

  auto ols = [](const std::vector<double>& zz, const std::vector<double>& rr,
                int skip) {
    double sz = 0, sr = 0;
    int cnt = 0;
    for (std::size_t i = 0; i < zz.size(); ++i) {
      if (static_cast<int>(i) == skip) continue;
      sz += zz[i];
      sr += rr[i];
      ++cnt;
    }
    double mz = sz / cnt, mr = sr / cnt;
    double szz = 0, szr = 0;
    for (std::size_t i = 0; i < zz.size(); ++i) {
      if (static_cast<int>(i) == skip) continue;
      szz += (zz[i] - mz) * (zz[i] - mz);
      szr += (zz[i] - mz) * (rr[i] - mr);
    }
    if (szz <= 0.0)
      throw DataError("residual regression: all biomarker values identical");
    double beta = szr / szz;
    double alpha = mr - beta * mz;
    return std::tuple<double, double, double>(alpha, beta, szz);
  };

  auto [alpha, beta, szz] = ols(z, r, -1);
  out.alpha = alpha;
  out.beta = beta;

  double sse_resid = 0.0;
  for (int i = 0; i < n; ++i) {
    double fit = alpha + beta * z[i];
    sse_resid += (r[i] - fit) * (r[i] - fit);
  }
  double s2 = sse_resid / (n - 2);
  double se_beta = std::sqrt(s2 / szz);
  double tstat = se_beta > 0.0 ? beta / se_beta
                               : std::numeric_limits<double>::infinity();
  out.p_value = stats::t_two_sided_p(tstat, n - 2);

  double sse_updated = 0.0, sse_original = 0.0;
  for (int i = 0; i < n; ++i) {
    double updated = pred[i] + alpha + beta * z[i];
    out.updated_predictions.push_back(updated);
    sse_updated += (truth[i] - updated) * (truth[i] - updated);
    sse_original += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  }
  out.mse_in_sample = sse_updated / n;
  double mse_original = sse_original / n;
  out.r2_vs_original =
      mse_original > 0.0 ? r_squared(out.mse_in_sample, mse_original) : 0.0;

  double sse_cv = 0.0;
  for (int i = 0; i < n; ++i) {
    auto [a_i, b_i, unused] = ols(z, r, i);
    double updated = pred[i] + a_i + b_i * z[i];
    sse_cv += (truth[i] - updated) * (truth[i] - updated);
  }
  out.mse_loocv = sse_cv / n;
  return out;
}

}  // namespace fdapred
