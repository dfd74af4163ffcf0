#include "fdapred/cleaning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fdapred {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool matches(const CleaningRule& rule, const Observation& obs) {
  auto v = obs.value(rule.variable);
  if (!v) return false;
  return rule.op == CleaningRule::Op::Less ? *v < rule.threshold
                                           : *v > rule.threshold;
}

void check_known_variable(const std::string& name) {
  const auto& all = all_variable_names();
  if (std::find(all.begin(), all.end(), name) == all.end())
    throw ConfigError("cleaning rule references unknown variable '" + name +
                      "'");
}

// Applies one stage and records provenance. The stage callback edits a
// copy of the subject (possibly emptying it); empty subjects are dropped.
template <typename Stage>
Dataset run_stage(const Dataset& ds, const std::string& label, Stage&& stage) {
  Dataset out = ds;
  out.subjects.clear();
  for (const auto& s : ds.subjects) {
    SubjectRecord kept = stage(s);
    if (!kept.observations.empty()) out.subjects.push_back(std::move(kept));
  }
  ProvenanceEntry entry;
  entry.rule = label;
  entry.subjects_before = static_cast<int>(ds.subjects.size());
  entry.subjects_after = static_cast<int>(out.subjects.size());
  entry.observations_before = ds.total_observations();
  entry.observations_after = out.total_observations();
  out.provenance.push_back(entry);
  return out;
}

}  // namespace

std::string CleaningRule::describe() const {
  std::ostringstream os;
  os << (action == Action::RemovePatient ? "remove patients with "
                                         : "remove observations with ")
     << variable;
  if (scope == Scope::PatientBaseline) os << "(t0)";
  os << (op == Op::Less ? " < " : " > ") << threshold;
  return os.str();
}

std::vector<CleaningRule> default_cleaning_rules() {
  using Op = CleaningRule::Op;
  using Scope = CleaningRule::Scope;
  using Action = CleaningRule::Action;
  return {
      {"TIMP", Op::Greater, 500.0, Scope::PatientBaseline, Action::RemovePatient},
      {"TIMP", Op::Less, 50.0, Scope::PatientBaseline, Action::RemovePatient},
      {"P3NP", Op::Greater, 25.0, Scope::Observation, Action::RemoveObservation},
      {"FVC", Op::Greater, 170.0, Scope::Observation, Action::RemoveObservation},
      {"FVC", Op::Less, 50.0, Scope::Observation, Action::RemoveObservation},
      {"TLC", Op::Less, 25.0, Scope::Observation, Action::RemoveObservation},
      {"DLCO", Op::Greater, 120.0, Scope::Observation, Action::RemoveObservation},
      {"NT", Op::Greater, 1000.0, Scope::Observation, Action::RemoveObservation},
  };
}

Dataset apply_cleaning(const Dataset& ds, const CleaningConfig& config) {
  if (config.horizon_months <= 0.0)
    throw ConfigError("cleaning horizon must be positive");
  for (const auto& r : config.rules) {
    check_known_variable(r.variable);
    if (!std::isfinite(r.threshold))
      throw ConfigError("cleaning rule threshold must be finite");
  }
  for (const auto& v : config.modeled_variables) check_known_variable(v);

  Dataset cur = ds;
  cur.horizon_months = config.horizon_months;

  if (!config.modeled_variables.empty()) {
    cur = run_stage(cur, "remove observations with missing values",
                    [&](const SubjectRecord& s) {
                      SubjectRecord kept{s.id, {}};
                      for (const auto& o : s.observations) {
                        bool complete = true;
                        for (const auto& v : config.modeled_variables)
                          if (!o.has(v)) complete = false;
                        if (complete) kept.observations.push_back(o);
                      }
                      return kept;
                    });
  }

  for (const auto& rule : config.rules) {
    cur = run_stage(cur, rule.describe(), [&](const SubjectRecord& s) {
      SubjectRecord kept{s.id, {}};
      bool drop_patient = false;
      if (rule.scope == CleaningRule::Scope::PatientBaseline) {
        if (matches(rule, s.observations.front()))
          drop_patient = rule.action == CleaningRule::Action::RemovePatient;
      } else if (rule.action == CleaningRule::Action::RemovePatient) {
        for (const auto& o : s.observations)
          if (matches(rule, o)) drop_patient = true;
      }
      if (drop_patient) return kept;
      for (std::size_t j = 0; j < s.observations.size(); ++j) {
        const auto& o = s.observations[j];
        bool in_scope = rule.scope == CleaningRule::Scope::Observation ||
                        j == 0;  // baseline scope looks at the first visit
        if (rule.action == CleaningRule::Action::RemoveObservation &&
            in_scope && matches(rule, o))
          continue;
        kept.observations.push_back(o);
      }
      return kept;
    });
  }

  {
    std::ostringstream label;
    label << "remove observations with t > " << config.horizon_months;
    cur = run_stage(cur, label.str(), [&](const SubjectRecord& s) {
      SubjectRecord kept{s.id, {}};
      for (const auto& o : s.observations)
        if (o.time <= config.horizon_months) kept.observations.push_back(o);
      return kept;
    });
  }

  {
    std::ostringstream label;
    label << "remove patients with fewer than " << config.min_observations
          << " observations";
    cur = run_stage(cur, label.str(), [&](const SubjectRecord& s) {
      if (static_cast<int>(s.observations.size()) < config.min_observations)
        return SubjectRecord{s.id, {}};
      return s;
    });
  }

  return cur;
}

Dataset rescale_time(const Dataset& ds, double horizon_months) {
  if (horizon_months <= 0.0) throw ConfigError("horizon must be positive");
  Dataset out = ds;
  out.time_scale = horizon_months;
  out.horizon_months = horizon_months;
  for (auto& s : out.subjects)
    for (auto& o : s.observations) {
      if (o.time > horizon_months)
        throw DataError("subject '" + s.id + "': time " +
                        std::to_string(o.time) +
                        " exceeds horizon; run cleaning first");
      o.time /= horizon_months;
    }
  return out;
}

BaselineSummary describe_baseline(const Dataset& ds) {
  if (ds.subjects.size() < 2)
    throw DataError("baseline summary needs at least 2 subjects");
  const auto& vars = all_variable_names();
  const int p = static_cast<int>(vars.size());
  const int n = static_cast<int>(ds.subjects.size());

  // baseline matrix with NaN for missing
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i) {
    const auto& first = ds.subjects[i].observations.front();
    for (int k = 0; k < p; ++k) {
      auto v = first.value(vars[k]);
      x(i, k) = v ? *v : kNaN;
    }
  }

  BaselineSummary out;
  out.variables = vars;
  out.mean = Eigen::VectorXd::Constant(p, kNaN);
  out.variance = Eigen::VectorXd::Constant(p, kNaN);
  out.correlation = Eigen::MatrixXd::Constant(p, p, kNaN);

  for (int k = 0; k < p; ++k) {
    double sum = 0.0;
    int cnt = 0;
    for (int i = 0; i < n; ++i)
      if (!std::isnan(x(i, k))) {
        sum += x(i, k);
        ++cnt;
      }
    if (cnt >= 1) out.mean(k) = sum / cnt;
    if (cnt >= 2) {
      double ss = 0.0;
      for (int i = 0; i < n; ++i)
        if (!std::isnan(x(i, k))) {
          double d = x(i, k) - out.mean(k);
          ss += d * d;
        }
      out.variance(k) = ss / (cnt - 1);
    }
  }

  for (int a = 0; a < p; ++a) {
    for (int b = a; b < p; ++b) {
      // pairwise-complete Pearson
      double sa = 0, sb = 0;
      int cnt = 0;
      for (int i = 0; i < n; ++i)
        if (!std::isnan(x(i, a)) && !std::isnan(x(i, b))) {
          sa += x(i, a);
          sb += x(i, b);
          ++cnt;
        }
      if (cnt < 2) continue;
      double ma = sa / cnt, mb = sb / cnt;
      double saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < n; ++i)
        if (!std::isnan(x(i, a)) && !std::isnan(x(i, b))) {
          saa += (x(i, a) - ma) * (x(i, a) - ma);
          sbb += (x(i, b) - mb) * (x(i, b) - mb);
          sab += (x(i, a) - ma) * (x(i, b) - mb);
        }
      double r = kNaN;
      if (a == b) {
        r = 1.0;
      } else if (saa > 0 && sbb > 0) {
        r = sab / std::sqrt(saa * sbb);
        r = std::clamp(r, -1.0, 1.0);
      }
      out.correlation(a, b) = r;
      out.correlation(b, a) = r;
    }
  }
  return out;
}

}  // namespace fdapred
