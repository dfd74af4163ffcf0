#include "fdapred/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace fdapred {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse number '" + v +
                      "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  double x = to_double(key, v);
  if (x != std::floor(x))
    throw ConfigError("config key '" + key + "': expected an integer");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& tok : split(v, ','))
    if (!tok.empty()) out.push_back(to_double(key, tok));
  return out;
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& tok : split(v, ','))
    if (!tok.empty()) out.push_back(to_int(key, tok));
  return out;
}

CleaningRule parse_rule(const std::string& text) {
  // e.g. "P3NP > 25 observation remove-observation"
  std::istringstream ss(text);
  std::string var, op, scope, action;
  double threshold;
  if (!(ss >> var >> op >> threshold >> scope >> action))
    throw ConfigError("cannot parse cleaning rule '" + text + "'");
  CleaningRule rule;
  rule.variable = var;
  if (op == "<")
    rule.op = CleaningRule::Op::Less;
  else if (op == ">")
    rule.op = CleaningRule::Op::Greater;
  else
    throw ConfigError("cleaning rule operator must be < or >: '" + text + "'");
  rule.threshold = threshold;
  if (scope == "observation")
    rule.scope = CleaningRule::Scope::Observation;
  else if (scope == "patient-baseline")
    rule.scope = CleaningRule::Scope::PatientBaseline;
  else
    throw ConfigError("cleaning rule scope must be observation or "
                      "patient-baseline: '" + text + "'");
  if (action == "remove-observation")
    rule.action = CleaningRule::Action::RemoveObservation;
  else if (action == "remove-patient")
    rule.action = CleaningRule::Action::RemovePatient;
  else
    throw ConfigError("cleaning rule action must be remove-observation or "
                      "remove-patient: '" + text + "'");
  return rule;
}

std::string rule_to_text(const CleaningRule& r) {
  std::ostringstream ss;
  ss << r.variable << (r.op == CleaningRule::Op::Less ? " < " : " > ")
     << r.threshold << " "
     << (r.scope == CleaningRule::Scope::Observation ? "observation"
                                                     : "patient-baseline")
     << " "
     << (r.action == CleaningRule::Action::RemoveObservation
             ? "remove-observation"
             : "remove-patient");
  return ss.str();
}

}  // namespace

FpcaOptions RunConfig::fpca_options() const {
  FpcaOptions o;
  o.bandwidth = bandwidth;
  o.bandwidth_candidates = bandwidth_candidates;
  o.mean_grid_size = mean_grid_size;
  o.cv_folds = cv_folds;
  o.threads = threads;
  return o;
}

ForecastOptions RunConfig::forecast_options() const {
  ForecastOptions o;
  o.fit = fpca_options();
  o.rank_grid = rank_grid;
  o.basis_grid = basis_grid;
  o.reselect_per_fold = reselect_per_fold;
  o.min_observations = min_forecast_observations;
  return o;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  bool rules_cleared = false;

  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '"' && value.back() == '"' &&
        value.size() >= 2)
      value = value.substr(1, value.size() - 2);
    std::string full = section.empty() ? key : section + "." + key;

    if (full == "io.input") {
      cfg.input_path = value;
    } else if (full == "io.output_dir") {
      cfg.output_dir = value;
    } else if (full.rfind("io.column.", 0) == 0) {
      std::string logical = full.substr(std::string("io.column.").size());
      if (cfg.columns.find(logical) == cfg.columns.end())
        throw ConfigError("unknown column mapping '" + logical + "'");
      cfg.columns[logical] = value;
    } else if (full == "cleaning.horizon") {
      cfg.cleaning.horizon_months = to_double(full, value);
    } else if (full == "cleaning.min_observations") {
      cfg.cleaning.min_observations = to_int(full, value);
    } else if (full == "cleaning.modeled") {
      if (value == "all") {
        cfg.cleaning.modeled_variables = all_variable_names();
      } else if (value == "none") {
        cfg.cleaning.modeled_variables.clear();
      } else {
        cfg.cleaning.modeled_variables.clear();
        for (const auto& v : split(value, ','))
          if (!v.empty()) cfg.cleaning.modeled_variables.push_back(v);
      }
    } else if (full == "cleaning.default_rules") {
      if (!to_bool(full, value)) {
        cfg.cleaning.rules.clear();
        rules_cleared = true;
      }
    } else if (full == "cleaning.rule") {
      if (!rules_cleared) {  // first explicit rule replaces the defaults
        cfg.cleaning.rules.clear();
        rules_cleared = true;
      }
      cfg.cleaning.rules.push_back(parse_rule(value));
    } else if (full == "fpca.outcome") {
      cfg.fpca_outcome = value;
    } else if (full == "fpca.rank_grid") {
      cfg.rank_grid = to_ints(full, value);
    } else if (full == "fpca.basis_grid") {
      cfg.basis_grid = to_ints(full, value);
    } else if (full == "fpca.bandwidth") {
      cfg.bandwidth = to_double(full, value);
    } else if (full == "fpca.bandwidth_candidates") {
      cfg.bandwidth_candidates = to_doubles(full, value);
    } else if (full == "fpca.mean_grid_size") {
      cfg.mean_grid_size = to_int(full, value);
    } else if (full == "fpca.cv_folds") {
      cfg.cv_folds = to_int(full, value);
    } else if (full == "fpca.reselect_per_fold") {
      cfg.reselect_per_fold = to_bool(full, value);
    } else if (full == "fpca.min_forecast_observations") {
      cfg.min_forecast_observations = to_int(full, value);
    } else if (full == "lmm.outcome") {
      cfg.lmm_outcome = value;
    } else if (full == "lmm.biomarkers") {
      cfg.lmm_biomarkers.clear();
      for (const auto& v : split(value, ','))
        if (!v.empty()) cfg.lmm_biomarkers.push_back(v);
    } else if (full == "lmm.snap_tolerance") {
      cfg.snap_tolerance_months = to_double(full, value);
    } else if (full == "lmm.log_biomarker") {
      cfg.log_biomarker = to_bool(full, value);
    } else if (full == "eval.null_leave_one_out") {
      cfg.null_leave_one_out = to_bool(full, value);
    } else if (full == "eval.update_biomarker") {
      cfg.update_biomarker = value;
    } else if (full == "simulate.kind") {
      if (value != "fpca" && value != "lmm")
        throw ConfigError("simulate.kind must be fpca or lmm");
      cfg.simulate_kind = value;
    } else if (full == "simulate.subjects") {
      cfg.sim.subjects = to_int(full, value);
      cfg.sim_lmm.subjects = cfg.sim.subjects;
    } else if (full == "simulate.outcome") {
      cfg.sim.outcome = value;
      cfg.sim_lmm.outcome = value;
    } else if (full == "simulate.eigenvalues") {
      auto v = to_doubles(full, value);
      cfg.sim.eigenvalues =
          Eigen::Map<Eigen::VectorXd>(v.data(), v.size());
    } else if (full == "simulate.noise_variance") {
      cfg.sim.noise_variance = to_double(full, value);
    } else if (full == "simulate.attendance") {
      cfg.sim.attendance_probability = to_double(full, value);
    } else if (full == "simulate.jitter") {
      cfg.sim.jitter_months = to_double(full, value);
    } else if (full == "simulate.mean_level") {
      cfg.sim.mean_level = to_double(full, value);
    } else if (full == "simulate.mean_slope") {
      cfg.sim.mean_slope = to_double(full, value);
    } else if (full == "simulate.family") {
      cfg.sim.eigen_family = value;
    } else if (full == "run.seed") {
      cfg.seed = static_cast<std::uint64_t>(to_double(full, value));
    } else if (full == "run.threads") {
      cfg.threads = to_int(full, value);
    } else {
      throw ConfigError("unknown config key '" + full + "' (line " +
                        std::to_string(lineno) + ")");
    }
  }

  if (cfg.rank_grid.empty() || cfg.basis_grid.empty())
    throw ConfigError("fpca grids must be nonempty");
  if (cfg.threads < 1) throw ConfigError("run.threads must be >= 1");
  cfg.sim.seed = cfg.seed;
  cfg.sim_lmm.seed = cfg.seed;
  return cfg;
}

std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream o;
  o.precision(12);
  auto join_d = [](const std::vector<double>& v) {
    std::ostringstream s;
    s.precision(12);
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  auto join_i = [](const std::vector<int>& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  auto join_s = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };

  o << "[io]\n";
  o << "input = " << cfg.input_path << "\n";
  o << "output_dir = " << cfg.output_dir << "\n";
  for (const auto& [logical, column] : cfg.columns)
    o << "column." << logical << " = " << column << "\n";

  o << "\n[cleaning]\n";
  o << "horizon = " << cfg.cleaning.horizon_months << "\n";
  o << "min_observations = " << cfg.cleaning.min_observations << "\n";
  o << "modeled = "
    << (cfg.cleaning.modeled_variables.empty()
            ? "none"
            : join_s(cfg.cleaning.modeled_variables))
    << "\n";
  for (const auto& r : cfg.cleaning.rules)
    o << "rule = " << rule_to_text(r) << "\n";

  o << "\n[fpca]\n";
  o << "outcome = " << cfg.fpca_outcome << "\n";
  o << "rank_grid = " << join_i(cfg.rank_grid) << "\n";
  o << "basis_grid = " << join_i(cfg.basis_grid) << "\n";
  if (cfg.bandwidth) o << "bandwidth = " << *cfg.bandwidth << "\n";
  o << "bandwidth_candidates = " << join_d(cfg.bandwidth_candidates) << "\n";
  o << "mean_grid_size = " << cfg.mean_grid_size << "\n";
  o << "cv_folds = " << cfg.cv_folds << "\n";
  o << "reselect_per_fold = " << (cfg.reselect_per_fold ? "true" : "false")
    << "\n";
  o << "min_forecast_observations = " << cfg.min_forecast_observations << "\n";

  o << "\n[lmm]\n";
  o << "outcome = " << cfg.lmm_outcome << "\n";
  o << "biomarkers = " << join_s(cfg.lmm_biomarkers) << "\n";
  o << "snap_tolerance = " << cfg.snap_tolerance_months << "\n";
  o << "log_biomarker = " << (cfg.log_biomarker ? "true" : "false") << "\n";

  o << "\n[eval]\n";
  o << "null_leave_one_out = " << (cfg.null_leave_one_out ? "true" : "false")
    << "\n";
  o << "update_biomarker = " << cfg.update_biomarker << "\n";

  o << "\n[simulate]\n";
  o << "kind = " << cfg.simulate_kind << "\n";
  o << "subjects = " << cfg.sim.subjects << "\n";
  o << "outcome = " << cfg.sim.outcome << "\n";
  std::vector<double> ev(cfg.sim.eigenvalues.data(),
                         cfg.sim.eigenvalues.data() +
                             cfg.sim.eigenvalues.size());
  o << "eigenvalues = " << join_d(ev) << "\n";
  o << "noise_variance = " << cfg.sim.noise_variance << "\n";
  o << "attendance = " << cfg.sim.attendance_probability << "\n";
  o << "jitter = " << cfg.sim.jitter_months << "\n";
  o << "mean_level = " << cfg.sim.mean_level << "\n";
  o << "mean_slope = " << cfg.sim.mean_slope << "\n";
  o << "family = " << cfg.sim.eigen_family << "\n";

  o << "\n[run]\n";
  o << "seed = " << cfg.seed << "\n";
  o << "threads = " << cfg.threads << "\n";
  return o.str();
}

}  // namespace fdapred
