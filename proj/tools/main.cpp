#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdapred/config.hpp"
#include "fdapred/eval.hpp"
#include "fdapred/model_io.hpp"
#include "fdapred/stats.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace fdapred;

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

std::string hex64(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

struct Run {
  RunConfig cfg;
  fs::path dir;
  std::string config_hash;
  std::vector<fs::path> artifacts;
  std::chrono::steady_clock::time_point started =
      std::chrono::steady_clock::now();

  fs::path path(const std::string& name) {
    fs::path p = dir / name;
    artifacts.push_back(p);
    return p;
  }

  void write_manifest(const std::string& command) {
    Json m;
    m["command"] = command;
    m["config_hash"] = config_hash;
    m["version"] = "1.0.0";
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - started)
                      .count();
    m["elapsed_seconds"] = secs;
    Json files = Json::array();
    for (const auto& p : artifacts) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      files.push_back({{"name", p.filename().string()},
                       {"hash", hex64(fnv1a64(ss.str()))}});
    }
    m["files"] = files;
    std::ofstream out(dir / "manifest.json");
    out << m.dump(2) << "\n";
  }
};

Run open_run(const RunConfig& cfg) {
  Run run;
  run.cfg = cfg;
  run.config_hash = hex64(fnv1a64(config_to_text(cfg)));
  run.dir = fs::path(cfg.output_dir) / ("run-" + run.config_hash);
  fs::create_directories(run.dir);
  return run;
}

Dataset load_input(const RunConfig& cfg) {
  if (cfg.input_path.empty())
    throw ConfigError("io.input is required for this command");
  return ingest_csv(cfg.input_path, cfg.columns);
}

Json subgroup_to_json(const SubgroupStat& s) {
  Json j;
  j["count"] = s.count;
  if (s.mse)
    j["mse"] = *s.mse;
  else
    j["mse"] = nullptr;
  return j;
}

Json eval_to_json(const EvalReport& rep) {
  Json j;
  j["mse_null"] = rep.mse_null;
  j["mse_model"] = rep.mse_model;
  j["r2"] = rep.r2;
  j["near"] = subgroup_to_json(rep.near);
  j["far"] = subgroup_to_json(rep.far);
  j["early"] = subgroup_to_json(rep.early);
  j["late"] = subgroup_to_json(rep.late);
  return j;
}

void cmd_simulate(Run& run) {
  if (run.cfg.simulate_kind == "lmm") {
    Dataset ds = generate_lmm(run.cfg.sim_lmm);
    write_csv(ds, run.cfg.columns, run.path("data.csv").string());
    Json truth;
    truth["kind"] = "lmm";
    truth["beta"] = {run.cfg.sim_lmm.beta(0), run.cfg.sim_lmm.beta(1),
                     run.cfg.sim_lmm.beta(2)};
    truth["residual_variance"] = run.cfg.sim_lmm.residual_variance;
    truth["seed"] = run.cfg.seed;
    std::ofstream out(run.path("truth.json"));
    out << truth.dump(2) << "\n";
    return;
  }
  SimOutput sim = generate(run.cfg.sim);
  write_csv(sim.dataset, run.cfg.columns, run.path("data.csv").string());
  Json truth;
  truth["kind"] = "fpca";
  truth["mean_level"] = run.cfg.sim.mean_level;
  truth["mean_slope"] = run.cfg.sim.mean_slope;
  truth["eigen_family"] = run.cfg.sim.eigen_family;
  Json ev = Json::array();
  for (int l = 0; l < run.cfg.sim.eigenvalues.size(); ++l)
    ev.push_back(run.cfg.sim.eigenvalues(l));
  truth["eigenvalues"] = ev;
  truth["noise_variance"] = run.cfg.sim.noise_variance;
  truth["seed"] = run.cfg.seed;
  Json scores = Json::array();
  for (int i = 0; i < sim.true_scores.rows(); ++i) {
    Json row = Json::array();
    for (int l = 0; l < sim.true_scores.cols(); ++l)
      row.push_back(sim.true_scores(i, l));
    scores.push_back(row);
  }
  truth["scores"] = scores;
  std::ofstream out(run.path("truth.json"));
  out << truth.dump(2) << "\n";
}

void cmd_clean(Run& run) {
  Dataset raw = load_input(run.cfg);
  Dataset cleaned = apply_cleaning(raw, run.cfg.cleaning);
  write_csv(cleaned, run.cfg.columns, run.path("cleaned.csv").string());
  Json prov = Json::array();
  for (const auto& e : cleaned.provenance)
    prov.push_back({{"rule", e.rule},
                    {"subjects_before", e.subjects_before},
                    {"subjects_after", e.subjects_after},
                    {"observations_before", e.observations_before},
                    {"observations_after", e.observations_after}});
  Json j;
  j["stages"] = prov;
  j["final_subjects"] = static_cast<int>(cleaned.subjects.size());
  j["final_observations"] = cleaned.total_observations();
  std::ofstream out(run.path("provenance.json"));
  out << j.dump(2) << "\n";
}

void cmd_describe(Run& run) {
  Dataset ds = load_input(run.cfg);
  BaselineSummary s = describe_baseline(ds);
  std::ofstream csv(run.path("baseline.csv"));
  csv << "variable,mean,variance";
  for (const auto& v : s.variables) csv << ",corr_" << v;
  csv << "\n";
  auto cell = [&](double x) {
    return std::isnan(x) ? std::string("") : fmt(x);
  };
  for (std::size_t k = 0; k < s.variables.size(); ++k) {
    csv << s.variables[k] << "," << cell(s.mean(k)) << ","
        << cell(s.variance(k));
    for (std::size_t j = 0; j < s.variables.size(); ++j)
      csv << "," << cell(s.correlation(k, j));
    csv << "\n";
  }
}

void cmd_fpca_fit(Run& run) {
  Dataset ds = rescale_time(load_input(run.cfg),
                            run.cfg.cleaning.horizon_months);
  FpcaOptions opts = run.cfg.fpca_options();
  int rank = run.cfg.rank_grid[0], m = run.cfg.basis_grid[0];
  Json selection;
  if (run.cfg.rank_grid.size() > 1 || run.cfg.basis_grid.size() > 1) {
    auto sel = select_model(ds, run.cfg.fpca_outcome, run.cfg.rank_grid,
                            run.cfg.basis_grid, opts);
    rank = sel.chosen_rank;
    m = sel.chosen_basis_size;
    Json table = Json::array();
    for (const auto& e : sel.table)
      table.push_back({{"rank", e.rank},
                       {"basis_size", e.basis_size},
                       {"cv_score", e.cv_score},
                       {"feasible", e.feasible},
                       {"failed_folds", e.failed_folds}});
    selection["table"] = table;
  }
  FpcaModel model = fit_reml(ds, run.cfg.fpca_outcome, rank, m, opts);
  save_model(model, run.path("model.json").string());

  {
    std::ofstream mean_csv(run.path("mean_curve.csv"));
    mean_csv << "t,value\n";
    for (int g = 0; g < model.mean.grid.size(); ++g)
      mean_csv << fmt(model.mean.grid(g)) << "," << fmt(model.mean.values(g))
               << "\n";
  }
  {
    std::ofstream traj(run.path("trajectories.csv"));
    std::ofstream scores_csv(run.path("scores.csv"));
    traj << "subject,t,value\n";
    scores_csv << "subject";
    for (int l = 1; l <= model.rank(); ++l) scores_csv << ",score" << l;
    scores_csv << "\n";
    Eigen::VectorXd grid = default_grid(opts.mean_grid_size);
    for (const auto& s : ds.subjects) {
      bool has = false;
      for (const auto& o : s.observations)
        if (o.has(run.cfg.fpca_outcome)) has = true;
      if (!has) continue;
      SubjectScores sc = pace_scores(model, s, run.cfg.fpca_outcome);
      scores_csv << s.id;
      for (int l = 0; l < sc.scores.size(); ++l)
        scores_csv << "," << fmt(sc.scores(l));
      scores_csv << "\n";
      for (int g = 0; g < grid.size(); ++g)
        traj << s.id << "," << fmt(grid(g)) << ","
             << fmt(reconstruct(model, sc, grid(g))) << "\n";
    }
  }
  Json info;
  info["outcome"] = run.cfg.fpca_outcome;
  info["rank"] = rank;
  info["basis_size"] = m;
  info["converged"] = model.fit_log.converged;
  info["final_nll"] = model.fit_log.final_nll;
  if (!selection.is_null()) info["selection"] = selection;
  std::ofstream out(run.path("fit_info.json"));
  out << info.dump(2) << "\n";
}

void cmd_fpca_forecast(Run& run) {
  Dataset ds = rescale_time(load_input(run.cfg),
                            run.cfg.cleaning.horizon_months);
  ForecastRun fr =
      forecast_last(ds, run.cfg.fpca_outcome, run.cfg.forecast_options());
  {
    std::ofstream csv(run.path("forecast.csv"));
    csv << "subject,t_last_months,truth,prediction,error,near,early\n";
    for (const auto& r : fr.results)
      csv << r.subject_id << "," << fmt(r.t_last_months) << "," << fmt(r.truth)
          << "," << fmt(r.prediction) << "," << fmt(r.error()) << ","
          << (r.near ? "near" : "far") << "," << (r.early ? "early" : "late")
          << "\n";
  }
  EvalReport rep = subgroup_report(fr.results, run.cfg.null_leave_one_out);
  Json j = eval_to_json(rep);
  j["outcome"] = run.cfg.fpca_outcome;
  j["cohort"] = static_cast<int>(fr.results.size());
  j["warnings"] = fr.warnings;
  std::ofstream out(run.path("eval.json"));
  out << j.dump(2) << "\n";
  save_model(fr.full_model, run.path("model.json").string());
}

void cmd_lmm(Run& run) {
  Dataset ds = load_input(run.cfg);
  Json j;
  j["outcome"] = run.cfg.lmm_outcome;

  LmmSpec null_spec;
  null_spec.outcome = run.cfg.lmm_outcome;
  null_spec.snap_tolerance_months = run.cfg.snap_tolerance_months;
  LooCvResult null_cv = loo_cv_mse(ds, null_spec);
  j["null"] = {{"cv_mse", null_cv.mse},
               {"skipped_folds", null_cv.skipped_folds}};

  Json per = Json::array();
  for (const auto& biomarker : run.cfg.lmm_biomarkers) {
    LmmSpec spec = null_spec;
    spec.biomarker = biomarker;
    spec.log_biomarker = run.cfg.log_biomarker;
    LmmComparison cmp = compare_with_null(ds, spec);
    LooCvResult cv = loo_cv_mse(ds, spec);
    Json entry;
    entry["biomarker"] = biomarker;
    Json beta = Json::array(), se = Json::array();
    for (int k = 0; k < cmp.full.beta.size(); ++k) {
      beta.push_back(cmp.full.beta(k));
      se.push_back(std::sqrt(cmp.full.beta_covariance(k, k)));
    }
    entry["beta"] = beta;
    entry["beta_se"] = se;
    entry["lrt_statistic"] = cmp.lrt.statistic;
    entry["p_value"] = cmp.lrt.p_value;
    entry["cv_mse"] = cv.mse;
    entry["subjects"] = cmp.full.subjects;
    entry["rows"] = cmp.full.rows;
    per.push_back(entry);
  }
  j["biomarkers"] = per;
  std::ofstream out(run.path("lmm_report.json"));
  out << j.dump(2) << "\n";
}

void cmd_residual_update(Run& run) {
  Dataset ds = load_input(run.cfg);
  fs::path forecast_path = run.dir / "forecast.csv";
  std::ifstream in(forecast_path);
  if (!in)
    throw DataError("forecast.csv not found in run directory; run "
                    "fpca-forecast first");
  std::string line;
  std::getline(in, line);  // header
  std::vector<ForecastResult> results;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, t_last, truth, pred, err, near, early;
    std::getline(ss, id, ',');
    std::getline(ss, t_last, ',');
    std::getline(ss, truth, ',');
    std::getline(ss, pred, ',');
    std::getline(ss, err, ',');
    std::getline(ss, near, ',');
    std::getline(ss, early, ',');
    ForecastResult r;
    r.subject_id = id;
    r.t_last_months = std::stod(t_last);
    r.truth = std::stod(truth);
    r.prediction = std::stod(pred);
    r.near = near == "near";
    r.early = early == "early";
    results.push_back(r);
  }

  Json j = Json::array();
  for (const auto& biomarker : biomarker_names()) {
    std::map<std::string, double> z;
    for (const auto& s : ds.subjects) {
      for (const auto& r : results) {
        if (r.subject_id != s.id) continue;
        for (const auto& o : s.observations)
          if (std::abs(o.time - r.t_last_months) < 1e-6)
            if (auto v = o.value(biomarker)) z[s.id] = *v;
      }
    }
    bool log_transform = biomarker == "NT";
    try {
      ResidualUpdate upd =
          residual_update(results, z, biomarker, log_transform);
      j.push_back({{"biomarker", biomarker},
                   {"alpha", upd.alpha},
                   {"beta", upd.beta},
                   {"p_value", upd.p_value},
                   {"mse_in_sample", upd.mse_in_sample},
                   {"mse_loocv", upd.mse_loocv},
                   {"r2_vs_original", upd.r2_vs_original},
                   {"excluded_missing", upd.excluded_missing}});
    } catch (const DataError& e) {
      j.push_back({{"biomarker", biomarker}, {"error", e.what()}});
    }
  }
  std::ofstream out(run.path("update_report.json"));
  out << j.dump(2) << "\n";
}

void cmd_report(Run& run) {
  Json report;
  for (const char* name :
       {"eval.json", "lmm_report.json", "update_report.json",
        "provenance.json"}) {
    fs::path p = run.dir / name;
    std::ifstream in(p);
    if (!in) continue;
    std::string key = fs::path(name).stem().string();
    report[key] = Json::parse(in);
  }
  if (report.empty())
    throw DataError("no prior artifacts found in " + run.dir.string());
  std::ofstream out(run.path("report.json"));
  out << report.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse longitudinal trajectory reconstruction and "
               "forecasting"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> threads_override;
  bool print_config = false;
  app.add_option("--config", config_path, "Path to the run config file");
  app.add_option("--seed", seed_override, "Override the config seed");
  app.add_option("--threads", threads_override, "Override parallelism");
  app.add_flag("--print-config", print_config,
               "Print the effective config (defaults filled in) and exit");

  std::vector<std::string> commands = {"clean",         "describe",
                                       "fpca-fit",      "fpca-forecast",
                                       "lmm",           "residual-update",
                                       "simulate",      "report"};
  for (const auto& c : commands) app.add_subcommand(c);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{}
                                        : parse_config_file(config_path);
    if (seed_override) {
      cfg.seed = *seed_override;
      cfg.sim.seed = *seed_override;
      cfg.sim_lmm.seed = *seed_override;
    }
    if (threads_override) cfg.threads = *threads_override;

    if (print_config) {
      std::cout << config_to_text(cfg);
      return 0;
    }
    auto subs = app.get_subcommands();
    if (subs.empty()) {
      std::cerr << "error: no command given (see --help)\n";
      return 2;
    }
    std::string command = subs[0]->get_name();

    Run run = open_run(cfg);
    if (command == "simulate")
      cmd_simulate(run);
    else if (command == "clean")
      cmd_clean(run);
    else if (command == "describe")
      cmd_describe(run);
    else if (command == "fpca-fit")
      cmd_fpca_fit(run);
    else if (command == "fpca-forecast")
      cmd_fpca_forecast(run);
    else if (command == "lmm")
      cmd_lmm(run);
    else if (command == "residual-update")
      cmd_residual_update(run);
    else if (command == "report")
      cmd_report(run);
    run.write_manifest(command);
    std::cout << run.dir.string() << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
