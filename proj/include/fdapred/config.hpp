#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fdapred/cleaning.hpp"
#include "fdapred/csv.hpp"
#include "fdapred/fpca.hpp"
#include "fdapred/lmm.hpp"
#include "fdapred/simulate.hpp"

namespace fdapred {

// One key/value + [section] config file drives every command.
struct RunConfig {
  std::string input_path;
  std::string output_dir = "out";
  ColumnMap columns = default_column_map();

  CleaningConfig cleaning = {default_cleaning_rules(), 60.0, 2,
                             all_variable_names()};

  std::string fpca_outcome = "FVC";
  std::vector<int> rank_grid = {1, 2, 3};
  std::vector<int> basis_grid = {5, 8, 11, 14};
  std::optional<double> bandwidth;
  std::vector<double> bandwidth_candidates = default_bandwidth_candidates();
  int mean_grid_size = 101;
  int cv_folds = 0;  // 0 = exact leave-one-curve-out
  bool reselect_per_fold = false;
  int min_forecast_observations = 3;

  std::string lmm_outcome = "FVC";
  std::vector<std::string> lmm_biomarkers = biomarker_names();
  double snap_tolerance_months = 1.0;
  bool log_biomarker = true;

  bool null_leave_one_out = false;
  std::string update_biomarker = "NT";

  SimTruth sim;
  LmmTruth sim_lmm;
  std::string simulate_kind = "fpca";  // or "lmm"

  std::uint64_t seed = 1;
  int threads = 1;

  FpcaOptions fpca_options() const;
  ForecastOptions forecast_options() const;
};

// Parses the TOML-style file; unknown keys are ConfigErrors.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);

// Renders a config (defaults included) back to file text.
std::string config_to_text(const RunConfig& config);

}  // namespace fdapred
