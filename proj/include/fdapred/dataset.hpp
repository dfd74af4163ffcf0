#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fdapred/common.hpp"

namespace fdapred {

inline const std::vector<std::string>& outcome_names() {
  static const std::vector<std::string> names = {"FVC", "TLC", "DLCO"};
  return names;
}

inline const std::vector<std::string>& biomarker_names() {
  static const std::vector<std::string> names = {"TIMP", "P3NP", "HA", "NT"};
  return names;
}

inline const std::vector<std::string>& all_variable_names() {
  static const std::vector<std::string> names = {"TIMP", "P3NP", "HA",  "NT",
                                                 "FVC",  "TLC",  "DLCO"};
  return names;
}

// One visit. A variable absent from `values` is missing at that visit.
struct Observation {
  double time = 0.0;  // months since first visit, or [0,1] after rescaling
  std::map<std::string, double> values;

  std::optional<double> value(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
  bool has(const std::string& name) const { return values.count(name) > 0; }
};

struct SubjectRecord {
  std::string id;
  std::vector<Observation> observations;  // strictly increasing time
};

struct ProvenanceEntry {
  std::string rule;
  int subjects_before = 0, subjects_after = 0;
  int observations_before = 0, observations_after = 0;
};

struct Dataset {
  std::vector<SubjectRecord> subjects;
  double horizon_months = 60.0;
  // 1.0 while times are in months; horizon_months once rescaled to [0,1].
  double time_scale = 1.0;
  std::vector<ProvenanceEntry> provenance;

  bool rescaled() const { return time_scale != 1.0; }
  double months(double t) const { return t * time_scale; }
  int total_observations() const {
    int n = 0;
    for (const auto& s : subjects) n += static_cast<int>(s.observations.size());
    return n;
  }
  const SubjectRecord* find(const std::string& id) const {
    for (const auto& s : subjects)
      if (s.id == id) return &s;
    return nullptr;
  }
};

// Validates ordering/uniqueness invariants; throws DataError.
void validate_dataset(const Dataset& ds);

}  // namespace fdapred
