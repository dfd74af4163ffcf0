#include "fdapred/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fdapred {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
  }
  return out;
}

double parse_cell(const std::string& s, int row, const std::string& col) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    if (!std::isfinite(v))
      throw DataError("row " + std::to_string(row) + ", column " + col +
                      ": non-finite value");
    return v;
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError("row " + std::to_string(row) + ", column " + col +
                    ": cannot parse '" + s + "' as a number");
  }
}

}  // namespace

void validate_dataset(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& s : ds.subjects) {
    if (!ids.insert(s.id).second)
      throw DataError("duplicate subject id '" + s.id + "'");
    if (s.observations.empty())
      throw DataError("subject '" + s.id + "' has no observations");
    for (std::size_t j = 0; j < s.observations.size(); ++j) {
      const auto& o = s.observations[j];
      if (o.time < 0.0)
        throw DataError("subject '" + s.id + "': negative time");
      if (j > 0 && o.time <= s.observations[j - 1].time)
        throw DataError("subject '" + s.id +
                        "': observation times not strictly increasing");
      for (const auto& [k, v] : o.values)
        if (!std::isfinite(v))
          throw DataError("subject '" + s.id + "': non-finite " + k);
    }
  }
}

ColumnMap default_column_map() {
  ColumnMap m;
  m["id"] = "id";
  m["time"] = "time";
  for (const auto& v : all_variable_names()) m[v] = v;
  return m;
}

Dataset ingest_csv(const std::string& path, const ColumnMap& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  return ingest_csv_stream(in, schema, path);
}

Dataset ingest_csv_stream(std::istream& in, const ColumnMap& schema,
                          const std::string& label) {
  std::string line;
  if (!std::getline(in, line))
    throw DataError(label + ": empty file (no header row)");
  auto header = split_csv_line(line);

  std::map<std::string, int> col_index;  // logical name -> column position
  std::vector<std::string> logical = {"id", "time"};
  for (const auto& v : all_variable_names()) logical.push_back(v);
  for (const auto& name : logical) {
    auto it = schema.find(name);
    if (it == schema.end())
      throw DataError(label + ": schema lacks a mapping for '" + name + "'");
    auto pos = std::find(header.begin(), header.end(), it->second);
    if (pos == header.end())
      throw DataError(label + ": header is missing column '" + it->second +
                      "' (mapped from '" + name + "')");
    col_index[name] = static_cast<int>(pos - header.begin());
  }

  // subject id -> observations, preserving first-seen subject order
  std::vector<std::string> order;
  std::map<std::string, std::vector<Observation>> groups;

  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() < header.size())
      throw DataError(label + ": row " + std::to_string(row) +
                      " has fewer cells than the header");
    std::string id = cells[col_index["id"]];
    if (id.empty())
      throw DataError(label + ": row " + std::to_string(row) +
                      " has an empty subject id");
    Observation obs;
    obs.time = parse_cell(cells[col_index["time"]], row, schema.at("time"));
    if (obs.time < 0.0)
      throw DataError(label + ": row " + std::to_string(row) +
                      ": negative time");
    for (const auto& v : all_variable_names()) {
      const std::string& cell = cells[col_index[v]];
      if (cell.empty() || cell == "NA" || cell == "nan") continue;
      obs.values[v] = parse_cell(cell, row, schema.at(v));
    }
    if (groups.find(id) == groups.end()) order.push_back(id);
    groups[id].push_back(obs);
  }

  Dataset ds;
  for (const auto& id : order) {
    SubjectRecord rec;
    rec.id = id;
    rec.observations = groups[id];
    std::stable_sort(rec.observations.begin(), rec.observations.end(),
                     [](const Observation& a, const Observation& b) {
                       return a.time < b.time;
                     });
    for (std::size_t j = 1; j < rec.observations.size(); ++j)
      if (rec.observations[j].time == rec.observations[j - 1].time)
        throw DataError(label + ": duplicate observation for subject '" + id +
                        "' at time " +
                        std::to_string(rec.observations[j].time));
    ds.subjects.push_back(std::move(rec));
  }
  validate_dataset(ds);
  return ds;
}

void write_csv(const Dataset& ds, const ColumnMap& schema,
               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  out << schema.at("id") << "," << schema.at("time");
  for (const auto& v : all_variable_names()) out << "," << schema.at(v);
  out << "\n";
  char buf[64];
  auto fmt = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return std::string(buf);
  };
  for (const auto& s : ds.subjects) {
    for (const auto& o : s.observations) {
      out << s.id << "," << fmt(o.time);
      for (const auto& v : all_variable_names()) {
        out << ",";
        if (auto val = o.value(v)) out << fmt(*val);
      }
      out << "\n";
    }
  }
}

}  // namespace fdapred
