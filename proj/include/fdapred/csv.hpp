#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "fdapred/dataset.hpp"

namespace fdapred {

// Maps logical names ("id", "time", "FVC", ...) to CSV column headers.
using ColumnMap = std::map<std::string, std::string>;

ColumnMap default_column_map();

// One visit per row; empty numeric cells become missing values.
// Throws DataError on missing columns, unparseable cells (with row
// number) or duplicate (subject, time) pairs.
Dataset ingest_csv(const std::string& path, const ColumnMap& schema);
Dataset ingest_csv_stream(std::istream& in, const ColumnMap& schema,
                          const std::string& label);

// Writes the same schema back out (times in the dataset's current unit).
void write_csv(const Dataset& ds, const ColumnMap& schema,
               const std::string& path);

}  // namespace fdapred
