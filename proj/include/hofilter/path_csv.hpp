#pragma once

// CSV persistence for time-indexed paths. One time column, then value
// columns; 17 significant digits so doubles round-trip exactly.

#include <string>
#include <vector>

#include "hofilter/paths.hpp"

namespace hofilter {

struct PathTable {
    std::vector<std::string> columns; // includes leading "time"
    std::vector<double> times;
    std::vector<Vec> rows; // one entry per time, length columns.size()-1
};

void write_path(const PathTable& table, const std::string& location);
void write_path(const SignalRecord& rec, const std::string& location);
void write_path(const ObservationRecord& rec, const std::string& location);
// Brownian rows are per-step increments stamped with the step's left endpoint.
void write_path(const BrownianRecord& rec, const std::string& location);

// Strict reader: rejects empty files, ragged rows, non-numeric fields and
// non-increasing times, reporting the offending 1-based line.
PathTable read_path(const std::string& location);

// Bind a table of values to a known grid (times must match to 1e-12).
ObservationRecord observation_from_table(const PathTable& table,
                                         std::shared_ptr<const FineGrid> grid);

} // namespace hofilter
