#include "hofilter/path_csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hofilter {

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_table(const std::vector<std::string>& columns,
                 const std::vector<std::vector<double>>& rows, const std::string& location) {
    std::ofstream out(location);
    if (!out) throw RejectedInput("write_path: cannot open " + location);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (c) out << ',';
        out << columns[c];
    }
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << ',';
            out << fmt17(row[c]);
        }
        out << '\n';
    }
    if (!out) throw RejectedInput("write_path: write failed for " + location);
}

double parse_field(const std::string& field, long line) {
    double v = 0.0;
    const char* b = field.data();
    const char* e = b + field.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw ParseError("read_path: not a number: '" + field + "'", line);
    return v;
}

} // namespace

void write_path(const PathTable& table, const std::string& location) {
    std::vector<std::vector<double>> rows(table.times.size());
    for (std::size_t i = 0; i < table.times.size(); ++i) {
        rows[i].push_back(table.times[i]);
        rows[i].insert(rows[i].end(), table.rows[i].begin(), table.rows[i].end());
    }
    write_table(table.columns, rows, location);
}

void write_path(const SignalRecord& rec, const std::string& location) {
    std::vector<std::string> cols{"time"};
    for (int i = 1; i <= rec.d_X; ++i) cols.push_back("x" + std::to_string(i));
    std::vector<std::vector<double>> rows(rec.grid->times.size());
    for (std::size_t s = 0; s < rows.size(); ++s) {
        rows[s].push_back(rec.grid->times[s]);
        for (int i = 0; i < rec.d_X; ++i)
            rows[s].push_back(rec.X[s * std::size_t(rec.d_X) + std::size_t(i)]);
    }
    write_table(cols, rows, location);
}

void write_path(const ObservationRecord& rec, const std::string& location) {
    std::vector<std::string> cols{"time"};
    for (int i = 1; i <= rec.d_Y; ++i) cols.push_back("y" + std::to_string(i));
    std::vector<std::vector<double>> rows(rec.grid->times.size());
    for (std::size_t s = 0; s < rows.size(); ++s) {
        rows[s].push_back(rec.grid->times[s]);
        for (int i = 0; i < rec.d_Y; ++i)
            rows[s].push_back(rec.Y[s * std::size_t(rec.d_Y) + std::size_t(i)]);
    }
    write_table(cols, rows, location);
}

void write_path(const BrownianRecord& rec, const std::string& location) {
    std::vector<std::string> cols{"time"};
    for (int r = 1; r <= rec.d_V; ++r) cols.push_back("dv" + std::to_string(r));
    for (int i = 1; i <= rec.d_Y && !rec.W_incr.empty(); ++i)
        cols.push_back("dw" + std::to_string(i));
    std::vector<std::vector<double>> rows(rec.grid->steps());
    for (std::size_t s = 0; s < rows.size(); ++s) {
        rows[s].push_back(rec.grid->times[s]);
        for (int r = 0; r < rec.d_V; ++r)
            rows[s].push_back(rec.V_incr[s * std::size_t(rec.d_V) + std::size_t(r)]);
        if (!rec.W_incr.empty())
            for (int i = 0; i < rec.d_Y; ++i)
                rows[s].push_back(rec.W_incr[s * std::size_t(rec.d_Y) + std::size_t(i)]);
    }
    write_table(cols, rows, location);
}

PathTable read_path(const std::string& location) {
    std::ifstream in(location);
    if (!in) throw ParseError("read_path: cannot open " + location, 0);

    PathTable table;
    std::string line;
    long lineno = 0;

    if (!std::getline(in, line)) throw ParseError("read_path: empty file", 1);
    ++lineno;
    {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) table.columns.push_back(field);
    }
    if (table.columns.empty() || table.columns[0] != "time")
        throw ParseError("read_path: first column must be 'time'", 1);

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() && in.eof()) break;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.size() && line.back() == ',') fields.push_back("");
        if (fields.size() != table.columns.size())
            throw ParseError("read_path: expected " + std::to_string(table.columns.size()) +
                                 " fields, got " + std::to_string(fields.size()),
                             lineno);
        const double t = parse_field(fields[0], lineno);
        if (!table.times.empty() && !(t > table.times.back()))
            throw ParseError("read_path: times not strictly increasing", lineno);
        Vec row(fields.size() - 1);
        for (std::size_t c = 1; c < fields.size(); ++c) row[c - 1] = parse_field(fields[c], lineno);
        table.times.push_back(t);
        table.rows.push_back(std::move(row));
    }
    if (table.times.empty()) throw ParseError("read_path: no data rows", lineno + 1);
    return table;
}

ObservationRecord observation_from_table(const PathTable& table,
                                         std::shared_ptr<const FineGrid> grid) {
    if (table.times.size() != grid->times.size())
        throw RejectedInput("observation_from_table: row count does not match grid");
    for (std::size_t i = 0; i < table.times.size(); ++i)
        if (std::fabs(table.times[i] - grid->times[i]) > 1e-12)
            throw RejectedInput("observation_from_table: time stamps do not match grid");
    const std::size_t dy = table.columns.size() - 1;
    ObservationRecord rec;
    rec.grid = std::move(grid);
    rec.d_Y = int(dy);
    rec.Y.resize(table.times.size() * dy);
    for (std::size_t s = 0; s < table.times.size(); ++s)
        for (std::size_t i = 0; i < dy; ++i) rec.Y[s * dy + i] = table.rows[s][i];
    return rec;
}

} // namespace hofilter
