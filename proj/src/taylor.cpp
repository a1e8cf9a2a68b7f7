#include "hofilter/taylor.hpp"

#include <cmath>

namespace hofilter {

void build_integral_table_into(IteratedIntegralTable& table, const BrownianRecord& brownian,
                               std::size_t fine_lo, std::size_t fine_hi, int j) {
    const auto& grid = *brownian.grid;
    if (fine_hi <= fine_lo || fine_hi > grid.steps())
        throw RejectedInput("build_integral_table: bad fine-step range");
    if (table.set.d_V != brownian.d_V)
        throw RejectedInput("build_integral_table: index set / record dimension mismatch");

    table.j = j;
    table.fine_lo = fine_lo;
    table.fine_hi = fine_hi;
    table.t0 = grid.times[fine_lo];
    table.t1 = grid.times[fine_hi];

    const std::size_t k = fine_hi - fine_lo;
    const std::size_t na = table.set.size();
    table.values.resize(na * (k + 1));
    table.incr.resize(na * k);
    table.time_int.resize(na);

    const int d_V = brownian.d_V;
    const double* times = grid.times.data();

    for (std::size_t a = 0; a < na; ++a) {
        double* val = &table.values[a * (k + 1)];
        double* inc = &table.incr[a * k];
        if (table.set.parent[a] < 0) {
            // empty word: I == 1, dI == 0; its time integral is exact
            for (std::size_t s = 0; s <= k; ++s) val[s] = 1.0;
            for (std::size_t s = 0; s < k; ++s) inc[s] = 0.0;
            table.time_int[a] = table.t1 - table.t0;
            continue;
        }
        const double* pval = &table.values[std::size_t(table.set.parent[a]) * (k + 1)];
        const int last = table.set.last[a];
        double acc = 0.0;
        double tint = 0.0;
        if (last == 0) {
            for (std::size_t s = 0; s < k; ++s) {
                const double dt = times[fine_lo + s + 1] - times[fine_lo + s];
                val[s] = acc;
                tint += acc * dt;
                inc[s] = pval[s] * dt;
                acc += inc[s];
            }
        } else {
            const double* v = &brownian.V_incr[fine_lo * std::size_t(d_V) + std::size_t(last - 1)];
            for (std::size_t s = 0; s < k; ++s) {
                const double dt = times[fine_lo + s + 1] - times[fine_lo + s];
                val[s] = acc;
                tint += acc * dt;
                inc[s] = pval[s] * v[s * std::size_t(d_V)];
                acc += inc[s];
            }
        }
        val[k] = acc;
        table.time_int[a] = tint;
    }
}

IteratedIntegralTable build_integral_table(const BrownianRecord& brownian, int j, int m) {
    if (m < 1) throw RejectedInput("build_integral_table: m must be >= 1");
    if (j < 0 || j >= brownian.grid->base.n_intervals())
        throw RejectedInput("build_integral_table: subinterval out of range");
    IteratedIntegralTable table;
    table.set = IndexSet::up_to(m - 1, brownian.d_V);
    build_integral_table_into(table, brownian, brownian.grid->fine_begin(j),
                              brownian.grid->fine_end(j), j);
    return table;
}

namespace {

std::size_t locate_fine_time(const IteratedIntegralTable& table, double s) {
    const std::size_t k = table.n_fine();
    const double dt = (table.t1 - table.t0) / double(k);
    const double rel = (s - table.t0) / dt;
    const double idx = std::round(rel);
    if (idx < 0 || idx > double(k) || std::fabs(rel - idx) > 1e-6)
        throw RejectedInput("eval_eta: s is not a fine-grid time of this subinterval");
    return std::size_t(idx);
}

void check_lm(const IteratedIntegralTable& table, int l, int m) {
    if (l < 0 || l >= m) throw RejectedInput("eta/kappa: need 0 <= l <= m-1");
    if (m - 1 > table.set.max_len)
        throw RejectedInput("eta/kappa: table was built for a smaller m");
}

} // namespace

Vec eval_eta(const IteratedIntegralTable& table, const OperatorOracle& oracle,
             const Vec& signal_state_at_tj, int l, int m, double s) {
    check_lm(table, l, m);
    const std::size_t pos = locate_fine_time(table, s);
    const std::size_t na = table.set.size();
    const int dy = oracle.d_Y;

    std::vector<double> Lh(na * std::size_t(dy)), Lhh(na);
    eval_operator_tables(oracle, table.set, signal_state_at_tj, Lh.data(), Lhh.data());

    Vec eta(std::size_t(dy), 0.0);
    for (std::size_t a = 0; a < na; ++a) {
        if (table.set.length[a] < l || table.set.length[a] > m - 1) continue;
        const double I = table.row_values(a)[pos];
        for (int i = 0; i < dy; ++i) eta[std::size_t(i)] += Lh[a * std::size_t(dy) + std::size_t(i)] * I;
    }
    return eta;
}

double eval_kappa(const IteratedIntegralTable& table, const OperatorOracle& oracle,
                  const Vec& signal_state_at_tj, int l, int m, int j) {
    check_lm(table, l, m);
    if (j != table.j) throw RejectedInput("eval_kappa: table is for a different subinterval");
    const std::size_t na = table.set.size();

    std::vector<double> Lh(na * std::size_t(oracle.d_Y)), Lhh(na);
    eval_operator_tables(oracle, table.set, signal_state_at_tj, Lh.data(), Lhh.data());

    double s = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
        if (table.set.length[a] < l || table.set.length[a] > m - 1) continue;
        s += Lhh[a] * table.time_int[a];
    }
    return -0.5 * s;
}

} // namespace hofilter
