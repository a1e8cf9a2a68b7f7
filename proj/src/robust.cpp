#include "hofilter/robust.hpp"

#include <algorithm>
#include <cmath>

#include "hofilter/parallel.hpp"

namespace hofilter {

// ---- ObservationPath -------------------------------------------------------

ObservationPath ObservationPath::from_record(const ObservationRecord& rec) {
    if (!rec.grid) throw RejectedInput("observation record has no grid");
    if (rec.Y.size() != rec.grid->times.size() * std::size_t(rec.d_Y))
        throw RejectedInput("observation record shape mismatch");
    ObservationPath p;
    p.d_Y = rec.d_Y;
    p.times = rec.grid->times;
    p.values = rec.Y;
    p.grid = rec.grid;
    return p;
}

ObservationPath ObservationPath::polyline(std::vector<double> times, std::vector<double> values) {
    if (times.size() < 2) throw RejectedInput("path needs at least two knots");
    if (times.front() != 0.0) throw RejectedInput("path must start at time 0");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw RejectedInput("path knot times must increase");
    if (values.size() % times.size() != 0 || values.empty())
        throw RejectedInput("path value count is not a multiple of the knot count");
    ObservationPath p;
    p.d_Y = int(values.size() / times.size());
    p.times = std::move(times);
    p.values = std::move(values);
    return p;
}

double ObservationPath::sup_norm() const {
    double s = 0.0;
    for (double v : values) s = std::max(s, std::fabs(v));
    return s;
}

void ObservationPath::eval_into(double s, double* out) const {
    const double tol = 1e-12 * (1.0 + std::fabs(times.back()));
    if (s < times.front() - tol || s > times.back() + tol)
        throw RejectedInput("path evaluated outside its time range");
    const std::size_t dy = std::size_t(d_Y);
    if (s >= times.back()) {
        const double* row = &values[(times.size() - 1) * dy];
        for (std::size_t i = 0; i < dy; ++i) out[i] = row[i];
        return;
    }
    const auto it = std::upper_bound(times.begin(), times.end(), s);
    const std::size_t idx = std::size_t(std::max<std::ptrdiff_t>(it - times.begin() - 1, 0));
    const double* row0 = &values[idx * dy];
    if (s <= times[idx]) {  // knot hit (or clamped just below): stored value, bitwise
        for (std::size_t i = 0; i < dy; ++i) out[i] = row0[i];
        return;
    }
    const double w = (s - times[idx]) / (times[idx + 1] - times[idx]);
    const double* row1 = row0 + dy;
    for (std::size_t i = 0; i < dy; ++i) out[i] = row0[i] + w * (row1[i] - row0[i]);
}

Vec ObservationPath::eval(double s) const {
    Vec out(static_cast<std::size_t>(d_Y));
    eval_into(s, out.data());
    return out;
}

double path_sup_distance(const ObservationPath& a, const ObservationPath& b) {
    if (a.d_Y != b.d_Y) throw RejectedInput("paths have different dimensions");
    const std::size_t dy = std::size_t(a.d_Y);
    Vec va(dy), vb(dy);
    double best = 0.0;
    std::size_t ia = 0, ib = 0;
    while (ia < a.times.size() || ib < b.times.size()) {
        double s;
        if (ib >= b.times.size() || (ia < a.times.size() && a.times[ia] <= b.times[ib]))
            s = a.times[ia++];
        else
            s = b.times[ib++];
        if (ia < a.times.size() && a.times[ia] == s) ++ia;  // shared knot, visit once
        a.eval_into(s, va.data());
        b.eval_into(s, vb.data());
        for (std::size_t i = 0; i < dy; ++i) best = std::max(best, std::fabs(va[i] - vb[i]));
    }
    return best;
}

// ---- per-subinterval pathwise evaluation ------------------------------------

namespace {

int log2_exact(std::size_t v) {
    int s = 0;
    while ((std::size_t(1) << s) < v) ++s;
    return ((std::size_t(1) << s) == v) ? s : -1;
}

// y sampled where one subinterval's pathwise sums need it: the two endpoints
// plus the left ends of the dyadic cells carrying the J Riemann sums.
struct PathTableau {
    int dy = 0;
    int n = 0;
    std::vector<double> start;          // n x dy
    std::vector<double> end;            // n x dy
    std::vector<double> cells;          // sum_j cell_count[j] x dy
    std::vector<std::size_t> cell_off;  // per j, offset into cells (in rows)
    std::vector<int> shift;             // fine steps per cell = 1 << shift[j]
};

PathTableau build_path_tableau(const ObservationPath& y, const FineGrid& grid,
                               const std::vector<std::size_t>& anchors, int riemann_k) {
    PathTableau tb;
    tb.dy = y.d_Y;
    tb.n = int(anchors.size()) - 1;
    const std::size_t dy = std::size_t(tb.dy);
    tb.start.resize(std::size_t(tb.n) * dy);
    tb.end.resize(std::size_t(tb.n) * dy);
    tb.cell_off.resize(std::size_t(tb.n));
    tb.shift.resize(std::size_t(tb.n));

    std::size_t rows = 0;
    for (int j = 0; j < tb.n; ++j) {
        const std::size_t k = anchors[std::size_t(j) + 1] - anchors[std::size_t(j)];
        std::size_t c = k;
        if (riemann_k > 0) {
            if (std::size_t(riemann_k) > k)
                throw RejectedInput("riemann_k exceeds the subinterval's fine step count");
            if (log2_exact(std::size_t(riemann_k)) < 0)
                throw RejectedInput("riemann_k must be a power of two");
            if (k % std::size_t(riemann_k) != 0)
                throw RejectedInput("riemann_k does not divide the fine step count");
            c = std::size_t(riemann_k);
        }
        const int sh = log2_exact(k / c);
        if (sh < 0) throw RejectedInput("fine steps per cell must be a power of two");
        tb.shift[std::size_t(j)] = sh;
        tb.cell_off[std::size_t(j)] = rows;
        rows += c;
    }
    tb.cells.resize(rows * dy);

    for (int j = 0; j < tb.n; ++j) {
        const std::size_t lo = anchors[std::size_t(j)];
        const std::size_t k = anchors[std::size_t(j) + 1] - lo;
        y.eval_into(grid.times[lo], &tb.start[std::size_t(j) * dy]);
        y.eval_into(grid.times[lo + k], &tb.end[std::size_t(j) * dy]);
        const std::size_t stride = std::size_t(1) << tb.shift[std::size_t(j)];
        double* cell_rows = &tb.cells[tb.cell_off[std::size_t(j)] * dy];
        for (std::size_t q = 0; q * stride < k; ++q)
            y.eval_into(grid.times[lo + q * stride], cell_rows + q * dy);
    }
    return tb;
}

// Pathwise counterpart of engine::xi_split, same low/high bucketing. The J
// sums hold y at the cell's left end while d eta keeps full fine resolution.
engine::XiSplit robust_split(const IteratedIntegralTable& table, const double* Lh,
                             const double* Lhh, int d_Y, const double* y_start,
                             const double* y_end, const double* y_cells, int shift, int m) {
    const std::size_t k = table.n_fine();
    const std::size_t na = table.set.size();
    const std::size_t dy = std::size_t(d_Y);

    engine::XiSplit out;

    if (m == 1) {
        const double J = 0.0;  // d eta has no |alpha| >= 1 terms to integrate
        double pair_end = 0.0, pair_start = 0.0;
        for (std::size_t i = 0; i < dy; ++i) {
            pair_end += Lh[i] * y_end[i];
            pair_start += Lh[i] * y_start[i];
        }
        out.low = -0.5 * Lhh[0] * table.time_int[0] + pair_end - pair_start - J;
        return out;
    }

    double kappa01 = 0.0, kappa2p = 0.0;
    double pair01 = 0.0, pair2p = 0.0;
    double J01 = 0.0, J2p = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
        const bool low_bucket = table.set.length[a] <= 1;
        (low_bucket ? kappa01 : kappa2p) += Lhh[a] * table.time_int[a];

        const double iend = table.row_values(a)[k];
        const double* inc = table.row_incr(a);
        for (std::size_t i = 0; i < dy; ++i) {
            const double w = Lh[a * dy + i];
            if (w == 0.0) continue;
            (low_bucket ? pair01 : pair2p) += w * iend * y_end[i];
            if (table.set.length[a] == 0) continue;  // I_empty is constant
            double s = 0.0;
            for (std::size_t step = 0; step < k; ++step)
                s += y_cells[(step >> shift) * dy + i] * inc[step];
            (low_bucket ? J01 : J2p) += w * s;
        }
    }
    double pair_start = 0.0;  // eta_j(t_j) = h(X_{t_j}), the empty-word row
    for (std::size_t i = 0; i < dy; ++i) pair_start += Lh[i] * y_start[i];

    out.low = -0.5 * kappa01 + pair01 - pair_start - J01;
    out.high = -0.5 * kappa2p + pair2p - J2p;
    return out;
}

std::shared_ptr<const FineGrid> grid_for(const Partition& tau, int k_fine,
                                         const ObservationPath& y) {
    if (y.grid && y.grid->refine_factor == k_fine && y.grid->base.times == tau.times)
        return y.grid;
    return FineGrid::build(tau, k_fine);
}

} // namespace

double pathwise_eta_integral(const IteratedIntegralTable& table, const OperatorOracle& oracle,
                             const Vec& signal_state_at_tj, const ObservationPath& y,
                             int l, int m, int riemann_k) {
    if (m < 1) throw RejectedInput("pathwise_eta_integral: m must be >= 1");
    if (l < 0 || l >= m) throw RejectedInput("pathwise_eta_integral: need 0 <= l < m");
    if (m - 1 > table.set.max_len)
        throw RejectedInput("pathwise_eta_integral: table too shallow for m");
    const std::size_t k = table.n_fine();
    if (riemann_k < 1 || log2_exact(std::size_t(riemann_k)) < 0)
        throw RejectedInput("pathwise_eta_integral: riemann_k must be a positive power of two");
    if (std::size_t(riemann_k) > k)
        throw RejectedInput("pathwise_eta_integral: riemann_k exceeds the fine resolution");
    if (k % std::size_t(riemann_k) != 0)
        throw RejectedInput("pathwise_eta_integral: riemann_k does not divide the fine steps");

    const std::size_t na = table.set.size();
    const std::size_t dy = std::size_t(oracle.d_Y);
    std::vector<double> Lh(na * dy), Lhh(na);
    eval_operator_tables(oracle, table.set, signal_state_at_tj, Lh.data(), Lhh.data());

    const std::size_t c = std::size_t(riemann_k);
    const int shift = log2_exact(k / c);
    if (shift < 0)
        throw RejectedInput("pathwise_eta_integral: fine steps per cell must be a power of two");
    const double span = table.t1 - table.t0;
    std::vector<double> y_cells(c * dy);
    for (std::size_t q = 0; q < c; ++q)
        y.eval_into(table.t0 + (double(q) / double(c)) * span, &y_cells[q * dy]);

    double J = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
        const int len = table.set.length[a];
        if (len < std::max(l, 1) || len > m - 1) continue;
        const double* inc = table.row_incr(a);
        for (std::size_t i = 0; i < dy; ++i) {
            const double w = Lh[a * dy + i];
            if (w == 0.0) continue;
            double s = 0.0;
            for (std::size_t step = 0; step < k; ++step)
                s += y_cells[(step >> shift) * dy + i] * inc[step];
            J += w * s;
        }
    }
    return J;
}

double robust_log_weight(const std::vector<IteratedIntegralTable>& tables,
                         const OperatorOracle& oracle, const SignalRecord& signal,
                         const ObservationPath& y, const Partition& tau, int m,
                         int riemann_k) {
    if (m < 1) throw RejectedInput("robust_log_weight: m must be >= 1");
    if (int(tables.size()) != tau.n_intervals())
        throw RejectedInput("robust_log_weight: one table per subinterval required");
    if (y.d_Y != oracle.d_Y) throw RejectedInput("robust_log_weight: path dimension mismatch");
    if (!signal.grid) throw RejectedInput("robust_log_weight: signal has no grid");

    const auto anchors = engine::partition_anchors(*signal.grid, tau);
    const PathTableau tb = build_path_tableau(y, *signal.grid, anchors, riemann_k);
    const std::size_t dy = std::size_t(oracle.d_Y);
    const std::size_t dx = std::size_t(signal.d_X);

    Vec x(dx);
    double total = 0.0;
    for (int j = 0; j < tb.n; ++j) {
        const IteratedIntegralTable& table = tables[std::size_t(j)];
        if (table.fine_lo != anchors[std::size_t(j)] || table.fine_hi != anchors[std::size_t(j) + 1])
            throw RejectedInput("robust_log_weight: table range does not match the partition");
        const std::size_t na = table.set.size();
        std::vector<double> Lh(na * dy), Lhh(na);
        for (std::size_t c0 = 0; c0 < dx; ++c0)
            x[c0] = signal.X[anchors[std::size_t(j)] * dx + c0];
        eval_operator_tables(oracle, table.set, x, Lh.data(), Lhh.data());
        const engine::XiSplit sp = robust_split(
            table, Lh.data(), Lhh.data(), int(dy), &tb.start[std::size_t(j) * dy],
            &tb.end[std::size_t(j) * dy], &tb.cells[tb.cell_off[std::size_t(j)] * dy],
            tb.shift[std::size_t(j)], m);
        if (m <= 2) {
            total += sp.low + sp.high;
        } else {
            const double dt = tau.times[std::size_t(j) + 1] - tau.times[std::size_t(j)];
            total += sp.low + gamma_trunc(m, dt, sp.high);
        }
    }
    return total;
}

namespace engine {

RobustBank robust_bank(const ModelSpec& model, std::shared_ptr<const FineGrid> grid,
                       const std::vector<const ObservationPath*>& paths, const Partition& tau,
                       int m, const TestFunctional& phi, std::size_t N,
                       std::uint64_t root_seed, int threads, int riemann_k) {
    if (N < 2) throw RejectedInput("robust_bank: need N >= 2");
    if (m < 1) throw RejectedInput("robust_bank: m must be >= 1");
    if (m - 1 > model.operator_oracle.max_order)
        throw CapabilityError("robust_bank: oracle max_order too small for m");
    if (paths.empty()) throw RejectedInput("robust_bank: no paths given");
    for (const ObservationPath* y : paths) {
        if (y->d_Y != model.d_Y) throw RejectedInput("robust_bank: path dimension mismatch");
        if (y->horizon() < grid->times.back() - 1e-12 * (1.0 + grid->times.back()))
            throw RejectedInput("robust_bank: path does not cover the horizon");
    }

    const auto anchors = partition_anchors(*grid, tau);
    const int n = tau.n_intervals();
    const int n_paths = int(paths.size());
    const std::size_t dy = std::size_t(model.d_Y);
    const std::size_t dx = std::size_t(model.d_X);

    std::vector<PathTableau> tableaus;
    tableaus.reserve(paths.size());
    for (const ObservationPath* y : paths)
        tableaus.push_back(build_path_tableau(*y, *grid, anchors, riemann_k));

    struct Workspace {
        IteratedIntegralTable table;
        std::vector<double> Lh, Lhh, acc;
    };
    std::vector<Workspace> ws(std::size_t(std::max(threads, 1)));
    const IndexSet set = IndexSet::up_to(m - 1, model.d_V);
    for (auto& w : ws) {
        w.table.set = set;
        w.Lh.resize(set.size() * dy);
        w.Lhh.resize(set.size());
        w.acc.resize(std::size_t(n_paths));
    }

    RobustBank bank;
    bank.n_samples = N;
    bank.n_paths = n_paths;
    bank.xibar.resize(std::size_t(n_paths) * N);
    bank.phiv.resize(N);

    parallel_for(N, threads, [&](int worker, std::size_t i) {
        Workspace& w = ws[std::size_t(worker)];
        const Vec x0 = model.initial_law.sample(root_seed, i);
        const BrownianRecord brownian =
            sample_brownian(grid, model.d_V, model.d_Y, root_seed, i, false);
        const SignalRecord signal = simulate_signal(model, brownian, x0);

        std::fill(w.acc.begin(), w.acc.end(), 0.0);
        Vec x(dx);
        for (int j = 0; j < n; ++j) {
            build_integral_table_into(w.table, brownian, anchors[std::size_t(j)],
                                      anchors[std::size_t(j) + 1], j);
            for (std::size_t c0 = 0; c0 < dx; ++c0)
                x[c0] = signal.X[anchors[std::size_t(j)] * dx + c0];
            eval_operator_tables(model.operator_oracle, w.table.set, x, w.Lh.data(),
                                 w.Lhh.data());
            for (int p = 0; p < n_paths; ++p) {
                const PathTableau& tb = tableaus[std::size_t(p)];
                const XiSplit sp = robust_split(
                    w.table, w.Lh.data(), w.Lhh.data(), int(dy), &tb.start[std::size_t(j) * dy],
                    &tb.end[std::size_t(j) * dy], &tb.cells[tb.cell_off[std::size_t(j)] * dy],
                    tb.shift[std::size_t(j)], m);
                if (m <= 2) {
                    w.acc[std::size_t(p)] += sp.low + sp.high;
                } else {
                    const double dt = tau.times[std::size_t(j) + 1] - tau.times[std::size_t(j)];
                    w.acc[std::size_t(p)] += sp.low + gamma_trunc(m, dt, sp.high);
                }
            }
        }
        for (int p = 0; p < n_paths; ++p) bank.xibar[std::size_t(p) * N + i] = w.acc[std::size_t(p)];
        bank.phiv[i] = phi(&signal.X[anchors.back() * dx], dx);
    });
    return bank;
}

void dual_log_weights(const ModelSpec& model, const ObservationRecord& observation,
                      const Partition& tau, int m, const TestFunctional& phi, std::size_t N,
                      std::uint64_t root_seed, int threads, std::vector<double>& xi_out,
                      std::vector<double>& robust_out, std::vector<double>& phi_out) {
    if (N < 2) throw RejectedInput("dual_log_weights: need N >= 2");
    if (m < 1) throw RejectedInput("dual_log_weights: m must be >= 1");
    if (observation.d_Y != model.d_Y)
        throw RejectedInput("dual_log_weights: observation dimension mismatch");

    const auto grid = observation.grid;
    const auto anchors = partition_anchors(*grid, tau);
    const int n = tau.n_intervals();
    const std::size_t dy = std::size_t(model.d_Y);
    const std::size_t dx = std::size_t(model.d_X);

    const ObservationPath y = ObservationPath::from_record(observation);
    const PathTableau tb = build_path_tableau(y, *grid, anchors, 0);

    std::vector<double> dY(grid->steps() * dy);
    for (std::size_t s = 0; s < grid->steps(); ++s)
        for (std::size_t i = 0; i < dy; ++i)
            dY[s * dy + i] = observation.Y[(s + 1) * dy + i] - observation.Y[s * dy + i];

    struct Workspace {
        IteratedIntegralTable table;
        std::vector<double> Lh, Lhh;
    };
    std::vector<Workspace> ws(std::size_t(std::max(threads, 1)));
    const IndexSet set = IndexSet::up_to(m - 1, model.d_V);
    for (auto& w : ws) {
        w.table.set = set;
        w.Lh.resize(set.size() * dy);
        w.Lhh.resize(set.size());
    }

    xi_out.assign(N, 0.0);
    robust_out.assign(N, 0.0);
    phi_out.assign(N, 0.0);

    parallel_for(N, threads, [&](int worker, std::size_t i) {
        Workspace& w = ws[std::size_t(worker)];
        const Vec x0 = model.initial_law.sample(root_seed, i);
        const BrownianRecord brownian =
            sample_brownian(grid, model.d_V, model.d_Y, root_seed, i, false);
        const SignalRecord signal = simulate_signal(model, brownian, x0);

        Vec x(dx);
        double xi_total = 0.0, rob_total = 0.0;
        for (int j = 0; j < n; ++j) {
            build_integral_table_into(w.table, brownian, anchors[std::size_t(j)],
                                      anchors[std::size_t(j) + 1], j);
            for (std::size_t c0 = 0; c0 < dx; ++c0)
                x[c0] = signal.X[anchors[std::size_t(j)] * dx + c0];
            eval_operator_tables(model.operator_oracle, w.table.set, x, w.Lh.data(),
                                 w.Lhh.data());
            const XiSplit sx = xi_split(w.table, w.Lh.data(), w.Lhh.data(), model.d_Y,
                                        observation.Y.data(), dY.data(), m);
            const XiSplit sr = robust_split(
                w.table, w.Lh.data(), w.Lhh.data(), int(dy), &tb.start[std::size_t(j) * dy],
                &tb.end[std::size_t(j) * dy], &tb.cells[tb.cell_off[std::size_t(j)] * dy],
                tb.shift[std::size_t(j)], m);
            if (m <= 2) {
                xi_total += sx.low + sx.high;
                rob_total += sr.low + sr.high;
            } else {
                const double dt = tau.times[std::size_t(j) + 1] - tau.times[std::size_t(j)];
                xi_total += sx.low + gamma_trunc(m, dt, sx.high);
                rob_total += sr.low + gamma_trunc(m, dt, sr.high);
            }
        }
        xi_out[i] = xi_total;
        robust_out[i] = rob_total;
        phi_out[i] = phi(&signal.X[anchors.back() * dx], dx);
    });
}

} // namespace engine

static RobustEstimate reduce_bank_row(const engine::RobustBank& bank, int p,
                                      const Partition& tau, int m, int k_fine, int riemann_k,
                                      std::uint64_t seed) {
    const engine::WeightedStats st = engine::reduce_log_weights(
        &bank.xibar[std::size_t(p) * bank.n_samples], bank.phiv.data(), bank.n_samples);
    RobustEstimate est;
    est.G_value = st.rho;
    est.G_stderr = st.rho_se;
    est.F_value = st.pi;
    est.F_stderr = st.pi_se;
    est.n_samples = bank.n_samples;
    est.ess = st.ess;
    est.m = m;
    est.n_intervals = tau.n_intervals();
    est.k_fine = k_fine;
    est.riemann_k = riemann_k > 0 ? riemann_k : k_fine;
    est.seed = seed;
    return est;
}

RobustEstimate estimate_robust(const ModelSpec& model, const ObservationPath& y,
                               const Partition& tau, int m, const TestFunctional& phi,
                               std::size_t N, std::uint64_t root_seed, int k_fine,
                               int threads, int riemann_k) {
    if (k_fine < 1) throw RejectedInput("estimate_robust: k_fine must be positive");
    auto grid = grid_for(tau, k_fine, y);
    const engine::RobustBank bank =
        engine::robust_bank(model, grid, {&y}, tau, m, phi, N, root_seed, threads, riemann_k);
    return reduce_bank_row(bank, 0, tau, m, k_fine, riemann_k, root_seed);
}

LipschitzProbe lipschitz_probe(const ModelSpec& model, const ObservationPath& y1,
                               const ObservationPath& y2, const Partition& tau, int m,
                               const TestFunctional& phi, std::size_t N,
                               std::uint64_t root_seed, int k_fine, int threads,
                               int riemann_k) {
    if (k_fine < 1) throw RejectedInput("lipschitz_probe: k_fine must be positive");
    auto grid = grid_for(tau, k_fine, y1);
    const engine::RobustBank bank = engine::robust_bank(model, grid, {&y1, &y2}, tau, m, phi,
                                                        N, root_seed, threads, riemann_k);
    LipschitzProbe probe;
    probe.first = reduce_bank_row(bank, 0, tau, m, k_fine, riemann_k, root_seed);
    probe.second = reduce_bank_row(bank, 1, tau, m, k_fine, riemann_k, root_seed);
    probe.f_diff = std::fabs(probe.first.F_value - probe.second.F_value);
    probe.sup_dist = path_sup_distance(y1, y2);
    probe.ratio = probe.sup_dist == 0.0 ? 0.0 : probe.f_diff / probe.sup_dist;
    return probe;
}

} // namespace hofilter
