#include "hofilter/likelihood.hpp"

#include <cmath>

#include "hofilter/parallel.hpp"

namespace hofilter {

double gamma_trunc(int q, double delta, double z) {
    if (q < 1) throw RejectedInput("gamma_trunc: q must be a positive integer");
    if (!(delta > 0.0)) throw RejectedInput("gamma_trunc: delta must be positive");
    const double r = z / delta;
    const double p = std::pow(r, 2 * q); // even power, >= 0
    if (std::isinf(p)) return 0.0;
    return z / (1.0 + p);
}

double gamma_trunc_bound(int q, double delta) {
    if (q < 1) throw RejectedInput("gamma_trunc_bound: q must be a positive integer");
    if (!(delta > 0.0)) throw RejectedInput("gamma_trunc_bound: delta must be positive");
    return delta / std::pow(double(2 * q - 1), 1.0 / double(2 * q));
}

namespace engine {

XiSplit xi_split(const IteratedIntegralTable& table, const double* Lh, const double* Lhh,
                 int d_Y, const double* Y_values, const double* dY_steps, int m) {
    const std::size_t k = table.n_fine();
    const std::size_t lo = table.fine_lo;
    const std::size_t na = table.set.size();
    const std::size_t dy = std::size_t(d_Y);

    XiSplit out;

    if (m == 1) {
        // constant integrand: the left-point Ito sum telescopes exactly
        double pair_end = 0.0, pair_start = 0.0;
        for (std::size_t i = 0; i < dy; ++i) {
            pair_end += Lh[i] * Y_values[(lo + k) * dy + i];
            pair_start += Lh[i] * Y_values[lo * dy + i];
        }
        out.low = -0.5 * Lhh[0] * table.time_int[0] + pair_end - pair_start - 0.0;
        return out;
    }

    double kappa01 = 0.0, kappa2p = 0.0;
    double pair01 = 0.0, pair2p = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
        const bool low_bucket = table.set.length[a] <= 1;
        (low_bucket ? kappa01 : kappa2p) += Lhh[a] * table.time_int[a];

        const double* I = table.row_values(a);
        for (std::size_t i = 0; i < dy; ++i) {
            const double w = Lh[a * dy + i];
            if (w == 0.0) continue;
            const double* dy_ptr = dY_steps + lo * dy + i;
            double s = 0.0;
            for (std::size_t step = 0; step < k; ++step) s += I[step] * dy_ptr[step * dy];
            (low_bucket ? pair01 : pair2p) += w * s;
        }
    }
    out.low = -0.5 * kappa01 + pair01;
    out.high = -0.5 * kappa2p + pair2p;
    return out;
}

std::vector<std::size_t> partition_anchors(const FineGrid& grid, const Partition& tau) {
    std::vector<std::size_t> anchors;
    anchors.reserve(tau.times.size());
    std::size_t pos = 0;
    for (double t : tau.times) {
        while (pos < grid.times.size() && grid.times[pos] < t - 1e-12 * (1.0 + std::fabs(t)))
            ++pos;
        if (pos >= grid.times.size() ||
            std::fabs(grid.times[pos] - t) > 1e-12 * (1.0 + std::fabs(t)))
            throw RejectedInput("partition time " + std::to_string(t) +
                                " is not on the observation fine grid");
        anchors.push_back(pos);
    }
    if (anchors.front() != 0 || anchors.back() != grid.times.size() - 1)
        throw RejectedInput("partition must span the observation record's full horizon");
    return anchors;
}

WeightedStats reduce_log_weights(const double* xibar, const double* phiv, std::size_t N) {
    double shift = xibar[0];
    for (std::size_t i = 1; i < N; ++i) shift = std::max(shift, xibar[i]);

    double s1 = 0.0, sphi = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double w = std::exp(xibar[i] - shift);
        s1 += w;
        sphi += phiv[i] * w;
        s2 += w * w;
    }
    WeightedStats st;
    st.pi = sphi / s1;
    st.ess = s1 * s1 / s2;

    const double scale = std::exp(shift);
    const double mean_tilde = sphi / double(N);
    st.rho = scale * mean_tilde;

    double var = 0.0, dsum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double w = std::exp(xibar[i] - shift);
        const double d = phiv[i] * w - mean_tilde;
        var += d * d;
        const double e = w * (phiv[i] - st.pi);
        dsum += e * e;
    }
    st.rho_se = scale * std::sqrt(var / double(N - 1) / double(N));
    st.pi_se = std::sqrt(dsum) / s1;
    return st;
}

} // namespace engine

double xi_increment(const IteratedIntegralTable& table, const OperatorOracle& oracle,
                    const SignalRecord& signal, const ObservationRecord& observation, int m) {
    if (m < 1) throw RejectedInput("xi_increment: m must be >= 1");
    if (m - 1 > table.set.max_len) throw RejectedInput("xi_increment: table too shallow for m");
    if (observation.grid->times != signal.grid->times)
        throw RejectedInput("xi_increment: observation and signal grids differ");

    const std::size_t na = table.set.size();
    const std::size_t dy = std::size_t(oracle.d_Y);
    Vec x(std::size_t(signal.d_X));
    for (std::size_t c = 0; c < x.size(); ++c)
        x[c] = signal.X[table.fine_lo * x.size() + c];

    std::vector<double> Lh(na * dy), Lhh(na);
    eval_operator_tables(oracle, table.set, x, Lh.data(), Lhh.data());

    std::vector<double> dY(observation.Y.size() - dy);
    for (std::size_t s = 0; s + 1 < observation.grid->times.size(); ++s)
        for (std::size_t i = 0; i < dy; ++i)
            dY[s * dy + i] = observation.Y[(s + 1) * dy + i] - observation.Y[s * dy + i];

    const engine::XiSplit sp =
        engine::xi_split(table, Lh.data(), Lhh.data(), int(dy), observation.Y.data(), dY.data(), m);
    return sp.low + sp.high;
}

double mu_increment(const IteratedIntegralTable& table, const OperatorOracle& oracle,
                    const SignalRecord& signal, const ObservationRecord& observation, int m) {
    if (m <= 2) throw RejectedInput("mu_increment: defined for m > 2 only");
    if (m - 1 > table.set.max_len) throw RejectedInput("mu_increment: table too shallow for m");
    if (observation.grid->times != signal.grid->times)
        throw RejectedInput("mu_increment: observation and signal grids differ");

    const std::size_t na = table.set.size();
    const std::size_t dy = std::size_t(oracle.d_Y);
    Vec x(std::size_t(signal.d_X));
    for (std::size_t c = 0; c < x.size(); ++c)
        x[c] = signal.X[table.fine_lo * x.size() + c];

    std::vector<double> Lh(na * dy), Lhh(na);
    eval_operator_tables(oracle, table.set, x, Lh.data(), Lhh.data());

    std::vector<double> dY(observation.Y.size() - dy);
    for (std::size_t s = 0; s + 1 < observation.grid->times.size(); ++s)
        for (std::size_t i = 0; i < dy; ++i)
            dY[s * dy + i] = observation.Y[(s + 1) * dy + i] - observation.Y[s * dy + i];

    const engine::XiSplit sp =
        engine::xi_split(table, Lh.data(), Lhh.data(), int(dy), observation.Y.data(), dY.data(), m);
    return sp.high;
}

double xi_bar(const std::vector<double>& xi2_j, const std::vector<double>& mu_j,
              const Partition& tau, int m) {
    if (m < 1) throw RejectedInput("xi_bar: m must be >= 1");
    double s = 0.0;
    if (m <= 2) {
        for (double v : xi2_j) s += v;
        return s;
    }
    if (mu_j.size() != xi2_j.size()) throw RejectedInput("xi_bar: xi/mu length mismatch");
    if (int(xi2_j.size()) != tau.n_intervals())
        throw RejectedInput("xi_bar: increment count does not match partition");
    for (std::size_t j = 0; j < xi2_j.size(); ++j) {
        const double dt = tau.times[j + 1] - tau.times[j];
        s += xi2_j[j] + gamma_trunc(m, dt, mu_j[j]);
    }
    return s;
}

double TestFunctional::operator()(const double* x, std::size_t d) const {
    switch (kind) {
        case one: return 1.0;
        case coordinate: return x[std::size_t(index)];
        case tanh_coordinate: return std::tanh(x[std::size_t(index)]);
        case box_indicator: {
            for (std::size_t i = 0; i < d; ++i)
                if (x[i] < lo[i] || x[i] > hi[i]) return 0.0;
            return 1.0;
        }
    }
    return 0.0;
}

std::string TestFunctional::name() const {
    switch (kind) {
        case one: return "one";
        case coordinate: return "coordinate[" + std::to_string(index) + "]";
        case tanh_coordinate: return "tanh[" + std::to_string(index) + "]";
        case box_indicator: return "box";
    }
    return "?";
}

FilterEstimate estimate_filter(const ModelSpec& model, const ObservationRecord& observation,
                               const Partition& tau, int m, const TestFunctional& phi,
                               std::size_t N, std::uint64_t root_seed, int threads) {
    if (N < 2) throw RejectedInput("estimate_filter: need N >= 2");
    if (m < 1) throw RejectedInput("estimate_filter: m must be >= 1");
    if (m - 1 > model.operator_oracle.max_order)
        throw CapabilityError("estimate_filter: oracle max_order too small for m");
    if (observation.d_Y != model.d_Y)
        throw RejectedInput("estimate_filter: observation dimension mismatch");

    const auto& grid = *observation.grid;
    const auto anchors = engine::partition_anchors(grid, tau);
    const int n = tau.n_intervals();
    const std::size_t dy = std::size_t(model.d_Y);
    const std::size_t dx = std::size_t(model.d_X);

    // dY is scenario data shared by every sample
    std::vector<double> dY(grid.steps() * dy);
    for (std::size_t s = 0; s < grid.steps(); ++s)
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

    std::vector<double> xibar(N), phiv(N);

    parallel_for(N, threads, [&](int worker, std::size_t i) {
        Workspace& w = ws[std::size_t(worker)];
        const Vec x0 = model.initial_law.sample(root_seed, i);
        const BrownianRecord brownian =
            sample_brownian(observation.grid, model.d_V, model.d_Y, root_seed, i, false);
        const SignalRecord signal = simulate_signal(model, brownian, x0);

        Vec x(dx);
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            build_integral_table_into(w.table, brownian, anchors[std::size_t(j)],
                                      anchors[std::size_t(j) + 1], j);
            for (std::size_t c = 0; c < dx; ++c)
                x[c] = signal.X[anchors[std::size_t(j)] * dx + c];
            eval_operator_tables(model.operator_oracle, w.table.set, x, w.Lh.data(), w.Lhh.data());
            const engine::XiSplit sp = engine::xi_split(w.table, w.Lh.data(), w.Lhh.data(),
                                                        model.d_Y, observation.Y.data(), dY.data(), m);
            if (m <= 2) {
                total += sp.low + sp.high;
            } else {
                const double dt = tau.times[std::size_t(j) + 1] - tau.times[std::size_t(j)];
                total += sp.low + gamma_trunc(m, dt, sp.high);
            }
        }
        xibar[i] = total;
        phiv[i] = phi(&signal.X[anchors.back() * dx], dx);
    });

    const engine::WeightedStats st = engine::reduce_log_weights(xibar.data(), phiv.data(), N);

    FilterEstimate est;
    est.rho_value = st.rho;
    est.rho_stderr = st.rho_se;
    est.pi_value = st.pi;
    est.pi_stderr = st.pi_se;
    est.n_samples = N;
    est.ess = st.ess;
    est.m = m;
    est.n_intervals = n;
    est.k_fine = int(grid.steps()) / std::max(n, 1);
    est.seed = root_seed;
    return est;
}

} // namespace hofilter
