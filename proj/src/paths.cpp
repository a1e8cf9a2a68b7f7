#include "hofilter/paths.hpp"

#include <cmath>

#include "hofilter/rng.hpp"

namespace hofilter {

Partition Partition::uniform(int n, double t) {
    if (n < 1) throw RejectedInput("Partition::uniform: need n >= 1");
    if (!(t > 0.0)) throw RejectedInput("Partition::uniform: need t > 0");
    Partition p;
    p.times.resize(std::size_t(n) + 1);
    for (int j = 0; j <= n; ++j) p.times[std::size_t(j)] = (double(j) * t) / double(n);
    p.times.back() = t;
    return p;
}

Partition Partition::from_times(std::vector<double> times) {
    if (times.size() < 2) throw RejectedInput("Partition: need at least two times");
    if (times.front() != 0.0) throw RejectedInput("Partition: times must start at 0");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (!(times[i] < times[i + 1]))
            throw RejectedInput("Partition: times must be strictly increasing");
    Partition p;
    p.times = std::move(times);
    return p;
}

double Partition::meshsize() const {
    double d = 0.0;
    for (std::size_t i = 0; i + 1 < times.size(); ++i) d = std::max(d, times[i + 1] - times[i]);
    return d;
}

std::shared_ptr<const FineGrid> FineGrid::build(Partition base, int refine_factor) {
    if (refine_factor < 1) throw RejectedInput("FineGrid: refine_factor must be >= 1");
    auto g = std::make_shared<FineGrid>();
    g->refine_factor = refine_factor;
    const int n = base.n_intervals();
    g->times.resize(std::size_t(n) * std::size_t(refine_factor) + 1);
    for (int j = 0; j < n; ++j) {
        const double t0 = base.times[std::size_t(j)], t1 = base.times[std::size_t(j) + 1];
        const double len = t1 - t0;
        for (int i = 0; i < refine_factor; ++i)
            g->times[std::size_t(j) * std::size_t(refine_factor) + std::size_t(i)] =
                t0 + (double(i) / double(refine_factor)) * len;
    }
    g->times.back() = base.times.back();
    g->base = std::move(base);
    return g;
}

BrownianRecord sample_brownian(std::shared_ptr<const FineGrid> grid, int d_V, int d_Y,
                               std::uint64_t root_seed, std::uint64_t sample_index,
                               bool with_observation_noise) {
    if (!grid) throw RejectedInput("sample_brownian: null grid");
    if (d_V < 1 || d_Y < 1) throw RejectedInput("sample_brownian: dimensions must be positive");
    const std::size_t steps = grid->steps();

    BrownianRecord rec;
    rec.grid = std::move(grid);
    rec.d_V = d_V;
    rec.d_Y = d_Y;
    rec.root_seed = root_seed;
    rec.sample_index = sample_index;

    rec.V_incr.resize(steps * std::size_t(d_V));
    NormalLane vlane(root_seed, stream_signal_noise, sample_index);
    vlane.fill(0, rec.V_incr.data(), rec.V_incr.size());
    for (std::size_t s = 0; s < steps; ++s) {
        const double sd = std::sqrt(rec.grid->times[s + 1] - rec.grid->times[s]);
        for (int r = 0; r < d_V; ++r) rec.V_incr[s * std::size_t(d_V) + std::size_t(r)] *= sd;
    }

    if (with_observation_noise) {
        rec.W_incr.resize(steps * std::size_t(d_Y));
        NormalLane wlane(root_seed, stream_obs_noise, sample_index);
        wlane.fill(0, rec.W_incr.data(), rec.W_incr.size());
        for (std::size_t s = 0; s < steps; ++s) {
            const double sd = std::sqrt(rec.grid->times[s + 1] - rec.grid->times[s]);
            for (int i = 0; i < d_Y; ++i) rec.W_incr[s * std::size_t(d_Y) + std::size_t(i)] *= sd;
        }
    }
    return rec;
}

SignalRecord simulate_signal(const ModelSpec& model, const BrownianRecord& brownian, Vec x0) {
    if (int(x0.size()) != model.d_X) throw RejectedInput("simulate_signal: x0 dimension mismatch");
    if (brownian.d_V != model.d_V) throw RejectedInput("simulate_signal: noise dimension mismatch");
    const auto& grid = *brownian.grid;
    const std::size_t steps = grid.steps();
    const std::size_t d = std::size_t(model.d_X);

    SignalRecord rec;
    rec.grid = brownian.grid;
    rec.d_X = model.d_X;
    rec.x0 = x0;
    rec.X.resize((steps + 1) * d);
    for (std::size_t i = 0; i < d; ++i) rec.X[i] = x0[i];

    if (model.euler_step) {
        double xbuf[8];
        if (d > 8) throw RejectedInput("simulate_signal: fast path supports d_X <= 8");
        for (std::size_t i = 0; i < d; ++i) xbuf[i] = x0[i];
        for (std::size_t s = 0; s < steps; ++s) {
            model.euler_step(xbuf, grid.times[s + 1] - grid.times[s],
                             &brownian.V_incr[s * std::size_t(model.d_V)]);
            double* out = &rec.X[(s + 1) * d];
            for (std::size_t i = 0; i < d; ++i) {
                if (!std::isfinite(xbuf[i]))
                    throw NumericBlowup("simulate_signal: non-finite state at fine step " +
                                        std::to_string(s + 1));
                out[i] = xbuf[i];
            }
        }
        return rec;
    }

    Vec x = std::move(x0);
    for (std::size_t s = 0; s < steps; ++s) {
        const double dt = grid.times[s + 1] - grid.times[s];
        const Vec f = model.drift(x);
        const Mat sig = model.diffusion(x);
        for (std::size_t i = 0; i < d; ++i) {
            double v = x[i] + f[i] * dt;
            for (int r = 0; r < model.d_V; ++r)
                v += sig(i, std::size_t(r)) * brownian.V_incr[s * std::size_t(model.d_V) + std::size_t(r)];
            if (!std::isfinite(v))
                throw NumericBlowup("simulate_signal: non-finite state at fine step " +
                                    std::to_string(s + 1));
            x[i] = v;
            rec.X[(s + 1) * d + i] = v;
        }
    }
    return rec;
}

ObservationRecord simulate_observation(const ModelSpec& model, const SignalRecord& signal,
                                       const BrownianRecord& brownian) {
    if (signal.grid != brownian.grid &&
        signal.grid->times != brownian.grid->times)
        throw RejectedInput("simulate_observation: signal and noise on different grids");
    if (brownian.W_incr.empty())
        throw RejectedInput("simulate_observation: record carries no observation noise");
    if (brownian.d_Y != model.d_Y)
        throw RejectedInput("simulate_observation: observation dimension mismatch");

    const auto& grid = *signal.grid;
    const std::size_t steps = grid.steps();
    const std::size_t dy = std::size_t(model.d_Y);
    const std::size_t dx = std::size_t(model.d_X);

    ObservationRecord rec;
    rec.grid = signal.grid;
    rec.d_Y = model.d_Y;
    rec.Y.assign((steps + 1) * dy, 0.0);

    Vec x(dx);
    for (std::size_t s = 0; s < steps; ++s) {
        const double dt = grid.times[s + 1] - grid.times[s];
        for (std::size_t i = 0; i < dx; ++i) x[i] = signal.X[s * dx + i];
        const Vec h = model.sensor(x);
        for (std::size_t i = 0; i < dy; ++i)
            rec.Y[(s + 1) * dy + i] =
                rec.Y[s * dy + i] + h[i] * dt + brownian.W_incr[s * dy + i];
    }
    return rec;
}

BrownianRecord aggregate_record(const BrownianRecord& rec, int factor) {
    if (factor < 1) throw RejectedInput("aggregate_record: factor must be >= 1");
    if (rec.grid->refine_factor % factor != 0)
        throw RejectedInput("aggregate_record: factor must divide refine_factor");
    if (factor == 1) return rec;

    auto coarse = FineGrid::build(rec.grid->base, rec.grid->refine_factor / factor);
    const std::size_t steps = coarse->steps();

    BrownianRecord out;
    out.grid = coarse;
    out.d_V = rec.d_V;
    out.d_Y = rec.d_Y;
    out.root_seed = rec.root_seed;
    out.sample_index = rec.sample_index;
    out.V_incr.assign(steps * std::size_t(rec.d_V), 0.0);
    for (std::size_t s = 0; s < steps; ++s)
        for (int g = 0; g < factor; ++g)
            for (int r = 0; r < rec.d_V; ++r)
                out.V_incr[s * std::size_t(rec.d_V) + std::size_t(r)] +=
                    rec.V_incr[(s * std::size_t(factor) + std::size_t(g)) * std::size_t(rec.d_V) +
                               std::size_t(r)];
    if (!rec.W_incr.empty()) {
        out.W_incr.assign(steps * std::size_t(rec.d_Y), 0.0);
        for (std::size_t s = 0; s < steps; ++s)
            for (int g = 0; g < factor; ++g)
                for (int i = 0; i < rec.d_Y; ++i)
                    out.W_incr[s * std::size_t(rec.d_Y) + std::size_t(i)] +=
                        rec.W_incr[(s * std::size_t(factor) + std::size_t(g)) * std::size_t(rec.d_Y) +
                                   std::size_t(i)];
    }
    return out;
}

} // namespace hofilter
