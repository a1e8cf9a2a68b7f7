#pragma once

// Partitions, fine grids, seeded Brownian records, Euler-Maruyama signal
// simulation and left-point observation accumulation.

#include <cstdint>
#include <memory>
#include <vector>

#include "hofilter/model.hpp"

namespace hofilter {

struct Partition {
    std::vector<double> times; // t_0 = 0 < t_1 < ... < t_n

    static Partition uniform(int n, double t);
    static Partition from_times(std::vector<double> times);

    int n_intervals() const { return int(times.size()) - 1; }
    double horizon() const { return times.back(); }
    double meshsize() const;
};

// Each base subinterval split into refine_factor equal steps. Fine times are
// generated as t_j + (i/k)*(t_{j+1}-t_j) with the right endpoint pinned to
// t_{j+1} exactly, so dyadic refinements of dyadic partitions nest bitwise.
struct FineGrid {
    Partition base;
    int refine_factor = 1;
    std::vector<double> times;

    static std::shared_ptr<const FineGrid> build(Partition base, int refine_factor);

    std::size_t steps() const { return times.size() - 1; }
    std::size_t fine_begin(int j) const { return std::size_t(j) * std::size_t(refine_factor); }
    std::size_t fine_end(int j) const { return std::size_t(j + 1) * std::size_t(refine_factor); }
};

struct BrownianRecord {
    std::shared_ptr<const FineGrid> grid;
    int d_V = 0, d_Y = 0;
    std::vector<double> V_incr; // steps x d_V, row-major
    std::vector<double> W_incr; // steps x d_Y, row-major (empty if not generated)
    std::uint64_t root_seed = 0;
    std::uint64_t sample_index = 0;
};

struct SignalRecord {
    std::shared_ptr<const FineGrid> grid;
    int d_X = 0;
    std::vector<double> X; // (steps+1) x d_X, row-major
    Vec x0;
};

struct ObservationRecord {
    std::shared_ptr<const FineGrid> grid;
    int d_Y = 0;
    std::vector<double> Y; // (steps+1) x d_Y, row-major, Y_0 = 0
};

// Gaussian increments with variance = fine-step length; pure function of
// (root_seed, sample_index), independent of call order or thread count.
// with_observation_noise=false skips the W channels (same V values either way).
BrownianRecord sample_brownian(std::shared_ptr<const FineGrid> grid, int d_V, int d_Y,
                               std::uint64_t root_seed, std::uint64_t sample_index,
                               bool with_observation_noise = true);

SignalRecord simulate_signal(const ModelSpec& model, const BrownianRecord& brownian, Vec x0);

ObservationRecord simulate_observation(const ModelSpec& model, const SignalRecord& signal,
                                       const BrownianRecord& brownian);

// Sum consecutive groups of `factor` increments; the result lives on the
// coarser grid with refine_factor/factor sub-steps per base interval.
BrownianRecord aggregate_record(const BrownianRecord& rec, int factor);

} // namespace hofilter
