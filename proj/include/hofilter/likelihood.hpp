#pragma once

// Order-m discretised log-likelihood: per-subinterval increments, the taming
// map Gamma, the truncated total xi_bar, and the Monte Carlo filter estimator
// weighting independent signal samples against a fixed observation record.

#include <cstdint>

#include "hofilter/taylor.hpp"

namespace hofilter {

// Gamma_{q,delta}(z) = z / (1 + (z/delta)^{2q}); odd, bounded by
// delta/(2q-1)^{1/2q}, slope within [(q(1-q)-1)/(2q), 1].
double gamma_trunc(int q, double delta, double z);

// the sup bound above, handy for tests and diagnostics
double gamma_trunc_bound(int q, double delta);

struct LikelihoodResult {
    std::vector<double> xi_j;  // per-subinterval xi^{tau,m}(j)
    std::vector<double> mu_j;  // per-subinterval mu^{tau,m}(j); empty unless m > 2
    double xi_bar = 0.0;       // log Z^{tau,m}
    int m = 0;
};

// xi^{tau,m}(j) = kappa_j^{0,m} + left-point Ito sum of <eta_j^{0,m}, dY>.
// m = 1 telescopes to kappa + <h(X_{t_j}), Y_{t_{j+1}} - Y_{t_j}> (exact).
double xi_increment(const IteratedIntegralTable& table, const OperatorOracle& oracle,
                    const SignalRecord& signal, const ObservationRecord& observation, int m);

// mu^{tau,m}(j) = kappa_j^{2,m} + Ito sum of <eta_j^{2,m}, dY>, m > 2 only.
double mu_increment(const IteratedIntegralTable& table, const OperatorOracle& oracle,
                    const SignalRecord& signal, const ObservationRecord& observation, int m);

// m <= 2: plain sum of xi_j. m > 2: sum of xi2_j + Gamma_{m,dt_j}(mu_j).
double xi_bar(const std::vector<double>& xi2_j, const std::vector<double>& mu_j,
              const Partition& tau, int m);

struct TestFunctional {
    enum Kind { one, coordinate, tanh_coordinate, box_indicator } kind = one;
    int index = 0;     // coordinate / tanh component (0-based)
    Vec lo, hi;        // box bounds

    double operator()(const double* x, std::size_t d) const;
    std::string name() const;
};

struct FilterEstimate {
    double rho_value = 0.0, rho_stderr = 0.0;
    double pi_value = 0.0, pi_stderr = 0.0;
    std::size_t n_samples = 0;
    double ess = 0.0;
    // run context, carried into emitted artifacts
    int m = 0, n_intervals = 0, k_fine = 0;
    std::uint64_t seed = 0;
};

FilterEstimate estimate_filter(const ModelSpec& model, const ObservationRecord& observation,
                               const Partition& tau, int m, const TestFunctional& phi,
                               std::size_t N, std::uint64_t root_seed, int threads = 1);

// ---- internals shared with the robust module and the bench engines ----
namespace engine {

// contributions of one subinterval, split by word length: `low` carries the
// |alpha| <= 1 terms (kappa included), `high` the |alpha| >= 2 terms, so that
// xi^{tau,m}(j) = low + high and mu^{tau,m}(j) = high.
struct XiSplit {
    double low = 0.0;
    double high = 0.0;
};

// Y/dY point at the observation record's fine layout; m decides telescoping.
XiSplit xi_split(const IteratedIntegralTable& table, const double* Lh, const double* Lhh,
                 int d_Y, const double* Y_values, const double* dY_steps, int m);

// anchor indices of tau's times inside the record's fine grid
std::vector<std::size_t> partition_anchors(const FineGrid& grid, const Partition& tau);

struct WeightedStats {
    double rho = 0.0, rho_se = 0.0, pi = 0.0, pi_se = 0.0, ess = 0.0;
};

// log-sum-exp-shifted reduction, sequential over samples; both estimators
// funnel through this so shared weight banks give bitwise-equal outputs.
WeightedStats reduce_log_weights(const double* xibar, const double* phiv, std::size_t N);

} // namespace engine

} // namespace hofilter
