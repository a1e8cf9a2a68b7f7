#pragma once

// Pathwise form of the discretised likelihood: the observation enters only
// through point evaluations y(s) and exact increments of eta, never through a
// stochastic integral against dY. Evaluating at the recorded observation path
// reproduces the Ito-form weights up to the discrete cross-variation term
// (bitwise for m = 1, where both forms telescope to the same finite sum).

#include "hofilter/likelihood.hpp"

namespace hofilter {

// A continuous observation path on [0, t]: either a fine-grid record or an
// arbitrary time-stamped polyline, evaluated by linear interpolation. Knot
// hits return the stored value bitwise.
struct ObservationPath {
    int d_Y = 0;
    std::vector<double> times;   // strictly increasing, times.front() = 0
    std::vector<double> values;  // knots x d_Y, row-major
    std::shared_ptr<const FineGrid> grid;  // set when built from a record

    static ObservationPath from_record(const ObservationRecord& rec);
    static ObservationPath polyline(std::vector<double> times, std::vector<double> values);

    double horizon() const { return times.back(); }
    // max |component| over knots; piecewise-linear paths attain it there
    double sup_norm() const;
    void eval_into(double s, double* out) const;
    Vec eval(double s) const;
};

// sup distance over the union of the two knot sets
double path_sup_distance(const ObservationPath& a, const ObservationPath& b);

struct RobustEstimate {
    double G_value = 0.0, G_stderr = 0.0;  // E~[phi(X_t) Z(y)] estimate
    double F_value = 0.0, F_stderr = 0.0;  // G_phi / G_1, one sample bank
    std::size_t n_samples = 0;
    double ess = 0.0;
    int m = 0, n_intervals = 0, k_fine = 0;
    int riemann_k = 0;  // cells per subinterval used for the J sums
    std::uint64_t seed = 0;
};

// Left-point Riemann sum J_j^{l,k} for int <y_s, d eta_j^{l,m}(s)>: y is held
// at the left endpoint of each of the `riemann_k` dyadic cells of
// [t_j, t_{j+1}] while d eta keeps the table's full fine resolution.
// riemann_k must be a power of two dividing the table's fine step count.
double pathwise_eta_integral(const IteratedIntegralTable& table, const OperatorOracle& oracle,
                             const Vec& signal_state_at_tj, const ObservationPath& y,
                             int l, int m, int riemann_k);

// Xi_bar^{tau,m}(y): m <= 2 sums kappa + <eta(t_{j+1}), y_end> - <h, y_start>
// - J_j over j; m > 2 applies Gamma_{m,dt_j} to the |alpha| >= 2 part M_j
// (which has no y_start term since those integrals vanish at t_j).
double robust_log_weight(const std::vector<IteratedIntegralTable>& tables,
                         const OperatorOracle& oracle, const SignalRecord& signal,
                         const ObservationPath& y, const Partition& tau, int m,
                         int riemann_k = 0);

RobustEstimate estimate_robust(const ModelSpec& model, const ObservationPath& y,
                               const Partition& tau, int m, const TestFunctional& phi,
                               std::size_t N, std::uint64_t root_seed, int k_fine,
                               int threads = 1, int riemann_k = 0);

struct LipschitzProbe {
    double f_diff = 0.0;    // |F(y1) - F(y2)|
    double sup_dist = 0.0;  // ||y1 - y2||_inf on the union of knots
    double ratio = 0.0;     // f_diff / sup_dist, 0 by convention when dist = 0
    RobustEstimate first, second;
};

// Both F values from the SAME sample bank (common random numbers).
LipschitzProbe lipschitz_probe(const ModelSpec& model, const ObservationPath& y1,
                               const ObservationPath& y2, const Partition& tau, int m,
                               const TestFunctional& phi, std::size_t N,
                               std::uint64_t root_seed, int k_fine, int threads = 1,
                               int riemann_k = 0);

namespace engine {

// One sample bank evaluated against many paths: xibar is paths x N row-major,
// phiv is the shared per-sample phi(X_t) column. The bank is identical to
// estimate_filter's for equal (model, grid, seed).
struct RobustBank {
    std::vector<double> xibar;  // n_paths x N
    std::vector<double> phiv;   // N
    std::size_t n_samples = 0;
    int n_paths = 0;
};

RobustBank robust_bank(const ModelSpec& model, std::shared_ptr<const FineGrid> grid,
                       const std::vector<const ObservationPath*>& paths, const Partition& tau,
                       int m, const TestFunctional& phi, std::size_t N,
                       std::uint64_t root_seed, int threads, int riemann_k);

// Shared-randomness comparison of the two likelihood forms: fills per-sample
// log-weights of the Ito form (xi) and the pathwise form at y = the record
// (robust), plus phi values. For m = 1 the two columns are bitwise equal.
void dual_log_weights(const ModelSpec& model, const ObservationRecord& observation,
                      const Partition& tau, int m, const TestFunctional& phi, std::size_t N,
                      std::uint64_t root_seed, int threads, std::vector<double>& xi_out,
                      std::vector<double>& robust_out, std::vector<double>& phi_out);

} // namespace engine

} // namespace hofilter
