#pragma once

// Iterated Ito integrals I_alpha(1) on one partition subinterval, built by
// nested left-point sums on the fine grid, plus the eta/kappa building blocks
// of the order-m discretisation.

#include "hofilter/model.hpp"
#include "hofilter/multi_index.hpp"
#include "hofilter/paths.hpp"

namespace hofilter {

struct IteratedIntegralTable {
    int j = 0;                          // subinterval index
    std::size_t fine_lo = 0, fine_hi = 0; // global fine-step range [lo, hi)
    double t0 = 0.0, t1 = 0.0;
    IndexSet set;                       // M_{0, m-1}

    // row-major per alpha: values has n_fine+1 entries per row (I at each fine
    // time, starting at t_j), incr has n_fine (dI per fine step)
    std::vector<double> values;
    std::vector<double> incr;
    std::vector<double> time_int;       // left-point sums of  Int I_alpha ds

    std::size_t n_fine() const { return fine_hi - fine_lo; }
    const double* row_values(std::size_t a) const { return &values[a * (n_fine() + 1)]; }
    const double* row_incr(std::size_t a) const { return &incr[a * n_fine()]; }
};

// Table over the record grid's own subinterval j, for M_{0,m-1}.
IteratedIntegralTable build_integral_table(const BrownianRecord& brownian, int j, int m);

// Workspace-reusing variant: table.set must already hold the index family;
// [fine_lo, fine_hi) selects the fine steps (anchors of a possibly coarser
// partition living on the same grid).
void build_integral_table_into(IteratedIntegralTable& table, const BrownianRecord& brownian,
                               std::size_t fine_lo, std::size_t fine_hi, int j);

// eta_j^{l,m}(s), component i = sum over alpha in M_{l,m-1} of
// L^alpha h_i(X_{t_j}) * I_alpha(1)_{t_j,s}; s must be a fine-grid time of the
// table's subinterval.
Vec eval_eta(const IteratedIntegralTable& table, const OperatorOracle& oracle,
             const Vec& signal_state_at_tj, int l, int m, double s);

// kappa_j^{l,m} = -(1/2) sum over alpha in M_{l,m-1} of
// L^alpha <h,h>(X_{t_j}) * Int_{t_j}^{t_{j+1}} I_alpha(1)_{t_j,s} ds.
double eval_kappa(const IteratedIntegralTable& table, const OperatorOracle& oracle,
                  const Vec& signal_state_at_tj, int l, int m, int j);

} // namespace hofilter
