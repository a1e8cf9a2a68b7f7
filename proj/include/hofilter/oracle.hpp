#pragma once

// Independent reference solutions: the Kalman-Bucy filter for linear-Gaussian
// models, a high-resolution self-reference estimate for convergence studies,
// and closed-form moments of short iterated integrals.

#include "hofilter/likelihood.hpp"

namespace hofilter {

struct KalmanState {
    double time = 0.0;
    Vec mean;
    Mat cov;
};

// Fine-grid Euler integration of  d mu = A mu dt + P H' (dY - H mu dt)  and
// the Riccati equation  dP = AP + PA' + BB' - P H'H P,  from (mean_0, cov_0).
// P is re-symmetrised every step. One state per fine-grid time.
std::vector<KalmanState> kalman_bucy(const ModelSpec& model, const ObservationRecord& observation);

// High-resolution m=2 estimate used as the reference value in convergence
// studies; n_study is the finest partition the caller compares against and
// n_ref must be at least 8x that.
FilterEstimate reference_filter(const ModelSpec& model, const ObservationRecord& observation,
                                const TestFunctional& phi, int n_ref, std::size_t N_ref,
                                std::uint64_t root_seed, int n_study, int threads = 1);

struct MomentOracle {
    bool supported = false;
    double mean = 0.0;
    double second_moment = 0.0;
};

// Closed-form E[I_alpha] and E[I_alpha^2] over one step of length delta for
// |alpha| <= 2; longer words return an unsupported marker.
MomentOracle iterated_moment_oracle(const MultiIndex& alpha, double delta);

} // namespace hofilter
