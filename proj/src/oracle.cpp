#include "hofilter/oracle.hpp"

#include <cmath>

namespace hofilter {

std::vector<KalmanState> kalman_bucy(const ModelSpec& model,
                                     const ObservationRecord& observation) {
    if (!model.linear_gaussian_params)
        throw CapabilityError("kalman_bucy: model has no linear-Gaussian parameters");
    const LinearGaussianParams& p = *model.linear_gaussian_params;
    if (!observation.grid) throw RejectedInput("kalman_bucy: observation has no grid");
    if (std::size_t(observation.d_Y) != p.H.rows)
        throw RejectedInput("kalman_bucy: observation dimension does not match H");

    const std::size_t dx = p.A.rows;
    const std::size_t dyn = p.H.rows;
    const auto& times = observation.grid->times;
    const Mat Ht = transpose(p.H);
    const Mat BBt = matmul(p.B, transpose(p.B));

    std::vector<KalmanState> out;
    out.reserve(times.size());
    KalmanState st;
    st.time = times[0];
    st.mean = p.mean_0;
    st.cov = p.cov_0;
    out.push_back(st);

    for (std::size_t s = 0; s + 1 < times.size(); ++s) {
        const double dt = times[s + 1] - times[s];
        const Vec& mu = out.back().mean;
        const Mat& P = out.back().cov;

        // innovation dY - H mu dt
        Vec innov(dyn);
        const Vec Hmu = matvec(p.H, mu);
        for (std::size_t i = 0; i < dyn; ++i)
            innov[i] = observation.Y[(s + 1) * dyn + i] - observation.Y[s * dyn + i] -
                       Hmu[i] * dt;

        const Mat PHt = matmul(P, Ht);
        const Vec Amu = matvec(p.A, mu);
        const Vec gain = matvec(PHt, innov);
        Vec mu_next(dx);
        for (std::size_t i = 0; i < dx; ++i)
            mu_next[i] = mu[i] + Amu[i] * dt + gain[i];

        const Mat AP = matmul(p.A, P);
        const Mat PHtHP = matmul(PHt, transpose(PHt));
        Mat P_next(dx, dx);
        for (std::size_t r = 0; r < dx; ++r)
            for (std::size_t c = 0; c < dx; ++c)
                P_next(r, c) = P(r, c) + (AP(r, c) + AP(c, r) + BBt(r, c) - PHtHP(r, c)) * dt;
        // keep the Riccati iterate exactly symmetric
        for (std::size_t r = 0; r < dx; ++r)
            for (std::size_t c = r + 1; c < dx; ++c) {
                const double v = 0.5 * (P_next(r, c) + P_next(c, r));
                P_next(r, c) = v;
                P_next(c, r) = v;
            }

        KalmanState next;
        next.time = times[s + 1];
        next.mean = std::move(mu_next);
        next.cov = std::move(P_next);
        out.push_back(std::move(next));
    }
    return out;
}

FilterEstimate reference_filter(const ModelSpec& model, const ObservationRecord& observation,
                                const TestFunctional& phi, int n_ref, std::size_t N_ref,
                                std::uint64_t root_seed, int n_study, int threads) {
    if (n_study < 1) throw RejectedInput("reference_filter: n_study must be positive");
    if (n_ref < 8 * n_study)
        throw RejectedInput("reference_filter: n_ref must be at least 8x the finest partition");
    if (!observation.grid) throw RejectedInput("reference_filter: observation has no grid");
    const Partition tau = Partition::uniform(n_ref, observation.grid->times.back());
    return estimate_filter(model, observation, tau, 2, phi, N_ref, root_seed, threads);
}

MomentOracle iterated_moment_oracle(const MultiIndex& alpha, double delta) {
    if (!(delta > 0.0)) throw RejectedInput("iterated_moment_oracle: delta must be positive");
    MomentOracle out;
    const int len = mi_length(alpha);
    if (len > 2) return out;  // unsupported marker, not an error
    out.supported = true;
    if (len == 0) {  // I_empty = 1
        out.mean = 1.0;
        out.second_moment = 1.0;
        return out;
    }
    if (len == 1) {
        if (alpha.entries[0] == 0) {  // deterministic time integral
            out.mean = delta;
            out.second_moment = delta * delta;
        } else {  // Brownian increment
            out.mean = 0.0;
            out.second_moment = delta;
        }
        return out;
    }
    const int a = alpha.entries[0], b = alpha.entries[1];
    if (a == 0 && b == 0) {  // delta^2/2, deterministic
        out.mean = 0.5 * delta * delta;
        out.second_moment = 0.25 * delta * delta * delta * delta;
    } else if (a != 0 && b != 0) {
        // E[I^2] = delta^2/2 both for repeated (Ito correction) and distinct
        // components (independence)
        out.mean = 0.0;
        out.second_moment = 0.5 * delta * delta;
    } else {  // one time letter, one Brownian letter, either order
        out.mean = 0.0;
        out.second_moment = delta * delta * delta / 3.0;
    }
    return out;
}

} // namespace hofilter
