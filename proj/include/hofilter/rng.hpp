#pragma once

// Counter-based Gaussian noise: Philox4x32-10 keyed by the root seed, with the
// counter laid out as (block, sample lo, sample hi, stream). Any normal in the
// whole experiment is a pure function of (seed, stream, sample, position), so
// draws are reproducible regardless of evaluation order or worker count.

#include <array>
#include <cmath>
#include <cstdint>

namespace hofilter {

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
    const std::uint64_t p0 = std::uint64_t(0xD2511F53u) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * ctr[2];
    const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += 0x9E3779B9u;
    key[1] += 0xBB67AE85u;
}

inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) philox_round(ctr, key);
    return ctr;
}

} // namespace detail

// One Philox block -> two iid standard normals via Box-Muller.
// `block` indexes consecutive normal pairs within (seed, stream, sample).
struct NormalPair {
    double z0, z1;
};

inline NormalPair philox_normal_pair(std::uint64_t seed, std::uint32_t stream,
                                     std::uint64_t sample, std::uint32_t block) {
    const std::array<std::uint32_t, 4> ctr = {block, std::uint32_t(sample),
                                              std::uint32_t(sample >> 32), stream};
    const std::array<std::uint32_t, 2> key = {std::uint32_t(seed), std::uint32_t(seed >> 32)};
    const auto words = detail::philox4x32(ctr, key);

    const std::uint64_t w0 = (std::uint64_t(words[0]) << 32) | words[1];
    const std::uint64_t w1 = (std::uint64_t(words[2]) << 32) | words[3];
    // map to (0,1]; u1 = 1 is fine (log(1) = 0), u1 = 0 would not be
    const double u1 = double(w0 + 1) * 0x1p-64;
    const double u2 = double(w1) * 0x1p-64;

    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
#if defined(__GLIBC__)
    double s, c;
    ::sincos(a, &s, &c);
    return {r * c, r * s};
#else
    return {r * std::cos(a), r * std::sin(a)};
#endif
}

// Dense view over the pair sequence: normal #i of a (seed, stream, sample) lane.
// Callers that consume an even run starting at an even index get one Philox
// call per two normals.
class NormalLane {
  public:
    NormalLane(std::uint64_t seed, std::uint32_t stream, std::uint64_t sample)
        : seed_(seed), stream_(stream), sample_(sample) {}

    double at(std::uint64_t i) const {
        const NormalPair p = philox_normal_pair(seed_, stream_, sample_, std::uint32_t(i >> 1));
        return (i & 1) ? p.z1 : p.z0;
    }

    // fill out[0..n) with normals starting at index `start`
    void fill(std::uint64_t start, double* out, std::uint64_t n) const {
        std::uint64_t i = start;
        std::uint64_t k = 0;
        if ((i & 1) && k < n) { out[k++] = at(i); ++i; }
        while (k + 2 <= n) {
            const NormalPair p = philox_normal_pair(seed_, stream_, sample_, std::uint32_t(i >> 1));
            out[k++] = p.z0;
            out[k++] = p.z1;
            i += 2;
        }
        if (k < n) out[k++] = at(i);
    }

  private:
    std::uint64_t seed_;
    std::uint32_t stream_;
    std::uint64_t sample_;
};

// Stream ids. Fixed numbers are part of the output format: changing them
// changes every sampled path for a given seed.
enum Stream : std::uint32_t {
    stream_signal_noise = 1,   // V increments (d_V channels per step)
    stream_obs_noise = 2,      // W increments (d_Y channels per step)
    stream_initial_state = 3,  // X_0 draws
    stream_scenario = 4,       // scenario-level substreams (see bench)
    stream_probe_paths = 5,    // perturbation shapes for the robustness probe
};

// Child seed for scenario `index` of stream `stream` under `root`. One Philox
// call with block = 0xffffffff, a counter region the normal lanes never reach
// (they index blocks from 0), so child draws cannot collide with the parent's
// Monte Carlo banks.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint32_t stream, std::uint64_t index) {
    const std::array<std::uint32_t, 4> ctr = {0xffffffffu, std::uint32_t(index),
                                              std::uint32_t(index >> 32), stream};
    const std::array<std::uint32_t, 2> key = {std::uint32_t(root), std::uint32_t(root >> 32)};
    const auto words = detail::philox4x32(ctr, key);
    return (std::uint64_t(words[0]) << 32) | words[1];
}

} // namespace hofilter
