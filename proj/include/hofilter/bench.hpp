#pragma once

// Experiment harness behind the CLI: strict JSON configuration, scenario
// generation, the convergence / robustness / IBP studies, and deterministic
// CSV + JSON artifact emission (no timestamps; identical config + seed gives
// identical bytes regardless of thread count).

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hofilter/oracle.hpp"
#include "hofilter/robust.hpp"

namespace hofilter {

struct ModelConfig {
    std::string name = "bounded_sensor";  // linear_gaussian | bounded_sensor | zero_sensor
    double a = -1.0, b = 1.0, c = 1.0;    // linear_gaussian: drift, noise, sensor gain
    double x0_mean = 0.0, x0_var = 1.0;   // initial law; variance 0 = point mass
};

struct ExperimentConfig {
    std::string experiment;     // simulate | filter | convergence | robustness | ibp-check
    ModelConfig model;
    double t = 0.5;
    std::vector<int> n_list;    // subinterval counts ("n" in the file is the 1-element form)
    std::vector<double> times;  // explicit partition times, alternative to n/n_list
    std::vector<int> m_list;    // discretisation orders ("m" is the 1-element form)
    int k_fine = 32;            // fine steps per subinterval (per reference interval
                                // in convergence runs)
    std::size_t N = 10000;
    std::uint64_t seed = 1;
    std::string phi = "x";  // one | x | tanh
    std::string out;        // output directory; empty writes nothing
    int threads = 1;
    // convergence
    int replications = 32;
    int n_ref = 256;
    // robustness
    int pairs = 200;
    double R = 4.0;      // sup-norm clip bound on probe paths
    double bump = 0.25;  // perturbation amplitude
    int riemann_k = 0;   // J-sum cells per subinterval; 0 = full fine resolution
    // ibp-check
    std::vector<int> levels = {128, 256, 512, 1024};
};

// Strict parser: unknown keys at any level are rejected, as are wrong types
// and out-of-range values. expected_kind, when non-empty, must match the
// file's "experiment" entry; an absent entry is filled in from it.
ExperimentConfig parse_config(const std::string& json_text, const std::string& expected_kind = "");
ExperimentConfig load_config(const std::string& path, const std::string& expected_kind = "");

// Canonical identity of a run: sorted-key JSON of the experiment-defining
// fields. Execution plumbing (threads, output directory) is excluded so that
// re-runs under different parallelism or target directories compare equal.
std::string canonical_config(const ExperimentConfig& cfg);
// FNV-1a over the canonical form, as 16 hex digits
std::string config_hash(const ExperimentConfig& cfg);

ModelSpec make_model(const ModelConfig& mc);
TestFunctional make_test_functional(const std::string& name);

struct Scenario {
    SignalRecord signal;
    ObservationRecord observation;
    std::uint64_t scenario_seed = 0;
};

// Signal + observation truth on `grid`, drawn from scenario substream `index`
// of `root_seed` (a derived seed, so scenario randomness can never collide
// with the Monte Carlo sample banks keyed by root_seed itself).
Scenario simulate_scenario(const ModelSpec& model, std::shared_ptr<const FineGrid> grid,
                           std::uint64_t root_seed, std::uint64_t index);

struct SimulateReport {
    Scenario scenario;
    std::string signal_csv, observation_csv, summary_path;
};
SimulateReport run_simulate(const ExperimentConfig& cfg);

struct FilterReport {
    FilterEstimate estimate;
    std::string summary_path;
};
FilterReport run_filter(const ExperimentConfig& cfg);

struct ConvergenceRow {
    int m = 0, n = 0;
    double delta = 0.0;
    double rho_err_l2 = 0.0, rho_err_se = 0.0;  // vs the surrogate reference
    double pi_err_l2 = 0.0, pi_err_se = 0.0;    // secondary, normalised filter
};
struct ConvergenceSlope {
    int m = 0;
    double slope = 0.0;           // least-squares log-log fit over the n list
    double ci_lo = 0.0, ci_hi = 0.0;  // replication bootstrap, 95%
    bool noise_dominated = false;     // errors at (or below) Monte Carlo resolution
};
struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;      // one per (m, n)
    std::vector<ConvergenceSlope> slopes;  // one per m
    int m_ref = 0, n_ref = 0, replications = 0;
    double reference_error = 0.0;  // Richardson estimate of the surrogate's own error
    double smallest_error = 0.0;   // min rho L2 error across rows
    bool reference_budget_pass = false;  // reference_error <= 10% of smallest_error
    std::string reference_desc;
};
ConvergenceReport run_convergence(const ExperimentConfig& cfg);

struct RobustnessLevel {
    std::string label;  // base | N2 | k2
    std::size_t N = 0;
    int k_fine = 0;
    double max_ratio = 0.0, q50 = 0.0, q90 = 0.0, q99 = 0.0;
    double median_abs_df = 0.0;  // median |F(y1) - F(y2)| over the shift/bump families
    bool all_finite = false;
    bool f_one_exact = false;  // phi = 1 reduced to exactly 1.0 on every path
    std::vector<double> pair_f_diff, pair_ratio;  // per pair, indexed as generated
};
struct RobustnessPerM {
    int m = 0;
    std::vector<RobustnessLevel> levels;  // base, N2, k2
    bool max_stable = false;  // doubled-N and doubled-k maxima within 2x of base
};
struct RobustnessReport {
    std::vector<RobustnessPerM> per_m;
    int pairs = 0;
    double R = 0.0, bump = 0.0;
};
RobustnessReport run_robustness(const ExperimentConfig& cfg);

struct IbpRow {
    int m = 0, k_fine = 0;
    double rho_xi = 0.0, rho_robust = 0.0;
    double ensemble_rel_diff = 0.0;  // |rho_xi - rho_robust| / |rho_xi|
    double rms_diff = 0.0;           // per-sample RMS of the log-weight difference
    double max_abs_diff = 0.0;
};
struct IbpPerM {
    int m = 0;
    double decay_slope = 0.0;  // of rms_diff vs k_fine (positive = shrinking)
    bool exact_zero = false;   // every per-sample difference bitwise zero
    double rel_diff_finest = 0.0;
};
struct IbpReport {
    std::vector<IbpRow> rows;
    std::vector<IbpPerM> per_m;
};
IbpReport run_ibp_check(const ExperimentConfig& cfg);

// Dispatch on cfg.experiment. Returns the summary file path, or "" when
// cfg.out is empty.
std::string run_experiment(const ExperimentConfig& cfg);

} // namespace hofilter
