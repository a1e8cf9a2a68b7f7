// Acceptance gate: every release-blocking property of the library, one timed
// PASS/FAIL line per criterion. Exits with the number of failed criteria.
//
// Usage: acceptance <path-to-cli-binary>
// The CLI path is needed by the determinism criterion, which re-runs whole
// experiments through the command-line front end and compares bytes.

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hofilter/bench.hpp"
#include "hofilter/errors.hpp"
#include "hofilter/oracle.hpp"
#include "hofilter/path_csv.hpp"

using namespace hofilter;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> g_detail;

void detail(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    g_detail.push_back(buf);
}

bool expect(bool ok, const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    g_detail.push_back(std::string(ok ? "ok:   " : "BAD:  ") + buf);
    return ok;
}

double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

InitialLaw gaussian_1d(double mean, double var) {
    Mat cov(1, 1);
    cov(0, 0) = var;
    return InitialLaw::gaussian_law(Vec{mean}, cov);
}

// ---------------------------------------------------------------------------
// 1. The taming map: envelope bound, attained supremum, slope range.
// ---------------------------------------------------------------------------
bool criterion_taming() {
    bool ok = true;
    std::mt19937_64 rng(20260819);
    std::uniform_int_distribution<int> qd(1, 6);
    std::uniform_real_distribution<double> dd(1e-3, 1.0);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);

    int bound_bad = 0, slope_bad = 0;
    double worst_excess = 0.0;
    for (int trial = 0; trial < 100000; ++trial) {
        const int q = qd(rng);
        const double delta = dd(rng);
        const double bound = delta / std::pow(double(2 * q - 1), 1.0 / double(2 * q));
        const double z1 = ud(rng) * 8.0 * delta;
        double z2 = ud(rng) * 8.0 * delta;
        while (std::fabs(z2 - z1) < 1e-9 * delta) z2 = ud(rng) * 8.0 * delta;

        const double g1 = gamma_trunc(q, delta, z1);
        const double g2 = gamma_trunc(q, delta, z2);
        if (std::fabs(g1) > bound + 1e-12 || std::fabs(g2) > bound + 1e-12) ++bound_bad;
        worst_excess = std::max(worst_excess,
                                std::max(std::fabs(g1), std::fabs(g2)) - bound);

        const double slope = (g2 - g1) / (z2 - z1);
        const double lo = (double(q) * (1.0 - double(q)) - 1.0) / double(2 * q);
        if (slope < lo - 1e-6 || slope > 1.0 + 1e-6) ++slope_bad;
    }
    ok &= expect(bound_bad == 0, "envelope bound held on all 2x10^5 draws (%d violations, worst excess %.2e)",
                 bound_bad, worst_excess);
    ok &= expect(slope_bad == 0, "difference quotients inside the slope band (%d violations)", slope_bad);

    // numerically maximised sup against the independently derived closed form
    double worst_rel = 0.0;
    for (int q = 1; q <= 6; ++q)
        for (double delta : {1e-3, 0.031, 0.4, 1.0}) {
            double a = 0.0, b = 2.0 * delta;
            for (int it = 0; it < 300; ++it) { // ternary search, |Gamma| unimodal here
                const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
                if (gamma_trunc(q, delta, m1) < gamma_trunc(q, delta, m2))
                    a = m1;
                else
                    b = m2;
            }
            const double found = gamma_trunc(q, delta, 0.5 * (a + b));
            const double sup = delta *
                               std::pow(double(2 * q - 1), double(2 * q - 1) / double(2 * q)) /
                               double(2 * q);
            const double bound = delta / std::pow(double(2 * q - 1), 1.0 / double(2 * q));
            worst_rel = std::max(worst_rel, std::fabs(found - sup) / sup);
            if (sup > bound + 1e-12) {
                ok = expect(false, "derived sup exceeds the envelope at q=%d delta=%g", q, delta);
            }
        }
    ok &= expect(worst_rel <= 1e-6,
                 "maximised sup matches the closed form to 1e-6 (worst rel %.2e)", worst_rel);
    return ok;
}

// ---------------------------------------------------------------------------
// 2. Multi-index enumeration and iterated-integral oracles.
// ---------------------------------------------------------------------------
bool criterion_integral_oracles() {
    bool ok = true;

    for (int dv = 1; dv <= 3; ++dv)
        for (int m = 0; m <= 4; ++m) {
            std::size_t expected = 0, pw = 1;
            for (int k = 0; k <= m; ++k) {
                expected += pw;
                pw *= std::size_t(dv + 1);
            }
            if (IndexSet::up_to(m, dv).size() != expected)
                ok = expect(false, "enumeration count off at d_V=%d m=%d", dv, m);
        }
    ok &= expect(ok, "enumeration counts match sum (d_V+1)^k for d_V<=3, m<=4");

    // single letters reproduce the raw increment sums bitwise
    {
        const auto grid = FineGrid::build(Partition::uniform(1, 0.5), 64);
        const BrownianRecord rec = sample_brownian(grid, 2, 1, 808, 4, false);
        const IteratedIntegralTable table = build_integral_table(rec, 0, 2);
        std::size_t i0 = table.set.size(), i2 = table.set.size();
        for (std::size_t a = 0; a < table.set.size(); ++a) {
            if (table.set.indices[a] == MultiIndex{0}) i0 = a;
            if (table.set.indices[a] == MultiIndex{2}) i2 = a;
        }
        bool exact = i0 < table.set.size() && i2 < table.set.size();
        double t_acc = 0.0, v_acc = 0.0;
        for (std::size_t s = 0; exact && s < 64; ++s) {
            t_acc += grid->times[s + 1] - grid->times[s];
            v_acc += rec.V_incr[s * 2 + 1];
            exact &= table.row_values(i0)[s + 1] == t_acc;
            exact &= table.row_values(i2)[s + 1] == v_acc;
        }
        ok &= expect(exact, "I_(0) and I_(r) equal the running increment sums bitwise");
    }

    // L2 convergence of I_(1,1) to the Ito closed form under grid doubling
    {
        const double delta = 0.5;
        std::vector<double> lk, le;
        for (int k : {4, 8, 16, 32, 64}) {
            const auto grid = FineGrid::build(Partition::uniform(1, delta), k);
            double ms = 0.0;
            const int M = 4000;
            for (int i = 0; i < M; ++i) {
                const BrownianRecord rec =
                    sample_brownian(grid, 1, 1, 909, std::uint64_t(i), false);
                // the table for order m holds words up to length m-1, so the
                // double integral needs the order-3 family
                const IteratedIntegralTable table = build_integral_table(rec, 0, 3);
                std::size_t a11 = table.set.size();
                for (std::size_t a = 0; a < table.set.size(); ++a)
                    if (table.set.indices[a] == MultiIndex{1, 1}) a11 = a;
                if (a11 == table.set.size())
                    return expect(false, "double-integral word missing from the order-3 table");
                double dv = 0.0;
                for (int s = 0; s < k; ++s) dv += rec.V_incr[std::size_t(s)];
                const double closed = 0.5 * (dv * dv - delta);
                const double err = table.row_values(a11)[std::size_t(k)] - closed;
                ms += err * err;
            }
            lk.push_back(std::log(double(k)));
            le.push_back(std::log(std::sqrt(ms / 4000.0)));
        }
        const double slope = -lsq_slope(lk, le);
        ok &= expect(slope >= 0.4, "I_(1,1) pathwise L2 slope %.3f >= 0.4 under doubling", slope);
    }

    // moments of every |alpha| <= 2 word against the closed-form oracle.
    // The oracle is continuous-time; left-point sums carry an O(delta^2/k)
    // discretisation bias (exactly delta^2/(2k) for the deterministic all-time
    // words, which have zero sampling variance), so the band is
    // 3 SE + delta^2/k with k large enough to keep the allowance an order of
    // magnitude under the stochastic words' SE.
    {
        const double delta = 0.5;
        const int k = 1024;
        const auto grid = FineGrid::build(Partition::uniform(1, delta), k);
        const IndexSet set = IndexSet::up_to(2, 2);
        const int M = 10000;
        std::vector<double> s1(set.size(), 0.0), s2(set.size(), 0.0), s4(set.size(), 0.0);
        IteratedIntegralTable table;
        table.set = set;
        for (int i = 0; i < M; ++i) {
            const BrownianRecord rec = sample_brownian(grid, 2, 1, 707, std::uint64_t(i), false);
            build_integral_table_into(table, rec, 0, std::size_t(k), 0);
            for (std::size_t a = 0; a < set.size(); ++a) {
                const double v = table.row_values(a)[std::size_t(k)];
                s1[a] += v;
                s2[a] += v * v;
                s4[a] += v * v * v * v;
            }
        }
        const double allowance = delta * delta / double(k);
        int bad = 0;
        for (std::size_t a = 0; a < set.size(); ++a) {
            const MomentOracle mo = iterated_moment_oracle(set.indices[a], delta);
            if (!mo.supported) {
                ++bad;
                continue;
            }
            const double mean = s1[a] / M, m2 = s2[a] / M;
            const double se_mean = std::sqrt(std::max(m2 - mean * mean, 0.0) / M);
            const double se_m2 = std::sqrt(std::max(s4[a] / M - m2 * m2, 0.0) / M);
            if (std::fabs(mean - mo.mean) > 3.0 * se_mean + allowance) ++bad;
            if (std::fabs(m2 - mo.second_moment) > 3.0 * se_m2 + allowance) ++bad;
        }
        ok &= expect(bad == 0,
                     "all 13 word moments within 3 SE (+ delta^2/k discrete-bias allowance), "
                     "%d deviations", bad);
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 3. Kalman agreement on the linear-Gaussian scalar model.
// ---------------------------------------------------------------------------
bool criterion_kalman_agreement() {
    const auto model = make_linear_gaussian_scalar(-1.0, 1.0, 1.0, gaussian_1d(0.0, 1.0));
    const Partition tau = Partition::uniform(32, 0.5);
    const auto grid = FineGrid::build(tau, 64);
    TestFunctional phi;
    phi.kind = TestFunctional::coordinate;

    int hits = 0;
    double worst = 0.0;
    for (std::uint64_t scenario_index = 0; scenario_index < 20; ++scenario_index) {
        const Scenario sc = simulate_scenario(model, grid, 515151, scenario_index);
        const auto states = kalman_bucy(model, sc.observation);
        const double kalman_mean = states.back().mean[0];

        const FilterEstimate est =
            estimate_filter(model, sc.observation, tau, 2, phi, 100000, 515151, 1);
        const double sigmas = std::fabs(est.pi_value - kalman_mean) / est.pi_stderr;
        worst = std::max(worst, sigmas);
        if (sigmas <= 3.0) ++hits;
        detail("scenario %2" PRIu64 ": pi=%+.5f kalman=%+.5f  |diff|=%.2f SE",
               scenario_index, est.pi_value, kalman_mean, sigmas);
    }
    return expect(hits >= 18, "%d/20 scenarios within 3 SE (need >= 18); worst %.2f SE", hits,
                  worst);
}

// ---------------------------------------------------------------------------
// 4. Convergence order against the high-resolution reference.
// ---------------------------------------------------------------------------
bool criterion_convergence_order() {
    ExperimentConfig cfg;
    cfg.experiment = "convergence";
    cfg.model.name = "bounded_sensor";
    cfg.t = 0.5;
    cfg.n_list = {4, 8, 16, 32};
    cfg.m_list = {1, 2};
    cfg.n_ref = 256;
    cfg.k_fine = 4;
    cfg.N = 100000;
    cfg.replications = 32;
    cfg.seed = 90210;
    cfg.phi = "x";
    cfg.threads = 1;

    const ConvergenceReport rep = run_convergence(cfg);
    for (const auto& row : rep.rows)
        detail("m=%d n=%2d: rho err %.3e (se %.1e), pi err %.3e", row.m, row.n, row.rho_err_l2,
               row.rho_err_se, row.pi_err_l2);

    bool ok = true;
    for (const auto& sl : rep.slopes) {
        const double need = sl.m == 1 ? 0.7 : 1.6;
        ok &= expect(sl.slope >= need, "m=%d slope %.3f >= %.1f (bootstrap CI [%.3f, %.3f])",
                     sl.m, sl.slope, need, sl.ci_lo, sl.ci_hi);
        ok &= expect(!sl.noise_dominated, "m=%d errors above the Monte Carlo noise floor", sl.m);
    }
    ok &= expect(rep.reference_budget_pass,
                 "reference error %.3e <= 10%% of smallest measured error %.3e",
                 rep.reference_error, rep.smallest_error);
    return ok;
}

// ---------------------------------------------------------------------------
// 5. Pathwise robustness: finite Lipschitz ratios, stable maxima, exact F(1).
// ---------------------------------------------------------------------------
bool criterion_robustness() {
    ExperimentConfig cfg;
    cfg.experiment = "robustness";
    cfg.model.name = "bounded_sensor";
    cfg.t = 0.5;
    cfg.n_list = {8};
    cfg.m_list = {1, 2};
    cfg.k_fine = 32;
    cfg.N = 8000;
    cfg.pairs = 200;
    cfg.R = 4.0;
    cfg.bump = 0.25;
    cfg.seed = 777001;
    cfg.threads = 1;

    const RobustnessReport rep = run_robustness(cfg);
    bool ok = expect(rep.pairs == 200, "200 path pairs probed");
    for (const auto& pm : rep.per_m) {
        for (const auto& lvl : pm.levels) {
            ok &= expect(lvl.all_finite, "m=%d level %-4s: all 200 ratios finite (max %.4f)",
                         pm.m, lvl.label.c_str(), lvl.max_ratio);
            ok &= expect(lvl.f_one_exact, "m=%d level %-4s: phi=1 gives F=1.0 exactly on every path",
                         pm.m, lvl.label.c_str());
        }
        ok &= expect(pm.max_stable,
                     "m=%d max ratio stable within 2x under doubling (base %.4f, N2 %.4f, k2 %.4f)",
                     pm.m, pm.levels[0].max_ratio, pm.levels[1].max_ratio,
                     pm.levels[2].max_ratio);
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 6. Equivalence of the stochastic-integral and pathwise forms.
// ---------------------------------------------------------------------------
bool criterion_ibp_equivalence() {
    ExperimentConfig cfg;
    cfg.experiment = "ibp-check";
    cfg.model.name = "bounded_sensor";
    cfg.t = 0.5;
    cfg.n_list = {2};
    cfg.m_list = {1, 2};
    cfg.levels = {128, 256, 512, 1024};
    cfg.N = 20000;
    cfg.seed = 606060;
    cfg.threads = 1;

    const IbpReport rep = run_ibp_check(cfg);
    for (const auto& row : rep.rows)
        detail("m=%d k=%4d: ensemble rel diff %.3e, per-sample rms %.3e, max %.3e", row.m,
               row.k_fine, row.ensemble_rel_diff, row.rms_diff, row.max_abs_diff);

    bool ok = true;
    for (const auto& pm : rep.per_m) {
        if (pm.m == 1) {
            ok &= expect(pm.exact_zero, "m=1 difference bitwise zero at every resolution");
        } else {
            ok &= expect(pm.rel_diff_finest <= 1e-2,
                         "m=%d relative difference %.3e <= 1e-2 at k_fine=1024", pm.m,
                         pm.rel_diff_finest);
            ok &= expect(pm.decay_slope >= 0.3 && pm.decay_slope <= 0.7,
                         "m=%d cross-term decay slope %.3f within 0.5 +/- 0.2", pm.m,
                         pm.decay_slope);
        }
    }
    return ok;
}

// ---------------------------------------------------------------------------
// 7. Determinism through the CLI: bytes independent of re-run and threads.
// ---------------------------------------------------------------------------
std::map<std::string, std::string> read_tree(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files[fs::relative(entry.path(), dir).string()] = ss.str();
    }
    return files;
}

bool criterion_determinism(const std::string& cli) {
    if (cli.empty()) return expect(false, "no CLI binary path supplied on the command line");

    const fs::path root = fs::temp_directory_path() / "hofilter_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);

    const std::map<std::string, std::string> configs = {
        {"simulate", R"({"experiment":"simulate","model":{"name":"linear_gaussian"},
                         "t":0.5,"n":4,"m":1,"k_fine":8,"seed":404})"},
        {"filter", R"({"experiment":"filter","model":{"name":"bounded_sensor"},
                       "t":0.5,"n":4,"m":2,"k_fine":8,"N":500,"seed":405,"phi":"x"})"},
        {"convergence", R"({"experiment":"convergence","model":{"name":"bounded_sensor"},
                            "t":0.5,"n_list":[2,4,8],"m_list":[1,2],"n_ref":64,"k_fine":2,
                            "N":300,"replications":3,"seed":406,"phi":"x"})"},
        {"robustness", R"({"experiment":"robustness","model":{"name":"bounded_sensor"},
                           "t":0.5,"n":2,"m_list":[1,2],"k_fine":4,"N":60,"pairs":6,
                           "R":4.0,"bump":0.25,"seed":407})"},
        {"ibp-check", R"({"experiment":"ibp-check","model":{"name":"bounded_sensor"},
                          "t":0.5,"n":2,"m_list":[1,2],"levels":[8,16],"N":128,"seed":408})"}};

    bool ok = true;
    for (const auto& [kind, text] : configs) {
        const fs::path cfg_path = root / (kind + ".json");
        std::ofstream(cfg_path) << text;

        const fs::path out1 = root / (kind + "_run1");
        const fs::path out2 = root / (kind + "_run2");
        for (int run = 1; run <= 2; ++run) {
            const fs::path& out = run == 1 ? out1 : out2;
            const int threads = run; // second pass doubles the worker count
            std::ostringstream cmd;
            cmd << cli << " " << kind << " --config " << cfg_path << " --out " << out
                << " --threads " << threads << " > /dev/null 2>&1";
            if (std::system(cmd.str().c_str()) != 0) {
                ok = expect(false, "%s: CLI run %d failed", kind.c_str(), run);
            }
        }
        if (!fs::exists(out1) || !fs::exists(out2)) continue;

        const auto t1 = read_tree(out1), t2 = read_tree(out2);
        bool same = t1.size() == t2.size() && !t1.empty();
        std::string first_diff;
        if (same) {
            for (const auto& [name, bytes] : t1) {
                const auto it = t2.find(name);
                if (it == t2.end() || it->second != bytes) {
                    same = false;
                    first_diff = name;
                    break;
                }
            }
        }
        ok &= expect(same, "%s: %zu artifact(s) byte-identical across re-run and thread count%s%s",
                     kind.c_str(), t1.size(), first_diff.empty() ? "" : ", first diff: ",
                     first_diff.c_str());
    }
    fs::remove_all(root);
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";

    struct Criterion {
        const char* name;
        double limit_seconds;
        std::function<bool()> run;
    };
    const std::vector<Criterion> criteria = {
        {"taming envelope, sup and slopes", 10.0, criterion_taming},
        {"multi-index and integral oracles", 60.0, criterion_integral_oracles},
        {"Kalman agreement on 20 scenarios", 300.0, criterion_kalman_agreement},
        {"convergence order vs reference", 1800.0, criterion_convergence_order},
        {"pathwise robustness ratios", 600.0, criterion_robustness},
        {"integration-by-parts equivalence", 600.0, criterion_ibp_equivalence},
        {"byte-identical deterministic re-runs", 600.0, [&cli] { return criterion_determinism(cli); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        g_detail.clear();
        const auto t0 = std::chrono::steady_clock::now();
        bool ok = false;
        try {
            ok = criteria[i].run();
        } catch (const std::exception& e) {
            g_detail.push_back(std::string("BAD:  unexpected exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > criteria[i].limit_seconds) {
            g_detail.push_back("BAD:  exceeded the runtime limit");
            ok = false;
        }
        std::printf("[%s] criterion %zu: %s (%.1f s, limit %.0f s)\n", ok ? "PASS" : "FAIL",
                    i + 1, criteria[i].name, secs, criteria[i].limit_seconds);
        for (const auto& line : g_detail) std::printf("    %s\n", line.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }

    std::printf("%zu/%zu acceptance criteria passed\n", criteria.size() - std::size_t(failures),
                criteria.size());
    return failures;
}
