#include "hofilter/bench.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "hofilter/parallel.hpp"
#include "hofilter/path_csv.hpp"
#include "hofilter/rng.hpp"

namespace hofilter {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw RejectedInput("config: " + msg); }

double as_number(const json& v, const std::string& key) {
    if (!v.is_number()) bad("\"" + key + "\" must be a number");
    return v.get<double>();
}

long long as_integer(const json& v, const std::string& key) {
    if (!v.is_number_integer()) bad("\"" + key + "\" must be an integer");
    return v.get<long long>();
}

int as_int_range(const json& v, const std::string& key, long long lo, long long hi) {
    const long long x = as_integer(v, key);
    if (x < lo || x > hi)
        bad("\"" + key + "\" must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return int(x);
}

std::uint64_t as_seed(const json& v, const std::string& key) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0)
        return std::uint64_t(v.get<long long>());
    bad("\"" + key + "\" must be a non-negative integer");
}

std::string as_string(const json& v, const std::string& key) {
    if (!v.is_string()) bad("\"" + key + "\" must be a string");
    return v.get<std::string>();
}

std::vector<int> as_int_list(const json& v, const std::string& key) {
    if (!v.is_array() || v.empty()) bad("\"" + key + "\" must be a non-empty array");
    std::vector<int> out;
    for (const auto& e : v) out.push_back(as_int_range(e, key, 1, 1 << 24));
    return out;
}

ModelConfig parse_model(const json& v) {
    if (!v.is_object()) bad("\"model\" must be an object");
    ModelConfig mc;
    bool have_name = false;
    for (const auto& [key, val] : v.items()) {
        if (key == "name") {
            mc.name = as_string(val, "model.name");
            have_name = true;
        } else if (key == "a") {
            mc.a = as_number(val, "model.a");
        } else if (key == "b") {
            mc.b = as_number(val, "model.b");
        } else if (key == "c") {
            mc.c = as_number(val, "model.c");
        } else if (key == "x0_mean") {
            mc.x0_mean = as_number(val, "model.x0_mean");
        } else if (key == "x0_var") {
            mc.x0_var = as_number(val, "model.x0_var");
        } else {
            bad("unknown key \"model." + key + "\"");
        }
    }
    if (!have_name) bad("\"model.name\" is required");
    if (mc.name != "linear_gaussian" && mc.name != "bounded_sensor" && mc.name != "zero_sensor")
        bad("unknown model \"" + mc.name + "\"");
    if (mc.x0_var < 0.0) bad("\"model.x0_var\" must be >= 0");
    return mc;
}

void sort_unique(std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RejectedInput("cannot open output file " + path);
    out << text;
    if (!out) throw RejectedInput("write failed for " + path);
}

std::string out_file(const ExperimentConfig& cfg, const char* name) {
    std::filesystem::create_directories(cfg.out);
    return (std::filesystem::path(cfg.out) / name).string();
}

// summaries carry the canonical config, its hash and the root seed; no
// timestamps, so re-runs are byte-identical
std::string write_summary(const ExperimentConfig& cfg, const char* name, json body) {
    if (cfg.out.empty()) return "";
    body["config"] = json::parse(canonical_config(cfg));
    body["config_hash"] = config_hash(cfg);
    body["root_seed"] = cfg.seed;
    const std::string path = out_file(cfg, name);
    write_text(path, body.dump(2) + "\n");
    return path;
}

std::string csv_preamble(const ExperimentConfig& cfg) {
    return "# config " + config_hash(cfg) + " seed " + std::to_string(cfg.seed) + "\n";
}

Partition single_partition(const ExperimentConfig& cfg) {
    if (!cfg.times.empty()) return Partition::from_times(cfg.times);
    if (cfg.n_list.size() != 1)
        throw RejectedInput("config: this experiment takes a single \"n\" (or explicit \"times\")");
    return Partition::uniform(cfg.n_list[0], cfg.t);
}

double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

// NaNs ordered last so quantiles of partially-poisoned data stay well defined
void sort_safe(std::vector<double>& v) {
    std::sort(v.begin(), v.end(), [](double a, double b) {
        if (std::isnan(b)) return !std::isnan(a);
        if (std::isnan(a)) return false;
        return a < b;
    });
}

double quantile_sorted(const std::vector<double>& s, double p) {
    if (s.empty()) return 0.0;
    const double pos = p * double(s.size() - 1);
    const std::size_t i = std::size_t(pos);
    if (i + 1 >= s.size()) return s.back();
    const double w = pos - double(i);
    return s[i] + w * (s[i + 1] - s[i]);
}

// standard error of rho_a - rho_b on a shared sample bank (the common-random-
// numbers noise floor of a convergence error entry)
double diff_stderr(const double* xa, const double* xb, const double* phiv, std::size_t N) {
    double shift = xa[0];
    for (std::size_t i = 0; i < N; ++i) {
        shift = std::max(shift, xa[i]);
        shift = std::max(shift, xb[i]);
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        mean += phiv[i] * (std::exp(xa[i] - shift) - std::exp(xb[i] - shift));
    mean /= double(N);
    double var = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double d = phiv[i] * (std::exp(xa[i] - shift) - std::exp(xb[i] - shift)) - mean;
        var += d * d;
    }
    return std::exp(shift) * std::sqrt(var / double(N - 1) / double(N));
}

std::uint32_t bootstrap_draw(std::uint64_t seed, std::uint32_t resample, std::uint32_t k) {
    const std::array<std::uint32_t, 4> ctr = {k, resample, 0u, 0xb007u};
    const std::array<std::uint32_t, 2> key = {std::uint32_t(seed), std::uint32_t(seed >> 32)};
    return detail::philox4x32(ctr, key)[0];
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text, const std::string& expected_kind) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what(), 0);
    }
    if (!root.is_object()) bad("top level must be an object");

    ExperimentConfig cfg;
    bool have_model = false, have_n = false, have_nlist = false, have_times = false;
    bool have_m = false, have_mlist = false, have_t = false;

    for (const auto& [key, val] : root.items()) {
        if (key == "experiment") {
            cfg.experiment = as_string(val, key);
        } else if (key == "model") {
            cfg.model = parse_model(val);
            have_model = true;
        } else if (key == "t") {
            cfg.t = as_number(val, key);
            have_t = true;
        } else if (key == "n") {
            cfg.n_list = {as_int_range(val, key, 1, 1 << 24)};
            have_n = true;
        } else if (key == "n_list") {
            cfg.n_list = as_int_list(val, key);
            have_nlist = true;
        } else if (key == "times") {
            if (!val.is_array() || val.size() < 2) bad("\"times\" must list at least 2 times");
            cfg.times.clear();
            for (const auto& e : val) cfg.times.push_back(as_number(e, key));
            have_times = true;
        } else if (key == "m") {
            cfg.m_list = {as_int_range(val, key, 1, 8)};
            have_m = true;
        } else if (key == "m_list") {
            cfg.m_list = as_int_list(val, key);
            for (int m : cfg.m_list)
                if (m > 8) bad("\"m_list\" entries must be in [1, 8]");
            have_mlist = true;
        } else if (key == "k_fine") {
            cfg.k_fine = as_int_range(val, key, 1, 1 << 24);
        } else if (key == "N") {
            const long long x = as_integer(val, key);
            if (x < 2) bad("\"N\" must be at least 2");
            cfg.N = std::size_t(x);
        } else if (key == "seed") {
            cfg.seed = as_seed(val, key);
        } else if (key == "phi") {
            cfg.phi = as_string(val, key);
        } else if (key == "out") {
            cfg.out = as_string(val, key);
        } else if (key == "threads") {
            cfg.threads = as_int_range(val, key, 1, 1024);
        } else if (key == "replications") {
            cfg.replications = as_int_range(val, key, 2, 1 << 20);
        } else if (key == "n_ref") {
            cfg.n_ref = as_int_range(val, key, 2, 1 << 24);
        } else if (key == "pairs") {
            cfg.pairs = as_int_range(val, key, 1, 1 << 20);
        } else if (key == "R") {
            cfg.R = as_number(val, key);
            if (!(cfg.R > 0.0)) bad("\"R\" must be positive");
        } else if (key == "bump") {
            cfg.bump = as_number(val, key);
            if (cfg.bump < 0.0) bad("\"bump\" must be >= 0");
        } else if (key == "riemann_k") {
            cfg.riemann_k = as_int_range(val, key, 0, 1 << 24);
        } else if (key == "levels") {
            cfg.levels = as_int_list(val, key);
        } else {
            bad("unknown key \"" + key + "\"");
        }
    }

    if (!have_model) bad("\"model\" is required");
    if (have_n && have_nlist) bad("give \"n\" or \"n_list\", not both");
    if (have_times && (have_n || have_nlist)) bad("\"times\" excludes \"n\" and \"n_list\"");
    if (have_m && have_mlist) bad("give \"m\" or \"m_list\", not both");

    if (have_times) {
        if (cfg.times.front() != 0.0) bad("\"times\" must start at 0");
        for (std::size_t i = 0; i + 1 < cfg.times.size(); ++i)
            if (!(cfg.times[i] < cfg.times[i + 1])) bad("\"times\" must be strictly increasing");
        if (have_t && cfg.t != cfg.times.back())
            bad("\"t\" conflicts with the last entry of \"times\"");
        cfg.t = cfg.times.back();
    }
    if (!(cfg.t > 0.0)) bad("\"t\" must be positive");

    if (cfg.phi != "one" && cfg.phi != "x" && cfg.phi != "tanh")
        bad("unknown phi \"" + cfg.phi + "\" (one | x | tanh)");

    static const char* kinds[] = {"simulate", "filter", "convergence", "robustness", "ibp-check"};
    if (!cfg.experiment.empty()) {
        bool ok = false;
        for (const char* k : kinds) ok = ok || cfg.experiment == k;
        if (!ok) bad("unknown experiment \"" + cfg.experiment + "\"");
    }
    if (!expected_kind.empty()) {
        if (cfg.experiment.empty())
            cfg.experiment = expected_kind;
        else if (cfg.experiment != expected_kind)
            bad("experiment \"" + cfg.experiment + "\" does not match the \"" + expected_kind +
                "\" subcommand");
    }

    sort_unique(cfg.n_list);
    sort_unique(cfg.m_list);
    sort_unique(cfg.levels);
    return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RejectedInput("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text, expected_kind);
}

std::string canonical_config(const ExperimentConfig& cfg) {
    json j;
    j["experiment"] = cfg.experiment;
    j["model"] = json{{"name", cfg.model.name}, {"a", cfg.model.a},
                      {"b", cfg.model.b},       {"c", cfg.model.c},
                      {"x0_mean", cfg.model.x0_mean}, {"x0_var", cfg.model.x0_var}};
    j["t"] = cfg.t;
    if (!cfg.times.empty())
        j["times"] = cfg.times;
    else
        j["n_list"] = cfg.n_list;
    j["m_list"] = cfg.m_list;
    j["k_fine"] = cfg.k_fine;
    j["N"] = cfg.N;
    j["seed"] = cfg.seed;
    j["phi"] = cfg.phi;
    j["replications"] = cfg.replications;
    j["n_ref"] = cfg.n_ref;
    j["pairs"] = cfg.pairs;
    j["R"] = cfg.R;
    j["bump"] = cfg.bump;
    j["riemann_k"] = cfg.riemann_k;
    j["levels"] = cfg.levels;
    return j.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string s = canonical_config(cfg);
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ModelSpec make_model(const ModelConfig& mc) {
    InitialLaw law;
    if (mc.x0_var > 0.0) {
        Mat cov(1, 1);
        cov(0, 0) = mc.x0_var;
        law = InitialLaw::gaussian_law(Vec{mc.x0_mean}, cov);
    } else {
        law = InitialLaw::point_mass(Vec{mc.x0_mean});
    }
    if (mc.name == "linear_gaussian") return make_linear_gaussian_scalar(mc.a, mc.b, mc.c, law);
    if (mc.name == "bounded_sensor") return make_bounded_sensor(law);
    if (mc.name == "zero_sensor") return make_zero_sensor(law);
    throw RejectedInput("config: unknown model \"" + mc.name + "\"");
}

TestFunctional make_test_functional(const std::string& name) {
    TestFunctional phi;
    if (name == "one") {
        phi.kind = TestFunctional::one;
    } else if (name == "x") {
        phi.kind = TestFunctional::coordinate;
    } else if (name == "tanh") {
        phi.kind = TestFunctional::tanh_coordinate;
    } else {
        throw RejectedInput("config: unknown phi \"" + name + "\"");
    }
    return phi;
}

Scenario simulate_scenario(const ModelSpec& model, std::shared_ptr<const FineGrid> grid,
                           std::uint64_t root_seed, std::uint64_t index) {
    Scenario sc;
    sc.scenario_seed = derive_seed(root_seed, stream_scenario, index);
    const BrownianRecord brownian =
        sample_brownian(grid, model.d_V, model.d_Y, sc.scenario_seed, 0, true);
    Vec x0 = model.initial_law.sample(sc.scenario_seed, 0);
    sc.signal = simulate_signal(model, brownian, std::move(x0));
    sc.observation = simulate_observation(model, sc.signal, brownian);
    return sc;
}

SimulateReport run_simulate(const ExperimentConfig& cfg) {
    const Partition tau = single_partition(cfg);
    auto grid = FineGrid::build(tau, cfg.k_fine);
    const ModelSpec model = make_model(cfg.model);

    SimulateReport rep;
    rep.scenario = simulate_scenario(model, grid, cfg.seed, 0);

    if (!cfg.out.empty()) {
        rep.signal_csv = out_file(cfg, "signal.csv");
        write_path(rep.scenario.signal, rep.signal_csv);
        rep.observation_csv = out_file(cfg, "observation.csv");
        write_path(rep.scenario.observation, rep.observation_csv);

        const std::size_t dx = std::size_t(model.d_X), dy = std::size_t(model.d_Y);
        const std::size_t last = grid->steps();
        json body;
        body["scenario_seed"] = rep.scenario.scenario_seed;
        body["signal_csv"] = "signal.csv";
        body["observation_csv"] = "observation.csv";
        body["grid"] = json{{"n_intervals", tau.n_intervals()},
                            {"k_fine", cfg.k_fine},
                            {"steps", grid->steps()}};
        json xf = json::array(), yf = json::array();
        for (std::size_t c = 0; c < dx; ++c) xf.push_back(rep.scenario.signal.X[last * dx + c]);
        for (std::size_t c = 0; c < dy; ++c) yf.push_back(rep.scenario.observation.Y[last * dy + c]);
        body["x_final"] = xf;
        body["y_final"] = yf;
        rep.summary_path = write_summary(cfg, "simulate_summary.json", std::move(body));
    }
    return rep;
}

FilterReport run_filter(const ExperimentConfig& cfg) {
    const Partition tau = single_partition(cfg);
    if (cfg.m_list.size() != 1)
        throw RejectedInput("config: the filter experiment takes a single \"m\"");
    const int m = cfg.m_list[0];
    auto grid = FineGrid::build(tau, cfg.k_fine);
    const ModelSpec model = make_model(cfg.model);
    const TestFunctional phi = make_test_functional(cfg.phi);

    const Scenario sc = simulate_scenario(model, grid, cfg.seed, 0);
    FilterReport rep;
    rep.estimate =
        estimate_filter(model, sc.observation, tau, m, phi, cfg.N, cfg.seed, cfg.threads);

    json est;
    est["rho_value"] = rep.estimate.rho_value;
    est["rho_stderr"] = rep.estimate.rho_stderr;
    est["pi_value"] = rep.estimate.pi_value;
    est["pi_stderr"] = rep.estimate.pi_stderr;
    est["n_samples"] = rep.estimate.n_samples;
    est["ess"] = rep.estimate.ess;
    est["m"] = rep.estimate.m;
    est["n_intervals"] = rep.estimate.n_intervals;
    est["k_fine"] = rep.estimate.k_fine;
    json body;
    body["estimate"] = est;
    body["phi"] = phi.name();
    body["scenario_seed"] = sc.scenario_seed;
    rep.summary_path = write_summary(cfg, "filter_summary.json", std::move(body));
    return rep;
}

ConvergenceReport run_convergence(const ExperimentConfig& cfg) {
    if (!cfg.times.empty())
        throw RejectedInput("convergence: uniform \"n_list\" required, explicit times unsupported");
    const std::vector<int>& ns = cfg.n_list;
    if (ns.size() < 3) throw RejectedInput("convergence: need at least 3 mesh sizes");
    for (std::size_t i = 0; i + 1 < ns.size(); ++i)
        if (ns[i + 1] != 2 * ns[i])
            throw RejectedInput("convergence: n_list must be dyadic (each entry twice the last)");
    if (cfg.m_list.empty()) throw RejectedInput("convergence: give \"m\" or \"m_list\"");
    const int nmax = ns.back();
    if (cfg.n_ref < 8 * nmax)
        throw RejectedInput("convergence: n_ref must be at least 8x the largest n");
    if (cfg.n_ref % nmax != 0 || cfg.n_ref % 2 != 0)
        throw RejectedInput("convergence: n_ref must be an even multiple of the largest n");

    const int R = cfg.replications;
    const int m_ref = cfg.m_list.back();
    const ModelSpec model = make_model(cfg.model);
    const TestFunctional phi = make_test_functional(cfg.phi);
    const std::size_t dy = std::size_t(model.d_Y), dx = std::size_t(model.d_X);
    const std::size_t N = cfg.N;
    const int threads = std::max(1, cfg.threads);

    auto grid = FineGrid::build(Partition::uniform(cfg.n_ref, cfg.t), cfg.k_fine);
    const std::size_t S = grid->steps();

    // partitions: the study list, then the half-reference and the reference
    const int n_half = cfg.n_ref / 2;
    std::vector<int> part_ns = ns;
    part_ns.push_back(n_half);
    part_ns.push_back(cfg.n_ref);
    const int n_parts = int(part_ns.size());
    std::vector<Partition> parts;
    std::vector<std::vector<std::size_t>> anchors;
    for (int n : part_ns) {
        parts.push_back(Partition::uniform(n, cfg.t));
        anchors.push_back(engine::partition_anchors(*grid, parts.back()));
    }

    struct Col {
        int m, part, n;
    };
    std::vector<Col> cols;
    for (int m : cfg.m_list)
        for (std::size_t p = 0; p < ns.size(); ++p) cols.push_back({m, int(p), ns[p]});
    const int SC = int(cols.size()); // study columns
    const int col_half = SC;
    cols.push_back({m_ref, n_parts - 2, n_half});
    const int col_ref = SC + 1;
    cols.push_back({m_ref, n_parts - 1, cfg.n_ref});
    const std::size_t NC = cols.size();

    // table depths needed per partition (an order-1 column reads only the
    // empty-word row, so it can share any deeper table)
    std::vector<std::vector<int>> part_depths(n_parts);
    for (const Col& c : cols)
        if (c.m >= 2) {
            auto& d = part_depths[std::size_t(c.part)];
            if (std::find(d.begin(), d.end(), c.m - 1) == d.end()) d.push_back(c.m - 1);
        }
    for (auto& d : part_depths) {
        if (d.empty()) d.push_back(0);
        std::sort(d.begin(), d.end());
    }
    std::vector<std::vector<std::array<int, 3>>> part_cols(n_parts); // {m, col, work index}
    for (int c = 0; c < int(NC); ++c) {
        const Col& col = cols[std::size_t(c)];
        int widx = 0;
        if (col.m >= 2) {
            const auto& d = part_depths[std::size_t(col.part)];
            widx = int(std::find(d.begin(), d.end(), col.m - 1) - d.begin());
        }
        part_cols[std::size_t(col.part)].push_back({col.m, c, widx});
    }

    struct DepthWork {
        IteratedIntegralTable table;
        std::vector<double> Lh, Lhh;
    };
    struct ThreadWork {
        std::vector<std::vector<DepthWork>> parts;
        std::vector<double> acc;
        Vec x;
    };
    std::vector<ThreadWork> tw(static_cast<std::size_t>(threads));
    for (auto& w : tw) {
        w.parts.resize(std::size_t(n_parts));
        for (int p = 0; p < n_parts; ++p)
            for (int d : part_depths[std::size_t(p)]) {
                DepthWork dwk;
                dwk.table.set = IndexSet::up_to(d, model.d_V);
                dwk.Lh.resize(dwk.table.set.size() * dy);
                dwk.Lhh.resize(dwk.table.set.size());
                w.parts[std::size_t(p)].push_back(std::move(dwk));
            }
        w.acc.resize(NC);
        w.x.resize(dx);
    }

    std::vector<double> xibar(NC * N), phiv(N);
    std::vector<double> rho(NC * std::size_t(R)), pi_(NC * std::size_t(R));
    std::vector<double> dse(std::size_t(SC) * std::size_t(R), 0.0);

    for (int r = 0; r < R; ++r) {
        const Scenario sc = simulate_scenario(model, grid, cfg.seed, std::uint64_t(r));
        const double* Yp = sc.observation.Y.data();
        std::vector<double> dYv(S * dy);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t i = 0; i < dy; ++i)
                dYv[s * dy + i] = Yp[(s + 1) * dy + i] - Yp[s * dy + i];

        parallel_for(N, threads, [&](int worker, std::size_t i) {
            ThreadWork& w = tw[std::size_t(worker)];
            const std::uint64_t si = std::uint64_t(r) * N + i;
            const Vec x0 = model.initial_law.sample(cfg.seed, si);
            const BrownianRecord brownian =
                sample_brownian(grid, model.d_V, model.d_Y, cfg.seed, si, false);
            const SignalRecord signal = simulate_signal(model, brownian, x0);

            std::fill(w.acc.begin(), w.acc.end(), 0.0);
            for (int p = 0; p < n_parts; ++p) {
                const auto& anch = anchors[std::size_t(p)];
                const auto& ptimes = parts[std::size_t(p)].times;
                const int np = int(anch.size()) - 1;
                for (int j = 0; j < np; ++j) {
                    const std::size_t lo = anch[std::size_t(j)], hi = anch[std::size_t(j) + 1];
                    for (std::size_t c2 = 0; c2 < dx; ++c2) w.x[c2] = signal.X[lo * dx + c2];
                    for (auto& dwk : w.parts[std::size_t(p)]) {
                        build_integral_table_into(dwk.table, brownian, lo, hi, j);
                        eval_operator_tables(model.operator_oracle, dwk.table.set, w.x,
                                             dwk.Lh.data(), dwk.Lhh.data());
                    }
                    for (const auto& pc : part_cols[std::size_t(p)]) {
                        const int m = pc[0], c = pc[1], widx = pc[2];
                        DepthWork& dwk = w.parts[std::size_t(p)][std::size_t(widx)];
                        const engine::XiSplit sp = engine::xi_split(
                            dwk.table, dwk.Lh.data(), dwk.Lhh.data(), model.d_Y, Yp, dYv.data(), m);
                        if (m <= 2)
                            w.acc[std::size_t(c)] += sp.low + sp.high;
                        else
                            w.acc[std::size_t(c)] +=
                                sp.low + gamma_trunc(m, ptimes[std::size_t(j) + 1] -
                                                            ptimes[std::size_t(j)],
                                                     sp.high);
                    }
                }
            }
            for (std::size_t c = 0; c < NC; ++c) xibar[c * N + i] = w.acc[c];
            phiv[i] = phi(&signal.X[S * dx], dx);
        });

        for (std::size_t c = 0; c < NC; ++c) {
            const engine::WeightedStats st =
                engine::reduce_log_weights(&xibar[c * N], phiv.data(), N);
            rho[c * std::size_t(R) + std::size_t(r)] = st.rho;
            pi_[c * std::size_t(R) + std::size_t(r)] = st.pi;
        }
        for (int c = 0; c < SC; ++c)
            dse[std::size_t(c) * std::size_t(R) + std::size_t(r)] = diff_stderr(
                &xibar[std::size_t(c) * N], &xibar[std::size_t(col_ref) * N], phiv.data(), N);
    }

    ConvergenceReport rep;
    rep.m_ref = m_ref;
    rep.n_ref = cfg.n_ref;
    rep.replications = R;
    rep.reference_desc = "m=" + std::to_string(m_ref) + " n=" + std::to_string(cfg.n_ref) +
                         " surrogate, Richardson budget from n=" + std::to_string(n_half);

    const double* rho_ref = &rho[std::size_t(col_ref) * std::size_t(R)];
    const double* rho_half = &rho[std::size_t(col_half) * std::size_t(R)];
    const double* pi_ref = &pi_[std::size_t(col_ref) * std::size_t(R)];

    std::vector<double> err2(std::size_t(SC) * std::size_t(R));
    double min_rms = std::numeric_limits<double>::infinity();
    for (int c = 0; c < SC; ++c) {
        double ms = 0.0, ms_pi = 0.0;
        for (int r = 0; r < R; ++r) {
            const double e = std::fabs(rho[std::size_t(c) * std::size_t(R) + std::size_t(r)] -
                                       rho_ref[r]);
            const double epi = std::fabs(pi_[std::size_t(c) * std::size_t(R) + std::size_t(r)] -
                                         pi_ref[r]);
            err2[std::size_t(c) * std::size_t(R) + std::size_t(r)] = e * e;
            ms += e * e;
            ms_pi += epi * epi;
        }
        ms /= double(R);
        ms_pi /= double(R);
        const double rms = std::sqrt(ms), rms_pi = std::sqrt(ms_pi);

        double v = 0.0, v_pi = 0.0;
        for (int r = 0; r < R; ++r) {
            const double d = err2[std::size_t(c) * std::size_t(R) + std::size_t(r)] - ms;
            v += d * d;
            const double epi = std::fabs(pi_[std::size_t(c) * std::size_t(R) + std::size_t(r)] -
                                         pi_ref[r]);
            const double dpi = epi * epi - ms_pi;
            v_pi += dpi * dpi;
        }
        const double se_ms = std::sqrt(v / double(R - 1) / double(R));
        const double se_ms_pi = std::sqrt(v_pi / double(R - 1) / double(R));

        ConvergenceRow row;
        row.m = cols[std::size_t(c)].m;
        row.n = cols[std::size_t(c)].n;
        row.delta = cfg.t / double(cols[std::size_t(c)].n);
        row.rho_err_l2 = rms;
        row.rho_err_se = rms > 0.0 ? se_ms / (2.0 * rms) : 0.0;
        row.pi_err_l2 = rms_pi;
        row.pi_err_se = rms_pi > 0.0 ? se_ms_pi / (2.0 * rms_pi) : 0.0;
        rep.rows.push_back(row);
        min_rms = std::min(min_rms, rms);
    }
    rep.smallest_error = SC > 0 ? min_rms : 0.0;

    double gap_ms = 0.0;
    for (int r = 0; r < R; ++r) {
        const double g = rho_ref[r] - rho_half[r];
        gap_ms += g * g;
    }
    rep.reference_error = std::sqrt(gap_ms / double(R)) / (std::pow(2.0, m_ref) - 1.0);
    rep.reference_budget_pass = rep.reference_error <= 0.1 * rep.smallest_error;

    // per-m slope, bootstrap CI over replications
    const int B = 200;
    for (std::size_t mi = 0; mi < cfg.m_list.size(); ++mi) {
        const int m = cfg.m_list[mi];
        const int c0 = int(mi * ns.size());
        ConvergenceSlope sl;
        sl.m = m;

        bool any_zero = false;
        for (std::size_t k = 0; k < ns.size(); ++k)
            any_zero = any_zero || rep.rows[std::size_t(c0) + k].rho_err_l2 == 0.0;
        for (std::size_t k = 0; k < ns.size() && !any_zero; ++k) {
            const int c = c0 + int(k);
            double mean_se = 0.0;
            for (int r = 0; r < R; ++r)
                mean_se += dse[std::size_t(c) * std::size_t(R) + std::size_t(r)];
            mean_se /= double(R);
            if (rep.rows[std::size_t(c)].rho_err_l2 <= 2.0 * mean_se) sl.noise_dominated = true;
        }

        if (any_zero) {
            sl.noise_dominated = true;
            sl.slope = 0.0;
            sl.ci_lo = sl.ci_hi = 0.0;
        } else {
            std::vector<double> xs(ns.size()), ys(ns.size());
            for (std::size_t k = 0; k < ns.size(); ++k) {
                xs[k] = std::log(cfg.t / double(ns[k]));
                ys[k] = std::log(rep.rows[std::size_t(c0) + k].rho_err_l2);
            }
            sl.slope = lsq_slope(xs, ys);

            std::vector<double> slopes_b(static_cast<std::size_t>(B));
            for (int b = 0; b < B; ++b) {
                for (std::size_t k = 0; k < ns.size(); ++k) {
                    double ms = 0.0;
                    for (int r = 0; r < R; ++r) {
                        const std::uint32_t idx =
                            bootstrap_draw(cfg.seed, std::uint32_t(b), std::uint32_t(r)) %
                            std::uint32_t(R);
                        ms += err2[(std::size_t(c0) + k) * std::size_t(R) + idx];
                    }
                    ys[k] = 0.5 * std::log(std::max(ms / double(R), 1e-300));
                }
                slopes_b[std::size_t(b)] = lsq_slope(xs, ys);
            }
            std::sort(slopes_b.begin(), slopes_b.end());
            sl.ci_lo = quantile_sorted(slopes_b, 0.025);
            sl.ci_hi = quantile_sorted(slopes_b, 0.975);
        }
        rep.slopes.push_back(sl);
    }

    if (!cfg.out.empty()) {
        std::string csv = csv_preamble(cfg);
        csv += "m,n,delta,rho_err_l2,rho_err_se,pi_err_l2,pi_err_se\n";
        for (const auto& row : rep.rows)
            csv += std::to_string(row.m) + "," + std::to_string(row.n) + "," + fmt17(row.delta) +
                   "," + fmt17(row.rho_err_l2) + "," + fmt17(row.rho_err_se) + "," +
                   fmt17(row.pi_err_l2) + "," + fmt17(row.pi_err_se) + "\n";
        write_text(out_file(cfg, "convergence.csv"), csv);

        json body;
        json jrows = json::array();
        for (const auto& row : rep.rows)
            jrows.push_back(json{{"m", row.m},
                                 {"n", row.n},
                                 {"delta", row.delta},
                                 {"rho_err_l2", row.rho_err_l2},
                                 {"rho_err_se", row.rho_err_se},
                                 {"pi_err_l2", row.pi_err_l2},
                                 {"pi_err_se", row.pi_err_se}});
        body["rows"] = jrows;
        json jsl = json::array();
        for (const auto& sl : rep.slopes)
            jsl.push_back(json{{"m", sl.m},
                               {"slope", sl.slope},
                               {"ci_lo", sl.ci_lo},
                               {"ci_hi", sl.ci_hi},
                               {"noise_dominated", sl.noise_dominated}});
        body["slopes"] = jsl;
        body["reference"] = json{{"m", rep.m_ref},
                                 {"n", rep.n_ref},
                                 {"error", rep.reference_error},
                                 {"smallest_error", rep.smallest_error},
                                 {"budget_pass", rep.reference_budget_pass},
                                 {"desc", rep.reference_desc}};
        write_summary(cfg, "convergence_summary.json", std::move(body));
    }
    return rep;
}

namespace {

// Brownian knots for the robustness probes, one value row per grid time
std::vector<double> brownian_knots(std::uint64_t seed, std::uint64_t sample,
                                   const std::vector<double>& times, std::size_t dy) {
    NormalLane lane(seed, stream_obs_noise, sample);
    std::vector<double> y(times.size() * dy, 0.0);
    std::uint64_t idx = 0;
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        const double sd = std::sqrt(times[k + 1] - times[k]);
        for (std::size_t i = 0; i < dy; ++i, ++idx)
            y[(k + 1) * dy + i] = y[k * dy + i] + sd * lane.at(idx);
    }
    return y;
}

void clip_values(std::vector<double>& v, double R) {
    for (double& x : v) x = std::min(R, std::max(-R, x));
}

} // namespace

RobustnessReport run_robustness(const ExperimentConfig& cfg) {
    const Partition tau = single_partition(cfg);
    if (cfg.m_list.empty()) throw RejectedInput("robustness: give \"m\" or \"m_list\"");
    const int P = cfg.pairs;
    const ModelSpec model = make_model(cfg.model);
    const TestFunctional phi = make_test_functional(cfg.phi);
    const std::size_t dy = std::size_t(model.d_Y);
    const int threads = std::max(1, cfg.threads);

    auto grid_base = FineGrid::build(tau, cfg.k_fine);
    auto grid_k2 = FineGrid::build(tau, 2 * cfg.k_fine);
    const std::vector<double>& times = grid_base->times;
    const std::size_t K = times.size();
    if (K < 3) throw RejectedInput("robustness: need at least 2 fine steps for probe paths");

    // probe paths: pairs cycle through (constant shift, local bump, resample)
    std::vector<ObservationPath> paths;
    paths.reserve(std::size_t(2 * P));
    std::vector<int> family(static_cast<std::size_t>(P));
    std::vector<double> dist(static_cast<std::size_t>(P));
    const std::size_t halfw = std::max<std::size_t>(1, (K - 1) / 8);
    for (int p = 0; p < P; ++p) {
        const std::uint64_t ps = derive_seed(cfg.seed, stream_probe_paths, std::uint64_t(p));
        std::vector<double> y1 = brownian_knots(ps, 0, times, dy);
        std::vector<double> y2;
        family[std::size_t(p)] = p % 3;
        switch (family[std::size_t(p)]) {
            case 0:
                y2 = y1;
                for (double& v : y2) v += cfg.bump;
                break;
            case 1: {
                y2 = y1;
                const std::size_t c =
                    1 + std::size_t(derive_seed(ps, stream_probe_paths, 1) % std::uint64_t(K - 2));
                for (std::size_t k = 0; k < K; ++k) {
                    const double u =
                        1.0 - std::fabs(double(k) - double(c)) / double(halfw);
                    if (u > 0.0)
                        for (std::size_t i = 0; i < dy; ++i) y2[k * dy + i] += cfg.bump * u;
                }
                break;
            }
            default:
                y2 = brownian_knots(ps, 1, times, dy);
                break;
        }
        clip_values(y1, cfg.R);
        clip_values(y2, cfg.R);
        paths.push_back(ObservationPath::polyline(times, std::move(y1)));
        paths.push_back(ObservationPath::polyline(times, std::move(y2)));
        dist[std::size_t(p)] =
            path_sup_distance(paths[std::size_t(2 * p)], paths[std::size_t(2 * p + 1)]);
    }
    std::vector<const ObservationPath*> ptrs;
    ptrs.reserve(paths.size());
    for (const auto& y : paths) ptrs.push_back(&y);

    RobustnessReport rep;
    rep.pairs = P;
    rep.R = cfg.R;
    rep.bump = cfg.bump;

    std::string csv = csv_preamble(cfg);
    csv += "m,level,pair,family,sup_dist,f_diff,ratio\n";

    std::vector<double> ones(2 * cfg.N, 1.0);

    auto eval_level = [&](const char* label, const engine::RobustBank& bank, std::size_t n_use,
                          int kf) {
        RobustnessLevel lv;
        lv.label = label;
        lv.N = n_use;
        lv.k_fine = kf;
        lv.all_finite = true;
        lv.f_one_exact = true;

        std::vector<double> F(std::size_t(2 * P));
        for (int q = 0; q < 2 * P; ++q) {
            const double* row = &bank.xibar[std::size_t(q) * bank.n_samples];
            F[std::size_t(q)] = engine::reduce_log_weights(row, bank.phiv.data(), n_use).pi;
            if (engine::reduce_log_weights(row, ones.data(), n_use).pi != 1.0)
                lv.f_one_exact = false;
        }
        lv.pair_f_diff.resize(std::size_t(P));
        lv.pair_ratio.resize(std::size_t(P));
        for (int p = 0; p < P; ++p) {
            const double fd = std::fabs(F[std::size_t(2 * p)] - F[std::size_t(2 * p + 1)]);
            const double ratio = dist[std::size_t(p)] == 0.0 ? 0.0 : fd / dist[std::size_t(p)];
            lv.pair_f_diff[std::size_t(p)] = fd;
            lv.pair_ratio[std::size_t(p)] = ratio;
            if (!std::isfinite(ratio)) lv.all_finite = false;
        }

        std::vector<double> sorted = lv.pair_ratio;
        sort_safe(sorted);
        lv.max_ratio = sorted.empty() ? 0.0 : sorted.back();
        lv.q50 = quantile_sorted(sorted, 0.5);
        lv.q90 = quantile_sorted(sorted, 0.9);
        lv.q99 = quantile_sorted(sorted, 0.99);
        std::vector<double> bump_fd;
        for (int p = 0; p < P; ++p)
            if (family[std::size_t(p)] != 2) bump_fd.push_back(lv.pair_f_diff[std::size_t(p)]);
        sort_safe(bump_fd);
        lv.median_abs_df = quantile_sorted(bump_fd, 0.5);
        return lv;
    };

    for (int m : cfg.m_list) {
        const engine::RobustBank bank_base = engine::robust_bank(
            model, grid_base, ptrs, tau, m, phi, 2 * cfg.N, cfg.seed, threads, cfg.riemann_k);
        const engine::RobustBank bank_k2 = engine::robust_bank(
            model, grid_k2, ptrs, tau, m, phi, cfg.N, cfg.seed, threads, cfg.riemann_k);

        RobustnessPerM pm;
        pm.m = m;
        pm.levels.push_back(eval_level("base", bank_base, cfg.N, cfg.k_fine));
        pm.levels.push_back(eval_level("N2", bank_base, 2 * cfg.N, cfg.k_fine));
        pm.levels.push_back(eval_level("k2", bank_k2, cfg.N, 2 * cfg.k_fine));

        const double mb = pm.levels[0].max_ratio;
        auto within2 = [&](double v) {
            return mb == 0.0 ? v == 0.0 : (v >= 0.5 * mb && v <= 2.0 * mb);
        };
        pm.max_stable = within2(pm.levels[1].max_ratio) && within2(pm.levels[2].max_ratio);

        for (const auto& lv : pm.levels)
            for (int p = 0; p < P; ++p)
                csv += std::to_string(m) + "," + lv.label + "," + std::to_string(p) + "," +
                       std::to_string(family[std::size_t(p)]) + "," +
                       fmt17(dist[std::size_t(p)]) + "," + fmt17(lv.pair_f_diff[std::size_t(p)]) +
                       "," + fmt17(lv.pair_ratio[std::size_t(p)]) + "\n";

        rep.per_m.push_back(std::move(pm));
    }

    if (!cfg.out.empty()) {
        write_text(out_file(cfg, "robustness.csv"), csv);
        json body;
        json jm = json::array();
        for (const auto& pm : rep.per_m) {
            json jlv = json::array();
            for (const auto& lv : pm.levels)
                jlv.push_back(json{{"label", lv.label},
                                   {"N", lv.N},
                                   {"k_fine", lv.k_fine},
                                   {"max_ratio", lv.max_ratio},
                                   {"q50", lv.q50},
                                   {"q90", lv.q90},
                                   {"q99", lv.q99},
                                   {"median_abs_df", lv.median_abs_df},
                                   {"all_finite", lv.all_finite},
                                   {"f_one_exact", lv.f_one_exact}});
            jm.push_back(json{{"m", pm.m}, {"max_stable", pm.max_stable}, {"levels", jlv}});
        }
        body["per_m"] = jm;
        body["pairs"] = P;
        body["R"] = cfg.R;
        body["bump"] = cfg.bump;
        write_summary(cfg, "robustness_summary.json", std::move(body));
    }
    return rep;
}

IbpReport run_ibp_check(const ExperimentConfig& cfg) {
    const Partition tau = single_partition(cfg);
    if (cfg.m_list.empty()) throw RejectedInput("ibp-check: give \"m\" or \"m_list\"");
    const std::vector<int>& lv = cfg.levels;
    if (lv.size() < 2) throw RejectedInput("ibp-check: need at least 2 k_fine levels");
    const int kmax = lv.back();
    for (int k : lv)
        if (kmax % k != 0)
            throw RejectedInput("ibp-check: every level must divide the largest level");

    const ModelSpec model = make_model(cfg.model);
    const TestFunctional phi = make_test_functional(cfg.phi);
    const std::size_t dy = std::size_t(model.d_Y);
    const int threads = std::max(1, cfg.threads);

    auto grid_max = FineGrid::build(tau, kmax);
    const Scenario sc = simulate_scenario(model, grid_max, cfg.seed, 0);

    IbpReport rep;
    std::string csv = csv_preamble(cfg);
    csv += "m,k_fine,rho_xi,rho_robust,ensemble_rel_diff,rms_diff,max_abs_diff\n";

    for (int m : cfg.m_list) {
        std::vector<double> ks, lrms;
        IbpPerM pm;
        pm.m = m;
        pm.exact_zero = true;
        for (int k : lv) {
            ObservationRecord obs;
            if (k == kmax) {
                obs = sc.observation;
            } else {
                // same observation path, knots subsampled onto the coarser grid
                auto g = FineGrid::build(tau, k);
                obs.grid = g;
                obs.d_Y = model.d_Y;
                const std::size_t f = std::size_t(kmax / k);
                obs.Y.resize(g->times.size() * dy);
                for (std::size_t q = 0; q < g->times.size(); ++q)
                    for (std::size_t i = 0; i < dy; ++i)
                        obs.Y[q * dy + i] = sc.observation.Y[q * f * dy + i];
            }

            std::vector<double> xi, rob, phv;
            engine::dual_log_weights(model, obs, tau, m, phi, cfg.N, cfg.seed, threads, xi, rob,
                                     phv);
            const engine::WeightedStats sx =
                engine::reduce_log_weights(xi.data(), phv.data(), cfg.N);
            const engine::WeightedStats sr =
                engine::reduce_log_weights(rob.data(), phv.data(), cfg.N);

            double ms = 0.0, mx = 0.0;
            for (std::size_t i = 0; i < cfg.N; ++i) {
                const double d = xi[i] - rob[i];
                ms += d * d;
                mx = std::max(mx, std::fabs(d));
            }
            const double rms = std::sqrt(ms / double(cfg.N));
            double rel;
            if (sx.rho == 0.0)
                rel = sr.rho == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
            else
                rel = std::fabs(sx.rho - sr.rho) / std::fabs(sx.rho);

            IbpRow row;
            row.m = m;
            row.k_fine = k;
            row.rho_xi = sx.rho;
            row.rho_robust = sr.rho;
            row.ensemble_rel_diff = rel;
            row.rms_diff = rms;
            row.max_abs_diff = mx;
            rep.rows.push_back(row);
            csv += std::to_string(m) + "," + std::to_string(k) + "," + fmt17(sx.rho) + "," +
                   fmt17(sr.rho) + "," + fmt17(rel) + "," + fmt17(rms) + "," + fmt17(mx) + "\n";

            pm.exact_zero = pm.exact_zero && mx == 0.0;
            if (rms > 0.0) {
                ks.push_back(std::log(double(k)));
                lrms.push_back(std::log(rms));
            }
            if (k == kmax) pm.rel_diff_finest = rel;
        }
        if (!pm.exact_zero && lrms.size() >= 2) pm.decay_slope = -lsq_slope(ks, lrms);
        rep.per_m.push_back(pm);
    }

    if (!cfg.out.empty()) {
        write_text(out_file(cfg, "ibp.csv"), csv);
        json body;
        json jrows = json::array();
        for (const auto& row : rep.rows)
            jrows.push_back(json{{"m", row.m},
                                 {"k_fine", row.k_fine},
                                 {"rho_xi", row.rho_xi},
                                 {"rho_robust", row.rho_robust},
                                 {"ensemble_rel_diff", row.ensemble_rel_diff},
                                 {"rms_diff", row.rms_diff},
                                 {"max_abs_diff", row.max_abs_diff}});
        body["rows"] = jrows;
        json jm = json::array();
        for (const auto& pm : rep.per_m)
            jm.push_back(json{{"m", pm.m},
                              {"decay_slope", pm.decay_slope},
                              {"exact_zero", pm.exact_zero},
                              {"rel_diff_finest", pm.rel_diff_finest}});
        body["per_m"] = jm;
        write_summary(cfg, "ibp_summary.json", std::move(body));
    }
    return rep;
}

std::string run_experiment(const ExperimentConfig& cfg) {
    auto done = [&](const char* name) {
        return cfg.out.empty() ? std::string()
                               : (std::filesystem::path(cfg.out) / name).string();
    };
    if (cfg.experiment == "simulate") return run_simulate(cfg).summary_path;
    if (cfg.experiment == "filter") return run_filter(cfg).summary_path;
    if (cfg.experiment == "convergence") {
        run_convergence(cfg);
        return done("convergence_summary.json");
    }
    if (cfg.experiment == "robustness") {
        run_robustness(cfg);
        return done("robustness_summary.json");
    }
    if (cfg.experiment == "ibp-check") {
        run_ibp_check(cfg);
        return done("ibp_summary.json");
    }
    throw RejectedInput("config: no experiment selected");
}

} // namespace hofilter
