#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hofilter/bench.hpp"
#include "hofilter/errors.hpp"
#include "hofilter/path_csv.hpp"

using namespace hofilter;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string reject_message(const std::string& json_text) {
    try {
        parse_config(json_text);
    } catch (const RejectedInput& e) {
        return e.what();
    }
    FAIL("expected the config to be rejected: ", json_text);
    return "";
}

fs::path fresh_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "hofilter_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const char* kFilterConfig = R"({
    "experiment": "filter",
    "model": {"name": "bounded_sensor"},
    "t": 0.5, "n": 4, "m": 2, "k_fine": 4,
    "N": 200, "seed": 11, "phi": "tanh"
})";

} // namespace

TEST_CASE("config parsing fills defaults and normalises lists") {
    const ExperimentConfig cfg = parse_config(kFilterConfig);
    CHECK(cfg.experiment == "filter");
    CHECK(cfg.model.name == "bounded_sensor");
    CHECK(cfg.model.x0_var == 1.0);
    CHECK(cfg.n_list == std::vector<int>{4});
    CHECK(cfg.m_list == std::vector<int>{2});
    CHECK(cfg.N == 200);
    CHECK(cfg.seed == 11);
    CHECK(cfg.threads == 1);
    CHECK(cfg.out.empty());

    // expected_kind fills an absent experiment entry
    const ExperimentConfig filled = parse_config(
        R"({"model": {"name": "zero_sensor"}, "n": 2, "m": 1})", "simulate");
    CHECK(filled.experiment == "simulate");

    // lists are sorted and deduplicated
    const ExperimentConfig lists = parse_config(
        R"({"experiment": "convergence", "model": {"name": "bounded_sensor"},
            "n_list": [8, 2, 4, 8], "m_list": [2, 1, 2]})");
    CHECK(lists.n_list == std::vector<int>{2, 4, 8});
    CHECK(lists.m_list == std::vector<int>{1, 2});
}

TEST_CASE("config parsing rejects unknown keys and contradictions") {
    CHECK(reject_message(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                             "n": 4, "m": 1, "bogus": 1})")
              .find("unknown key \"bogus\"") != std::string::npos);
    CHECK(reject_message(R"({"experiment": "filter",
                             "model": {"name": "bounded_sensor", "weird": 2}, "n": 4, "m": 1})")
              .find("unknown key \"model.weird\"") != std::string::npos);

    // model block and sub-fields
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "n": 4, "m": 1})"), RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "mystery"},
                                     "n": 4, "m": 1})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter",
                                     "model": {"name": "bounded_sensor", "x0_var": -1},
                                     "n": 4, "m": 1})"),
                    RejectedInput);

    // mutually exclusive partition spellings
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "n": 4, "n_list": [4], "m": 1})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "times": [0, 0.5], "n": 4, "m": 1})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "n": 4, "m": 1, "m_list": [1]})"),
                    RejectedInput);

    // explicit times must anchor at 0, increase, and agree with t
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "times": [0.1, 0.5], "m": 1})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "times": [0, 0.5, 0.5], "m": 1})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "times": [0, 0.4], "t": 0.5, "m": 1})"),
                    RejectedInput);

    // ranges and enumerations
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "n": 4, "m": 9})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "n": 4, "m": 0})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "n": 4, "m": 1, "phi": "cube"})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "juggle", "model": {"name": "bounded_sensor"},
                                     "n": 4, "m": 1})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "filter", "model": {"name": "bounded_sensor"},
                                     "n": 4, "m": 1, "N": 1})"),
                    RejectedInput);
    CHECK_THROWS_AS(parse_config(kFilterConfig, "simulate"), RejectedInput); // kind mismatch
    CHECK_THROWS_AS(parse_config("[1, 2]"), RejectedInput);
    CHECK_THROWS_AS(load_config("/nonexistent/place/config.json"), RejectedInput);
}

TEST_CASE("the run identity ignores execution plumbing") {
    const ExperimentConfig a = parse_config(kFilterConfig);

    // same run spelled in a different key order
    ExperimentConfig b = parse_config(R"({
        "phi": "tanh", "seed": 11, "N": 200, "k_fine": 4,
        "m": 2, "n": 4, "t": 0.5,
        "model": {"name": "bounded_sensor"}, "experiment": "filter"
    })");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(canonical_config(a) == canonical_config(b));

    // threads and output directory are not part of the identity
    ExperimentConfig c = a;
    c.threads = 7;
    c.out = "/somewhere/else";
    CHECK(config_hash(c) == config_hash(a));
    CHECK(canonical_config(c).find("threads") == std::string::npos);
    CHECK(canonical_config(c).find("somewhere") == std::string::npos);

    // anything experiment-defining changes the hash
    ExperimentConfig d = a;
    d.N = 201;
    CHECK(config_hash(d) != config_hash(a));
    ExperimentConfig e = a;
    e.model.x0_mean = 0.1;
    CHECK(config_hash(e) != config_hash(a));
}

TEST_CASE("models and functionals are built from their config names") {
    ModelConfig mc;
    mc.name = "linear_gaussian";
    mc.a = -0.5;
    mc.x0_mean = 2.0;
    mc.x0_var = 0.0; // point mass
    const ModelSpec lg = make_model(mc);
    REQUIRE(lg.linear_gaussian_params.has_value());
    CHECK(lg.linear_gaussian_params->A(0, 0) == -0.5);
    CHECK(lg.initial_law.sample(1, 0)[0] == 2.0);
    CHECK(lg.initial_law.sample(99, 7)[0] == 2.0);

    mc.name = "bounded_sensor";
    mc.x0_var = 1.0;
    const ModelSpec bs = make_model(mc);
    CHECK_FALSE(bs.linear_gaussian_params.has_value());
    CHECK(bs.initial_law.sample(1, 0)[0] != bs.initial_law.sample(1, 1)[0]);

    CHECK(make_test_functional("one").name() == "one");
    CHECK(make_test_functional("x").name() == "coordinate[0]");
    CHECK(make_test_functional("tanh").name() == "tanh[0]");
    CHECK_THROWS_AS(make_test_functional("cube"), RejectedInput);
}

TEST_CASE("scenario generation is reproducible and seed-separated") {
    const ModelSpec model = make_model(ModelConfig{});
    const auto grid = FineGrid::build(Partition::uniform(2, 0.5), 4);

    const Scenario s1 = simulate_scenario(model, grid, 42, 0);
    const Scenario s2 = simulate_scenario(model, grid, 42, 0);
    CHECK(s1.scenario_seed == s2.scenario_seed);
    CHECK(s1.signal.X == s2.signal.X);
    CHECK(s1.observation.Y == s2.observation.Y);

    const Scenario s3 = simulate_scenario(model, grid, 42, 1);
    CHECK(s3.scenario_seed != s1.scenario_seed);
    CHECK(s3.signal.X != s1.signal.X);

    // the scenario must not replay any Monte Carlo sample of the same root
    const BrownianRecord mc0 = sample_brownian(grid, model.d_V, model.d_Y, 42, 0, true);
    CHECK(s1.observation.Y[1] != mc0.W_incr[0]);
}

TEST_CASE("filter runs replay byte for byte") {
    const fs::path dir_a = fresh_dir("filter_a");
    const fs::path dir_b = fresh_dir("filter_b");

    ExperimentConfig cfg = parse_config(kFilterConfig);
    cfg.out = dir_a.string();
    const FilterReport ra = run_filter(cfg);
    REQUIRE(!ra.summary_path.empty());

    cfg.out = dir_b.string();
    cfg.threads = 2; // parallelism must not leak into the artifacts
    const FilterReport rb = run_filter(cfg);

    CHECK(ra.estimate.pi_value == rb.estimate.pi_value);
    CHECK(ra.estimate.rho_value == rb.estimate.rho_value);
    CHECK(slurp(ra.summary_path) == slurp(rb.summary_path));

    // the summary records the canonical identity of the run
    const std::string summary = slurp(ra.summary_path);
    CHECK(summary.find("\"config_hash\"") != std::string::npos);
    CHECK(summary.find(config_hash(cfg)) != std::string::npos);
    CHECK(summary.find("\"root_seed\"") != std::string::npos);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("simulate runs emit round-trippable artifacts") {
    const fs::path dir_a = fresh_dir("sim_a");
    const fs::path dir_b = fresh_dir("sim_b");

    ExperimentConfig cfg = parse_config(R"({
        "experiment": "simulate", "model": {"name": "linear_gaussian"},
        "t": 0.5, "n": 2, "m": 1, "k_fine": 4, "seed": 31
    })");
    cfg.out = dir_a.string();
    const SimulateReport ra = run_simulate(cfg);

    const PathTable sig = read_path(ra.signal_csv);
    const PathTable obs = read_path(ra.observation_csv);
    REQUIRE(sig.times.size() == 9);
    REQUIRE(obs.times.size() == 9);
    for (std::size_t i = 0; i < sig.times.size(); ++i) {
        CHECK(sig.rows[i][0] == ra.scenario.signal.X[i]); // 17 digits round-trip exactly
        CHECK(obs.rows[i][0] == ra.scenario.observation.Y[i]);
    }

    cfg.out = dir_b.string();
    const SimulateReport rb = run_simulate(cfg);
    CHECK(slurp(ra.signal_csv) == slurp(rb.signal_csv));
    CHECK(slurp(ra.observation_csv) == slurp(rb.observation_csv));
    CHECK(slurp(ra.summary_path) == slurp(rb.summary_path));

    // no output directory: nothing is written, dispatch reports that
    cfg.out.clear();
    CHECK(run_experiment(cfg).empty());

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("a silent sensor drives the convergence study to exact zeros") {
    ExperimentConfig cfg = parse_config(R"({
        "experiment": "convergence", "model": {"name": "zero_sensor"},
        "t": 0.5, "n_list": [2, 4, 8], "m_list": [1], "k_fine": 2,
        "N": 50, "seed": 3, "replications": 3, "n_ref": 64
    })");
    const ConvergenceReport rep = run_convergence(cfg);

    REQUIRE(rep.rows.size() == 3);
    for (const auto& row : rep.rows) {
        // every column computes the same prior average on the shared fine path
        CHECK(row.rho_err_l2 == 0.0);
        CHECK(row.pi_err_l2 == 0.0);
    }
    REQUIRE(rep.slopes.size() == 1);
    CHECK(rep.slopes[0].noise_dominated); // zero error means nothing to fit
    CHECK(rep.reference_error == 0.0);
    CHECK(rep.reference_budget_pass);
    CHECK(rep.m_ref == 1); // the reference runs at the deepest order under study
    CHECK(rep.n_ref == 64);
}

TEST_CASE("convergence studies insist on a usable grid ladder") {
    const std::string base = R"({
        "experiment": "convergence", "model": {"name": "bounded_sensor"},
        "t": 0.5, "N": 50, "seed": 3, "replications": 2, "k_fine": 2,
    )";
    // fewer than three sizes
    CHECK_THROWS_AS(run_convergence(parse_config(base + R"("n_list": [4, 8], "m_list": [1],
                                                  "n_ref": 64})")),
                    RejectedInput);
    // not a dyadic ladder
    CHECK_THROWS_AS(run_convergence(parse_config(base + R"("n_list": [2, 6, 8], "m_list": [1],
                                                  "n_ref": 64})")),
                    RejectedInput);
    // reference too close to the finest study partition
    CHECK_THROWS_AS(run_convergence(parse_config(base + R"("n_list": [2, 4, 8], "m_list": [1],
                                                  "n_ref": 32})")),
                    RejectedInput);
    // explicit times are not a ladder at all
    CHECK_THROWS_AS(run_convergence(parse_config(R"({
        "experiment": "convergence", "model": {"name": "bounded_sensor"},
        "times": [0, 0.25, 0.5], "m_list": [1], "N": 50, "seed": 3,
        "replications": 2, "k_fine": 2, "n_ref": 64})")),
                    RejectedInput);
}

TEST_CASE("tiny robustness sweeps stay finite and exactly normalised") {
    ExperimentConfig cfg = parse_config(R"({
        "experiment": "robustness", "model": {"name": "bounded_sensor"},
        "t": 0.5, "n": 2, "m_list": [1, 2], "k_fine": 4,
        "N": 40, "seed": 17, "pairs": 6, "R": 4.0, "bump": 0.25
    })");
    const RobustnessReport rep = run_robustness(cfg);

    REQUIRE(rep.per_m.size() == 2);
    CHECK(rep.pairs == 6);
    for (const auto& pm : rep.per_m) {
        REQUIRE(pm.levels.size() == 3);
        for (const auto& lvl : pm.levels) {
            CHECK(lvl.all_finite);
            CHECK(lvl.f_one_exact); // the phi = 1 reduction hit 1.0 bitwise per path
            REQUIRE(lvl.pair_f_diff.size() == 6);
            for (double r : lvl.pair_ratio) CHECK(std::isfinite(r));
        }
        CHECK(pm.levels[1].N == 80);      // doubled samples
        CHECK(pm.levels[2].k_fine == 8);  // doubled fine resolution
    }

    // pure level shifts are invisible to the weights at any order: the
    // first family's pairs must sit at (numerical) zero difference
    for (const auto& pm : rep.per_m)
        for (const auto& lvl : pm.levels) {
            CHECK(lvl.pair_f_diff[0] <= 1e-12);
            CHECK(lvl.pair_f_diff[3] <= 1e-12);
            CHECK(lvl.pair_f_diff[1] > 0.0); // the hat bump does move the value
        }
}

TEST_CASE("zero-amplitude perturbations collapse the probe families") {
    ExperimentConfig cfg = parse_config(R"({
        "experiment": "robustness", "model": {"name": "bounded_sensor"},
        "t": 0.5, "n": 2, "m_list": [1], "k_fine": 4,
        "N": 30, "seed": 23, "pairs": 6, "R": 4.0, "bump": 0.0
    })");
    const RobustnessReport rep = run_robustness(cfg);
    REQUIRE(rep.per_m.size() == 1);
    const RobustnessLevel& base = rep.per_m[0].levels[0];

    // families 0 and 1 perturb by amplitude 0: identical paths, so the
    // difference is bitwise zero and the ratio takes its 0/0 convention
    for (std::size_t p : {std::size_t(0), std::size_t(1), std::size_t(3), std::size_t(4)}) {
        CHECK(base.pair_f_diff[p] == 0.0);
        CHECK(base.pair_ratio[p] == 0.0);
    }
    // the independent-resample family still measures a genuine distance
    CHECK(base.pair_f_diff[2] > 0.0);
    CHECK(base.pair_f_diff[5] > 0.0);
}

TEST_CASE("first-order dual weights agree exactly across every level") {
    ExperimentConfig cfg = parse_config(R"({
        "experiment": "ibp-check", "model": {"name": "bounded_sensor"},
        "t": 0.5, "n": 2, "m_list": [1, 2], "N": 64, "seed": 29,
        "levels": [8, 16]
    })");
    const IbpReport rep = run_ibp_check(cfg);

    REQUIRE(rep.rows.size() == 4);
    REQUIRE(rep.per_m.size() == 2);

    CHECK(rep.per_m[0].m == 1);
    CHECK(rep.per_m[0].exact_zero);
    for (const auto& row : rep.rows)
        if (row.m == 1) {
            CHECK(row.max_abs_diff == 0.0);
            CHECK(row.rms_diff == 0.0);
            CHECK(row.rho_xi == row.rho_robust);
            CHECK(row.ensemble_rel_diff == 0.0);
        }

    CHECK(rep.per_m[1].m == 2);
    CHECK_FALSE(rep.per_m[1].exact_zero);
    for (const auto& row : rep.rows)
        if (row.m == 2) {
            CHECK(row.rms_diff > 0.0);
            CHECK(std::isfinite(row.ensemble_rel_diff));
        }
    CHECK(rep.per_m[1].rel_diff_finest >= 0.0);

    // level lists must be a refinement chain of at least two resolutions
    ExperimentConfig one_level = cfg;
    one_level.levels = {16};
    CHECK_THROWS_AS(run_ibp_check(one_level), RejectedInput);
    ExperimentConfig ragged = cfg;
    ragged.levels = {6, 16};
    CHECK_THROWS_AS(run_ibp_check(ragged), RejectedInput);
}

TEST_CASE("experiment dispatch owns the kind-to-runner mapping") {
    ExperimentConfig cfg = parse_config(kFilterConfig);
    cfg.out.clear();
    CHECK(run_experiment(cfg).empty()); // filter with no output directory

    cfg.experiment = "unheard-of";
    CHECK_THROWS_AS(run_experiment(cfg), RejectedInput);
}
