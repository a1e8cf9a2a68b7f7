#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "hofilter/model.hpp"
#include "hofilter/path_csv.hpp"
#include "hofilter/paths.hpp"
#include "hofilter/rng.hpp"

using namespace hofilter;

namespace {

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

} // namespace

TEST_CASE("philox4x32 known-answer vector") {
    const auto w = detail::philox4x32({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(w[0] == 0x6627e8d5u);
    CHECK(w[1] == 0xe169c58du);
    CHECK(w[2] == 0xbc57ac4cu);
    CHECK(w[3] == 0x9b00dbd8u);
}

TEST_CASE("normal lane: fill equals per-index access and streams decorrelate") {
    NormalLane lane(77, stream_signal_noise, 5);
    double block[37];
    lane.fill(3, block, 37);
    for (std::size_t i = 0; i < 37; ++i) CHECK(block[i] == lane.at(3 + i));

    NormalLane other_stream(77, stream_obs_noise, 5);
    NormalLane other_sample(77, stream_signal_noise, 6);
    NormalLane other_seed(78, stream_signal_noise, 5);
    CHECK(lane.at(0) != other_stream.at(0));
    CHECK(lane.at(0) != other_sample.at(0));
    CHECK(lane.at(0) != other_seed.at(0));
}

TEST_CASE("normal lane moments") {
    NormalLane lane(2024, stream_signal_noise, 0);
    const std::size_t n = 200000;
    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = lane.at(i);
        s1 += z;
        s2 += z * z;
        s3 += z * z * z;
        s4 += z * z * z * z;
    }
    s1 /= double(n);
    s2 /= double(n);
    s3 /= double(n);
    s4 /= double(n);
    const double se = 1.0 / std::sqrt(double(n));
    CHECK(std::fabs(s1) < 4.0 * se);
    CHECK(std::fabs(s2 - 1.0) < 4.0 * std::sqrt(2.0) * se);
    CHECK(std::fabs(s3) < 4.0 * std::sqrt(15.0) * se);
    CHECK(std::fabs(s4 - 3.0) < 4.0 * std::sqrt(96.0) * se);
}

TEST_CASE("derive_seed is stable and separates streams") {
    const std::uint64_t a = derive_seed(1, stream_scenario, 0);
    CHECK(a == derive_seed(1, stream_scenario, 0));
    CHECK(a != derive_seed(1, stream_scenario, 1));
    CHECK(a != derive_seed(1, stream_probe_paths, 0));
    CHECK(a != derive_seed(2, stream_scenario, 0));
}

TEST_CASE("fine grid: construction, nesting and anchors") {
    const Partition tau = Partition::uniform(4, 0.5);
    const auto g4 = FineGrid::build(tau, 4);
    const auto g8 = FineGrid::build(tau, 8);

    REQUIRE(g4->steps() == 16);
    REQUIRE(g8->steps() == 32);
    CHECK(g4->times.front() == 0.0);
    CHECK(g4->times.back() == 0.5);
    CHECK(g8->times.back() == 0.5);
    CHECK(g4->fine_begin(1) == 4);
    CHECK(g4->fine_end(1) == 8);

    // dyadic refinement nests bitwise: every second g8 time is a g4 time
    for (std::size_t q = 0; q <= g4->steps(); ++q) CHECK(g8->times[2 * q] == g4->times[q]);

    // partition anchor times are hit exactly
    for (int j = 0; j <= tau.n_intervals(); ++j)
        CHECK(g4->times[g4->fine_begin(j)] == tau.times[std::size_t(j)]);
}

TEST_CASE("partition constructors validate") {
    CHECK_THROWS_AS(Partition::uniform(0, 1.0), RejectedInput);
    CHECK_THROWS_AS(Partition::uniform(4, -1.0), RejectedInput);
    CHECK_THROWS_AS(Partition::from_times({0.0, 0.2, 0.2, 0.5}), RejectedInput);
    CHECK_THROWS_AS(Partition::from_times({0.1, 0.2}), RejectedInput);
    const Partition tau = Partition::from_times({0.0, 0.1, 0.4, 0.5});
    CHECK(tau.n_intervals() == 3);
    CHECK(tau.meshsize() == doctest::Approx(0.3));
}

TEST_CASE("brownian records are pure functions of (seed, index)") {
    const auto grid = FineGrid::build(Partition::uniform(4, 0.5), 8);
    const BrownianRecord a = sample_brownian(grid, 2, 1, 99, 3);
    const BrownianRecord b = sample_brownian(grid, 2, 1, 99, 3);
    REQUIRE(a.V_incr.size() == grid->steps() * 2);
    REQUIRE(a.W_incr.size() == grid->steps() * 1);
    CHECK(a.V_incr == b.V_incr);
    CHECK(a.W_incr == b.W_incr);

    // skipping the observation channels leaves V bitwise unchanged
    const BrownianRecord c = sample_brownian(grid, 2, 1, 99, 3, false);
    CHECK(c.V_incr == a.V_incr);
    CHECK(c.W_incr.empty());

    const BrownianRecord d = sample_brownian(grid, 2, 1, 99, 4);
    CHECK(a.V_incr != d.V_incr);
}

TEST_CASE("brownian increments carry the fine-step variance") {
    const auto grid = FineGrid::build(Partition::uniform(8, 0.5), 16);
    const double dt = 0.5 / 128.0;
    double s2 = 0.0;
    std::size_t count = 0;
    for (std::uint64_t i = 0; i < 400; ++i) {
        const BrownianRecord rec = sample_brownian(grid, 1, 1, 7, i, false);
        for (double v : rec.V_incr) s2 += v * v;
        count += rec.V_incr.size();
    }
    const double ratio = s2 / double(count) / dt;
    CHECK(std::fabs(ratio - 1.0) < 4.0 * std::sqrt(2.0 / double(count)));
}

TEST_CASE("aggregation sums consecutive increments exactly") {
    const auto grid = FineGrid::build(Partition::uniform(4, 0.5), 8);
    const BrownianRecord rec = sample_brownian(grid, 1, 1, 5, 0);
    const BrownianRecord coarse = aggregate_record(rec, 4);
    REQUIRE(coarse.grid->steps() == 8);
    CHECK(coarse.grid->refine_factor == 2);
    for (std::size_t s = 0; s < 8; ++s) {
        double sum = 0.0;
        for (std::size_t q = 0; q < 4; ++q) sum += rec.V_incr[4 * s + q];
        CHECK(coarse.V_incr[s] == sum);
    }
    CHECK_THROWS_AS(aggregate_record(rec, 3), RejectedInput);
}

TEST_CASE("euler simulation matches a hand-rolled loop") {
    InitialLaw law = InitialLaw::point_mass(Vec{0.3});
    const ModelSpec model = make_linear_gaussian_scalar(-1.0, 1.0, 1.0, law);
    const auto grid = FineGrid::build(Partition::uniform(4, 0.5), 8);
    const BrownianRecord rec = sample_brownian(grid, 1, 1, 21, 0);
    const SignalRecord sig = simulate_signal(model, rec, Vec{0.3});

    double x = 0.3;
    for (std::size_t s = 0; s < grid->steps(); ++s) {
        CHECK(sig.X[s] == x);
        const double dt = grid->times[s + 1] - grid->times[s];
        x += -1.0 * x * dt + 1.0 * rec.V_incr[s];
    }
    CHECK(sig.X[grid->steps()] == x);

    const ObservationRecord obs = simulate_observation(model, sig, rec);
    double y = 0.0;
    for (std::size_t s = 0; s < grid->steps(); ++s) {
        CHECK(obs.Y[s] == y);
        const double dt = grid->times[s + 1] - grid->times[s];
        y = y + sig.X[s] * dt + rec.W_incr[s]; // left-point rate, then noise
    }
    CHECK(obs.Y[grid->steps()] == y);
}

TEST_CASE("csv round trip is bitwise") {
    const auto grid = FineGrid::build(Partition::uniform(4, 0.5), 8);
    InitialLaw law = InitialLaw::gaussian_law(Vec{0.0}, Mat::identity(1));
    const ModelSpec model = make_bounded_sensor(law);
    const BrownianRecord rec = sample_brownian(grid, 1, 1, 13, 0);
    const SignalRecord sig = simulate_signal(model, rec, law.sample(13, 0));
    const ObservationRecord obs = simulate_observation(model, sig, rec);

    const std::string path = temp_file("hofilter_obs_roundtrip.csv");
    write_path(obs, path);
    const PathTable table = read_path(path);
    REQUIRE(table.columns.size() == 2);
    CHECK(table.columns[0] == "time");
    CHECK(table.columns[1] == "y1");
    REQUIRE(table.times.size() == grid->times.size());
    for (std::size_t s = 0; s < table.times.size(); ++s) {
        CHECK(table.times[s] == grid->times[s]);
        CHECK(table.rows[s][0] == obs.Y[s]);
    }

    const ObservationRecord back = observation_from_table(table, grid);
    CHECK(back.Y == obs.Y);
    std::filesystem::remove(path);
}

TEST_CASE("csv reader reports offending lines") {
    const std::string path = temp_file("hofilter_bad.csv");

    write_file(path, "");
    CHECK_THROWS_AS(read_path(path), ParseError);

    write_file(path, "x,y\n0,1\n");
    try {
        read_path(path);
        FAIL("header should be rejected");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 1);
    }

    write_file(path, "time,y1\n0,1\n0.5\n");
    try {
        read_path(path);
        FAIL("ragged row should be rejected");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 3);
    }

    write_file(path, "time,y1\n0,1\n0.5,zebra\n");
    try {
        read_path(path);
        FAIL("non-numeric field should be rejected");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 3);
    }

    write_file(path, "time,y1\n0,1\n0,2\n");
    try {
        read_path(path);
        FAIL("non-increasing times should be rejected");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 3);
    }
    std::filesystem::remove(path);
}
