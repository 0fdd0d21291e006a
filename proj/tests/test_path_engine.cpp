#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "gmlab/errors.hpp"
#include "gmlab/path_engine.hpp"
#include "gmlab/stats.hpp"

using namespace gmlab;

namespace {

const VolatilityBand kBand = VolatilityBand::make(0.5, 1.0);

std::vector<double> column(const Matrix& m, std::size_t j) {
    std::vector<double> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, j);
    return out;
}

}  // namespace

TEST_CASE("zero volatility gives flat paths") {
    const auto band = VolatilityBand::make(0.0, 1.0);
    const auto b = simulate_paths(ControlStrategy::constant(band, 0.0), make_uniform_grid(1.0, 64), 20, 1);
    for (double v : b.m_values.data()) CHECK(v == 0.0);
    for (double v : b.qv_exact.data()) CHECK(v == 0.0);
    for (double v : quadratic_variation_partition(b).data()) CHECK(v == 0.0);
}

TEST_CASE("constant 0.8 on T = 2 accumulates qv 1.28") {
    const auto band = VolatilityBand::make(0.5, 1.0);
    for (std::size_t n : {1u, 7u, 256u}) {
        const auto b = simulate_paths(ControlStrategy::constant(band, 0.8), make_uniform_grid(2.0, n), 10, 3);
        for (std::size_t i = 0; i < b.n_paths; ++i) CHECK(b.qv_exact(i, n) == doctest::Approx(1.28).epsilon(1e-14));
    }
}

TEST_CASE("single-step terminal mean is centred") {
    const auto band = VolatilityBand::make(0.5, 1.0);
    const auto b = simulate_paths(ControlStrategy::constant(band, 1.0), make_uniform_grid(1.0, 1), 1'000'000, 42);
    const auto st = sample_stats(column(b.m_values, 1));
    CHECK(std::fabs(st.mean) <= 3.0 * st.std_dev / 1000.0);
    CHECK(st.std_dev == doctest::Approx(1.0).epsilon(0.005));
}

TEST_CASE("bundle invariants hold for every strategy kind") {
    const auto grid = make_uniform_grid(1.0, 96);
    std::vector<ControlStrategy> strategies{
        ControlStrategy::constant(kBand, 0.7),
        ControlStrategy::bang_bang(kBand, 0.0, true),
        ControlStrategy("sched", ScheduleVol{{{0.0, 0.5}, {0.3, 1.0}, {0.6, 0.8}}}, kBand),
        ControlStrategy("rule", FeedbackRule{[](double t, double m) { return 0.5 + 0.5 * std::fabs(std::sin(3 * t + m)); }}, kBand),
        ControlStrategy("switch", RandomSwitching{4.0, 1, 0.5, 1.0}, kBand),
    };
    for (const auto& s : strategies) {
        const auto b = simulate_paths(s, grid, 30, 11);
        for (std::size_t i = 0; i < b.n_paths; ++i) {
            CHECK(b.m_values(i, 0) == 0.0);
            CHECK(b.qv_exact(i, 0) == 0.0);
            for (std::size_t j = 0; j < grid.steps(); ++j) {
                CHECK(b.m_values(i, j + 1) - b.m_values(i, j) == b.increments(i, j));
                CHECK(b.qv_exact(i, j + 1) >= b.qv_exact(i, j));
                CHECK(kBand.contains(b.sigma_used(i, j)));
            }
            CHECK(b.qv_exact(i, grid.steps()) <= kBand.max_variance() * 1.0 * (1 + 1e-12));
            CHECK(b.qv_exact(i, grid.steps()) >= kBand.min_variance() * 1.0 * (1 - 1e-12));
        }
    }
}

TEST_CASE("random switching actually switches") {
    const ControlStrategy s("switch", RandomSwitching{8.0, 0, 0.5, 1.0}, kBand);
    const auto b = simulate_paths(s, make_uniform_grid(1.0, 256), 50, 5);
    std::size_t changes = 0;
    for (std::size_t i = 0; i < b.n_paths; ++i)
        for (std::size_t j = 1; j < 256; ++j) changes += b.sigma_used(i, j) != b.sigma_used(i, j - 1);
    // Expected about 8 switches per path.
    CHECK(changes > 200);
    CHECK(changes < 600);
}

TEST_CASE("telescoping identity for the partition sum") {
    const auto b = simulate_paths(ControlStrategy::bang_bang(kBand, 0.0, false), make_uniform_grid(1.0, 512), 40, 9);
    const auto qv = quadratic_variation_partition(b);
    for (std::size_t i = 0; i < b.n_paths; ++i) {
        double cross = 0.0;
        double max_m = 0.0;
        for (std::size_t k = 0; k <= b.steps(); ++k) {
            const double mk = b.m_values(i, k);
            max_m = std::max(max_m, mk * mk);
            CHECK(std::fabs(qv(i, k) - (mk * mk - 2.0 * cross)) < 1e-10 * (1.0 + max_m));
            if (k < b.steps()) cross += b.m_values(i, k) * b.increments(i, k);
        }
        CHECK(partition_qv_at_end(b, i) == doctest::Approx(qv(i, b.steps())).epsilon(1e-13));
    }
}

TEST_CASE("partition qv approaches the exact compensator as N doubles") {
    const auto s = ControlStrategy::constant(kBand, 1.0);
    double prev = INFINITY;
    for (std::size_t n : {64u, 256u, 1024u}) {
        const auto b = simulate_paths(s, make_uniform_grid(1.0, n), 2000, 42);
        std::vector<double> err(b.n_paths);
        for (std::size_t i = 0; i < b.n_paths; ++i) err[i] = std::fabs(partition_qv_at_end(b, i) - b.qv_exact(i, n));
        const double mean = pairwise_sum(err) / static_cast<double>(err.size());
        CHECK(mean < prev);
        prev = mean;
    }
}

TEST_CASE("increment second moment respects the growth bound") {
    const std::size_t n_paths = 4000;
    const auto grid = make_uniform_grid(1.0, 32);
    const auto family = default_strategy_family(kBand, 5);
    for (const auto& s : family.strategies()) {
        const auto b = simulate_paths(s, grid, n_paths, 42);
        for (std::size_t j = 0; j < grid.steps(); ++j) {
            std::vector<double> sq(n_paths);
            for (std::size_t i = 0; i < n_paths; ++i) sq[i] = b.increments(i, j) * b.increments(i, j);
            const double mean = pairwise_sum(sq) / n_paths;
            CHECK(mean <= kBand.max_variance() * grid.dt(j) * (1.0 + 4.0 / std::sqrt(double(n_paths))));
        }
        const auto st = sample_stats(column(b.m_values, grid.steps()));
        CHECK(std::fabs(st.mean) <= 4.0 * st.std_error);
    }
}

TEST_CASE("determinism across workers, blocks and path counts") {
    const auto s = ControlStrategy::bang_bang(kBand, 0.0, true);
    const auto grid = make_uniform_grid(1.0, 200);
    const auto a = simulate_paths(s, grid, 37, 77, {.block_paths = 8, .workers = 1});
    const auto b = simulate_paths(s, grid, 37, 77, {.block_paths = 3, .workers = 4});
    CHECK(a.m_values == b.m_values);
    CHECK(a.sigma_used == b.sigma_used);
    CHECK(a.qv_exact == b.qv_exact);

    const auto small = simulate_paths(s, grid, 5, 77);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j <= 200; ++j) CHECK(small.m_values(i, j) == a.m_values(i, j));

    const auto other_seed = simulate_paths(s, grid, 5, 78);
    CHECK(other_seed.m_values(0, 200) != a.m_values(0, 200));
}

TEST_CASE("streamed blocks reproduce the materialized bundle") {
    const auto s = ControlStrategy::constant(kBand, 0.9);
    const auto grid = make_uniform_grid(1.0, 64);
    const auto whole = simulate_paths(s, grid, 50, 4);
    std::vector<double> terminal(50, NAN);
    for_each_block(s, grid, 50, 4, {.block_paths = 7, .workers = 3}, [&](const PathBundle& blk) {
        for (std::size_t r = 0; r < blk.n_paths; ++r) terminal[blk.path_id(r)] = blk.m_values(r, 64);
    });
    for (std::size_t i = 0; i < 50; ++i) CHECK(terminal[i] == whole.m_values(i, 64));
}

TEST_CASE("refinement shares the Brownian driver at coarse nodes") {
    const auto s = ControlStrategy::constant(kBand, 1.0);
    for (std::size_t n : {1u, 3u, 12u, 1024u}) {
        const auto coarse = simulate_paths(s, make_uniform_grid(1.0, n), 6, 21);
        const auto fine = simulate_paths(s, make_uniform_grid(1.0, 2 * n), 6, 21);
        // Constant sigma: path values are sigma * W rounded to the lattice at each step, so
        // shared nodes agree up to accumulated lattice rounding.
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j <= n; ++j)
                CHECK(std::fabs(coarse.m_values(i, j) - fine.m_values(i, 2 * j)) <= 4.0 * n * kPathQuantum);
    }
}

TEST_CASE("non-uniform grids simulate with sequential increments") {
    const auto grid = TimeGrid::from_nodes({0.0, 0.1, 0.15, 0.6, 1.0});
    const auto b = simulate_paths(ControlStrategy::constant(kBand, 1.0), grid, 20000, 8);
    for (std::size_t j = 0; j < 4; ++j) {
        std::vector<double> sq(b.n_paths);
        for (std::size_t i = 0; i < b.n_paths; ++i) sq[i] = b.increments(i, j) * b.increments(i, j);
        const auto st = sample_stats(sq);
        CHECK(std::fabs(st.mean - grid.dt(j)) < 4.0 * st.std_error);
    }
}

TEST_CASE("capacity guard and strict band violations") {
    const auto grid = make_uniform_grid(1.0, 1024);
    CHECK_THROWS_AS(simulate_paths(ControlStrategy::constant(kBand, 1.0), grid, 1000, 1, {.max_bundle_bytes = 1 << 20}),
                    CapacityError);
    CHECK_THROWS_AS(simulate_paths(ControlStrategy::constant(kBand, 1.0), grid, 0, 1), InvalidArgument);
    const ControlStrategy bad("bad", FeedbackRule{[](double, double m) { return m > 0.3 ? 2.0 : 0.7; }}, kBand);
    CHECK_THROWS_AS(simulate_paths(bad, grid, 200, 1, {.workers = 2}), DomainError);
}

TEST_CASE("csv dump") {
    const auto b = simulate_paths(ControlStrategy::constant(kBand, 0.5), make_uniform_grid(1.0, 4), 2, 1);
    const std::string path = "test_path_engine_dump.csv";
    write_paths_csv(b, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "path_id,step,t,M,qv_exact,sigma");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 10);
    std::remove(path.c_str());
    CHECK_THROWS_AS(write_paths_csv(b, path, 9), CapacityError);
}
