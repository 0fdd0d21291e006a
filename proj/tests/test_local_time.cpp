#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "gmlab/errors.hpp"
#include "gmlab/local_time.hpp"

using namespace gmlab;

namespace {

const VolatilityBand kBand = VolatilityBand::make(0.5, 1.0);

PathBundle sample(const ControlStrategy& s, std::size_t n = 512, std::size_t paths = 200,
                  std::uint64_t seed = 42) {
    return simulate_paths(s, make_uniform_grid(1.0, n), paths, seed);
}

std::uint64_t lcg_state = 2024;
double uniform() {
    lcg_state = lcg_state * 6364136223846793005ull + 1442695040888963407ull;
    return static_cast<double>(lcg_state >> 11) * 0x1p-53;
}

PathBundle binary_walks(std::size_t steps) {
    PathBundle b;
    const std::size_t n_paths = std::size_t{1} << steps;
    b.grid = make_uniform_grid(static_cast<double>(steps), steps);
    b.n_paths = n_paths;
    b.m_values = Matrix(n_paths, steps + 1);
    b.increments = Matrix(n_paths, steps);
    b.qv_exact = Matrix(n_paths, steps + 1);
    b.sigma_used = Matrix(n_paths, steps, 1.0);
    for (std::size_t i = 0; i < n_paths; ++i) {
        for (std::size_t j = 0; j < steps; ++j) {
            const double d = (i >> j) & 1 ? 1.0 : -1.0;
            b.increments(i, j) = d;
            b.m_values(i, j + 1) = b.m_values(i, j) + d;
            b.qv_exact(i, j + 1) = b.qv_exact(i, j) + 1.0;
        }
    }
    return b;
}

}  // namespace

TEST_CASE("sign convention") {
    CHECK(sgn(3.2) == 1.0);
    CHECK(sgn(0.0) == -1.0);
    CHECK(sgn(-0.0) == -1.0);
    CHECK(sgn(-1.0) == -1.0);
}

TEST_CASE("level grids") {
    const auto g = default_level_grid(kBand, 1.0);
    CHECK(g.size() == 401);
    CHECK(g.spacing() == doctest::Approx(0.02));
    CHECK(g.level(200) == 0.0);
    CHECK(g.front() == doctest::Approx(-4.0));
    CHECK(g.back() == doctest::Approx(4.0));
    CHECK_THROWS_AS(LevelGrid::make(0.0, 0.0, 3), InvalidArgument);
    CHECK_THROWS_AS(LevelGrid::make(0.0, 0.1, 0), InvalidArgument);
}

TEST_CASE("property: level range queries match brute force") {
    const auto g = LevelGrid::make(-1.03, 0.07, 31);
    for (int trial = 0; trial < 5000; ++trial) {
        double lo = 3.0 * uniform() - 1.5, hi = lo + 0.5 * uniform();
        if (trial % 7 == 0) lo = g.level(trial % 31);
        if (trial % 11 == 0) hi = g.level((trial / 11) % 31);
        const auto [a, b] = g.half_open(lo, hi);
        const auto [c, d] = g.open(lo, hi);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double x = g.level(k);
            CHECK((x >= lo && x < hi) == (k >= a && k < b));
            CHECK((x > lo && x < hi) == (k >= c && k < d));
        }
    }
}

TEST_CASE("tanaka vanishes above the running maximum and for flat paths") {
    const auto b = sample(ControlStrategy::constant(kBand, 0.5));
    for (std::size_t i = 0; i < b.n_paths; ++i) {
        const auto m = b.m_values.row(i);
        const double top = *std::max_element(m.begin(), m.end());
        const double above = snap_level(top + 1e-9);
        CHECK(tanaka_definition_path(m, b.increments.row(i), above) == 0.0);
        CHECK(tanaka_crossing_path(m, above) == 0.0);
        CHECK(tanaka_crossing_path(m, top) == 0.0);
    }
    const auto zero_band = VolatilityBand::make(0.0, 1.0);
    const auto flat = sample(ControlStrategy::constant(zero_band, 0.0), 64, 5);
    const auto f = local_time_field(flat, LevelGrid::centered(1.0, 0.1), 0.1);
    for (double v : f.tanaka.data()) CHECK(v == 0.0);
    for (double v : f.occupation.data()) CHECK(v == 0.0);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(tanaka_definition_path(flat.m_values.row(i), flat.increments.row(i), 0.0) == 0.0);
}

TEST_CASE("property: crossing form equals the definition exactly on lattice levels") {
    const auto family = default_strategy_family(kBand, 3);
    for (const auto& s : family.strategies()) {
        const auto b = sample(s, 700, 40, 7);
        for (std::size_t i = 0; i < b.n_paths; ++i) {
            for (int q = 0; q < 10; ++q) {
                const double a = snap_level(q == 0 ? 0.0 : 2.0 * uniform() - 1.0);
                const double def = tanaka_definition_path(b.m_values.row(i), b.increments.row(i), a);
                const double cross = tanaka_crossing_path(b.m_values.row(i), a);
                CHECK(cross >= 0.0);
                CHECK(def == cross);
            }
        }
    }
}

TEST_CASE("three-step binary walks: mean local time at 0 equals E|M_3|") {
    const auto b = binary_walks(3);
    double mean = 0.0;
    for (std::size_t i = 0; i < b.n_paths; ++i) mean += tanaka_crossing_path(b.m_values.row(i), 0.0) / 8.0;
    // Enumerated: |M_3| is 3 with probability 1/4 and 1 with probability 3/4.
    CHECK(mean == 1.5);
    for (std::size_t i = 0; i < b.n_paths; ++i)
        CHECK(tanaka_crossing_path(b.m_values.row(i), 0.0) ==
              tanaka_definition_path(b.m_values.row(i), b.increments.row(i), 0.0));
}

TEST_CASE("field invariants") {
    const auto b = sample(ControlStrategy::bang_bang(kBand, 0.0, true), 512, 60);
    const auto levels = LevelGrid::centered(2.0, 0.05);
    for (bool symmetric : {false, true}) {
        const auto f = local_time_field(b, levels, 0.1, symmetric);
        REQUIRE(f.snapshots.size() == 17);
        for (std::size_t i = 0; i < f.n_paths; ++i) {
            for (std::size_t k = 0; k < levels.size(); ++k) {
                CHECK(f.tanaka_at(i, 0, k) == 0.0);
                CHECK(f.occupation_at(i, 0, k) == 0.0);
                for (std::size_t s = 1; s < f.snapshots.size(); ++s) {
                    CHECK(f.occupation_at(i, s, k) >= f.occupation_at(i, s - 1, k));
                    CHECK(f.tanaka_at(i, s, k) >= f.tanaka_at(i, s - 1, k));
                }
            }
            // Terminal tanaka field agrees with the per-level kernel.
            for (std::size_t k = 0; k < levels.size(); k += 9) {
                const double a = levels.level(k);
                CHECK(f.tanaka_at(i, 16, k) ==
                      doctest::Approx(tanaka_crossing_path(b.m_values.row(i), a)).epsilon(1e-12).scale(1.0));
                const auto w = qv_weights(b.sigma_used.row(i), b.grid);
                CHECK(f.occupation_at(i, 16, k) ==
                      doctest::Approx(occupation_path(b.m_values.row(i), w, a, 0.1, symmetric)).epsilon(1e-12).scale(1.0));
            }
        }
    }
    CHECK_THROWS_AS(local_time_occupation(b, levels, 0.0), InvalidArgument);
    CHECK_THROWS_AS(local_time_occupation(b, levels, -1.0), InvalidArgument);
}

TEST_CASE("a window wider than the path range returns qv over epsilon") {
    const auto b = sample(ControlStrategy::bang_bang(kBand, 0.0, false), 128, 20);
    const auto levels = LevelGrid::make(-50.0, 1.0, 1);
    const auto f = local_time_occupation(b, levels, 100.0, false, {0, 64, 128});
    for (std::size_t i = 0; i < b.n_paths; ++i) {
        CHECK(f.occupation_at(i, 1, 0) == b.qv_exact(i, 64) / 100.0);
        CHECK(f.occupation_at(i, 2, 0) == b.qv_exact(i, 128) / 100.0);
    }
}

TEST_CASE("expected local time is bounded by the expected absolute move") {
    const auto family = default_strategy_family(kBand, 3);
    double best_move = 0.0, best_move_se = 0.0;
    std::vector<PathBundle> bundles;
    for (const auto& s : family.strategies()) {
        bundles.push_back(sample(s, 1024, 3000));
        std::vector<double> mv(3000);
        for (std::size_t i = 0; i < 3000; ++i) mv[i] = std::fabs(bundles.back().m_values(i, 1024));
        const auto st = sample_stats(mv);
        if (st.mean > best_move) best_move = st.mean, best_move_se = st.std_error;
    }
    for (double a : {-1.0, -0.3, 0.0, 0.2, 0.7}) {
        double best = 0.0;
        for (const auto& b : bundles) {
            std::vector<double> lt(b.n_paths);
            for (std::size_t i = 0; i < b.n_paths; ++i) lt[i] = tanaka_crossing_path(b.m_values.row(i), a);
            best = std::max(best, sample_stats(lt).mean);
        }
        CHECK(best <= best_move + 3.0 * best_move_se);
    }
}

TEST_CASE("cross-estimator discrepancy shrinks with the window") {
    const auto b = sample(ControlStrategy::constant(kBand, 1.0), 4096, 1000, 3);
    double prev = INFINITY;
    for (double eps : {0.2, 0.1, 0.05}) {
        std::vector<double> d(b.n_paths);
        for (std::size_t i = 0; i < b.n_paths; ++i) {
            const auto w = qv_weights(b.sigma_used.row(i), b.grid);
            d[i] = std::fabs(occupation_path(b.m_values.row(i), w, 0.0, eps, false) -
                             tanaka_crossing_path(b.m_values.row(i), 0.0));
        }
        const double mean = sample_stats(d).mean;
        CHECK(mean < prev);
        prev = mean;
    }
}

TEST_CASE("occupation formula") {
    const auto b = sample(ControlStrategy::constant(kBand, 0.8), 4096, 300, 5);
    const auto levels = LevelGrid::centered(5.0, 0.02);
    const auto one = occupation_formula_check(b, [](double) { return 1.0; }, levels);
    CHECK(one.mean_relative_error < 0.05);
    for (std::size_t i = 0; i < b.n_paths; ++i) CHECK(one.lhs[i] == doctest::Approx(b.qv_exact(i, 4096)));

    const auto zero = occupation_formula_check(b, [](double) { return 0.0; }, levels);
    for (std::size_t i = 0; i < b.n_paths; ++i) {
        CHECK(zero.lhs[i] == 0.0);
        CHECK(zero.rhs[i] == 0.0);
        CHECK(zero.relative_error[i] == 0.0);
    }

    const auto half = occupation_formula_check(b, [](double x) { return x >= 0.0 ? 1.0 : 0.0; }, levels);
    const auto lhs = sample_stats(half.lhs), rhs = sample_stats(half.rhs);
    CHECK(std::fabs(lhs.mean - 0.32) < 4.0 * lhs.std_error);
    CHECK(std::fabs(rhs.mean - lhs.mean) < 0.02);

    CHECK_THROWS_AS(occupation_formula_check(b, [](double) { return 1.0; }, LevelGrid::centered(0.2, 0.02)),
                    CoverageError);
}

TEST_CASE("growth set") {
    const auto b = sample(ControlStrategy::bang_bang(kBand, 0.0, true), 4096, 100, 8);
    const auto levels = LevelGrid::centered(5.0, 0.02);
    const auto occ = growth_set_check(b, levels, LocalTimeEstimator::occupation, 0.02, 1.0);
    for (double v : occ.violation) CHECK(v == 0.0);
    CHECK(occ.violation_fraction == 0.0);
    const auto occ_sym = growth_set_check(b, levels, LocalTimeEstimator::occupation, 0.02, 1.0, true);
    CHECK(occ_sym.violation_fraction == 0.0);

    const auto tan = growth_set_check(b, levels, LocalTimeEstimator::tanaka, 0.02, 1.0);
    CHECK(tan.violation_fraction <= 0.05);
    for (std::size_t i = 0; i < b.n_paths; ++i) {
        // Total tanaka mass over levels is the level sum of terminal values.
        double mass = 0.0;
        for (double a : levels.levels()) mass += tanaka_crossing_path(b.m_values.row(i), a);
        CHECK(tan.mass[i] == doctest::Approx(mass).epsilon(1e-12));
    }

    const auto zero_band = VolatilityBand::make(0.0, 1.0);
    const auto flat = sample(ControlStrategy::constant(zero_band, 0.0), 64, 5);
    CHECK(growth_set_check(flat, levels, LocalTimeEstimator::tanaka, 0.02, 1.0).violation_fraction == 0.0);
}

TEST_CASE("level regularity") {
    const auto b = sample(ControlStrategy::constant(kBand, 1.0), 2048, 300);
    for (std::size_t i = 0; i < 20; ++i) CHECK(level_increment_sup_path(b.m_values.row(i), 0.1, 0.1) == 0.0);

    const std::vector<const PathBundle*> one{&b};
    const auto fit = level_regularity_check(one, 2, 0.4);
    CHECK(fit.gaps.size() == 4);
    CHECK(fit.gaps[3] == 0.05);
    CHECK(fit.slope > 1.0);
    CHECK(fit.bound[0] == doctest::Approx(fit.moments[0]));

    const auto zero_band = VolatilityBand::make(0.0, 1.0);
    const auto flat = sample(ControlStrategy::constant(zero_band, 0.0), 64, 5);
    const std::vector<const PathBundle*> flat_one{&flat};
    CHECK_THROWS_AS(level_regularity_check(flat_one, 2, 0.4), DiagnosticError);
    CHECK_THROWS_AS(level_regularity_check(one, 1, 0.4), InvalidArgument);
    CHECK_THROWS_AS(level_regularity_check(one, 2, 0.4, 3), InvalidArgument);

    const auto exact = fit_regularity(2, {0.4, 0.2, 0.1, 0.05}, {0.16, 0.04, 0.01, 0.0025}, {0, 0, 0, 0});
    CHECK(exact.slope == doctest::Approx(2.0));
    CHECK(exact.inequality_holds);
}

TEST_CASE("field export and summary") {
    const auto b = sample(ControlStrategy::constant(kBand, 1.0), 64, 30);
    const auto f = local_time_field(b, LevelGrid::centered(1.0, 0.25), 0.25, false, {0, 32, 64});
    const std::string path = "test_local_time_field.csv";
    write_field_csv(f, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "level,time,mean_tanaka,mean_occupation,se");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3 * 9);
    std::remove(path.c_str());
    const auto s = summarize(f);
    CHECK(s.min_tanaka >= 0.0);
    CHECK(s.max_mean_tanaka > 0.0);
    CHECK(s.discrepancy_sup >= s.discrepancy_l1);
}
