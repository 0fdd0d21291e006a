#include <cmath>
#include <set>

#include "doctest.h"
#include "gmlab/errors.hpp"
#include "gmlab/model.hpp"

using namespace gmlab;

TEST_CASE("band validation and derived constants") {
    const auto band = VolatilityBand::make(0.5, 1.0);
    CHECK(band.min_variance() == 0.25);
    CHECK(band.max_variance() == 1.0);
    CHECK(band.g(2.0) == 1.0);
    CHECK(band.g(-2.0) == -0.25);
    CHECK_THROWS_AS(VolatilityBand::make(1.0, 0.5), InvalidArgument);
    CHECK_THROWS_AS(VolatilityBand::make(-0.1, 0.5), InvalidArgument);
    CHECK_THROWS_AS(VolatilityBand::make(0.0, 0.0), InvalidArgument);
    CHECK_NOTHROW(VolatilityBand::make(0.0, 0.3));
}

TEST_CASE("uniform grids") {
    const auto g = make_uniform_grid(1.0, 4);
    const std::vector<double> want{0, 0.25, 0.5, 0.75, 1.0};
    REQUIRE(g.nodes().size() == 5);
    for (std::size_t j = 0; j < 5; ++j) CHECK(g.node(j) == want[j]);

    const auto two = make_uniform_grid(2.0, 1);
    CHECK(two.steps() == 1);
    CHECK(two.node(1) == 2.0);

    CHECK(make_uniform_grid(1.0, 4096).mesh() == 1.0 / 4096);
    CHECK_THROWS_AS(make_uniform_grid(0.0, 4), InvalidArgument);
    CHECK_THROWS_AS(make_uniform_grid(-1.0, 4), InvalidArgument);
    CHECK_THROWS_AS(make_uniform_grid(1.0, 0), InvalidArgument);
}

TEST_CASE("refined grid nodes contain the coarse nodes bitwise") {
    for (double T : {1.0, 0.7, 3.0}) {
        for (std::size_t n : {1u, 3u, 10u, 1024u}) {
            const auto coarse = make_uniform_grid(T, n);
            const auto fine = make_uniform_grid(T, 2 * n);
            for (std::size_t j = 0; j <= n; ++j) CHECK(coarse.node(j) == fine.node(2 * j));
        }
    }
}

TEST_CASE("non-uniform grids") {
    const auto g = TimeGrid::from_nodes({0.0, 0.1, 0.5, 1.0});
    CHECK(!g.uniform());
    CHECK(g.mesh() == doctest::Approx(0.5));
    CHECK_THROWS_AS(TimeGrid::from_nodes({0.0, 0.5, 0.5}), InvalidArgument);
    CHECK_THROWS_AS(TimeGrid::from_nodes({0.1, 0.5}), InvalidArgument);
}

TEST_CASE("default family with k = 2") {
    const auto fam = default_strategy_family(VolatilityBand::make(0.5, 1.0), 2);
    REQUIRE(fam.size() == 4);
    CHECK(fam.find(constant_label(0.5)) != nullptr);
    CHECK(fam.find(constant_label(1.0)) != nullptr);
    const auto* up = fam.find("bangbang_up");
    const auto* down = fam.find("bangbang_down");
    REQUIRE(up != nullptr);
    REQUIRE(down != nullptr);
    CHECK(up->sigma_at(0.0, 0.0) == 1.0);
    CHECK(up->sigma_at(0.0, -0.1) == 0.5);
    CHECK(down->sigma_at(0.0, 0.0) == 0.5);
    CHECK(down->sigma_at(0.0, -0.1) == 1.0);
}

TEST_CASE("degenerate band collapses the family") {
    const auto fam = default_strategy_family(VolatilityBand::make(1.0, 1.0), 3);
    CHECK(fam.size() == 1);
    CHECK(fam[0].constant_sigma() == 1.0);
}

TEST_CASE("k = 3 constants are equally spaced") {
    const auto fam = default_strategy_family(VolatilityBand::make(0.5, 1.0), 3);
    for (double s : {0.5, 0.75, 1.0}) CHECK(fam.find(constant_label(s)) != nullptr);
    CHECK_THROWS_AS(default_strategy_family(VolatilityBand::make(0.5, 1.0), 1), InvalidArgument);
}

TEST_CASE("default family k = 5 has seven strategies with unique labels") {
    const auto fam = default_strategy_family(VolatilityBand::make(0.5, 1.0), 5);
    CHECK(fam.size() == 7);
    std::set<std::string> labels;
    for (const auto& s : fam.strategies()) labels.insert(s.label());
    CHECK(labels.size() == 7);
}

TEST_CASE("band policy") {
    const auto band = VolatilityBand::make(0.5, 1.0);
    CHECK_THROWS_AS(ControlStrategy::constant(band, 1.2), DomainError);
    CHECK(ControlStrategy::constant(band, 1.2, BandMode::clamp).constant_sigma() == 1.0);
    CHECK(ControlStrategy::constant(band, 0.1, BandMode::clamp).constant_sigma() == 0.5);

    const ControlStrategy rule("wild", FeedbackRule{[](double, double m) { return 2.0 + m; }}, band);
    CHECK_THROWS_AS(rule.sigma_at(0.0, 0.0), DomainError);
    const ControlStrategy clamped("wild", FeedbackRule{[](double, double m) { return 2.0 + m; }},
                                  band, BandMode::clamp);
    CHECK(clamped.sigma_at(0.0, 0.0) == 1.0);

    CHECK_THROWS_AS(ControlStrategy("sched", ScheduleVol{{{0.0, 0.5}, {0.5, 3.0}}}, band),
                    DomainError);
    CHECK_THROWS_AS(ControlStrategy("sw", RandomSwitching{1.0, 0, 0.5, 1.5}, band), DomainError);
}

TEST_CASE("schedule is right-continuous") {
    const auto band = VolatilityBand::make(0.5, 1.0);
    const ControlStrategy s("sched", ScheduleVol{{{0.25, 0.6}, {0.5, 0.9}}}, band);
    CHECK(s.sigma_at(0.0, 0.0) == 0.6);
    CHECK(s.sigma_at(0.49, 0.0) == 0.6);
    CHECK(s.sigma_at(0.5, 0.0) == 0.9);
    CHECK(s.sigma_at(1.0, 0.0) == 0.9);
}

TEST_CASE("property: every emitted sigma stays in the band") {
    std::uint64_t state = 12345;
    auto next = [&] {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        return static_cast<double>(state >> 11) * 0x1p-53;
    };
    for (int trial = 0; trial < 50; ++trial) {
        const double lo = next();
        const double hi = lo + 0.01 + next();
        const auto band = VolatilityBand::make(lo, hi);
        const auto fam = default_strategy_family(band, 2 + trial % 7, next() - 0.5);
        for (const auto& s : fam.strategies()) {
            for (int q = 0; q < 40; ++q) {
                const double sig = s.sigma_at(next(), 4.0 * next() - 2.0);
                CHECK(band.contains(sig));
            }
        }
    }
}

TEST_CASE("duplicate labels are rejected") {
    const auto band = VolatilityBand::make(0.5, 1.0);
    CHECK_THROWS_AS(StrategyFamily("f", {ControlStrategy::constant(band, 0.5),
                                         ControlStrategy::constant(band, 0.5)}),
                    InvalidArgument);
    CHECK_THROWS_AS(StrategyFamily("f", {}), InvalidArgument);
}
