#include <cmath>

#include "doctest.h"
#include "gmlab/errors.hpp"
#include "gmlab/expectation.hpp"

using namespace gmlab;

namespace {

const VolatilityBand kBand = VolatilityBand::make(0.5, 1.0);
const double kSqrt2OverPi = std::sqrt(2.0 / M_PI);

double pde(const std::string& name, double dx) {
    return solve_g_heat(payoff_by_name(name).f, kBand, 1.0, {6.0, dx}, stable_time_steps(kBand, 1.0, dx)).value;
}

}  // namespace

TEST_CASE("payoff registry") {
    CHECK(payoff_by_name("square").f(-3.0) == 9.0);
    CHECK(payoff_by_name("neg_square").f(2.0) == -4.0);
    CHECK(payoff_by_name("abs").f(-0.5) == 0.5);
    CHECK(payoff_by_name("linear").f(0.7) == 0.7);
    const auto call = payoff_by_name("call(0.2)");
    CHECK(call.f(0.1) == 0.0);
    CHECK(call.f(1.2) == doctest::Approx(1.0));
    const auto ind = payoff_by_name("indicator(-1, 0.5)");
    CHECK(ind.f(0.0) == 1.0);
    CHECK(ind.f(0.6) == 0.0);
    CHECK_THROWS_AS(payoff_by_name("cube"), InvalidArgument);
    CHECK_THROWS_AS(payoff_by_name("indicator(1,0)"), InvalidArgument);
    CHECK_THROWS_AS(payoff_by_name("call(.)"), InvalidArgument);
}

TEST_CASE("closed-form upper and lower expectations") {
    const auto family = default_strategy_family(kBand, 5);
    const auto grid = make_uniform_grid(1.0, 128);
    std::vector<PathPayoff> payoffs;
    std::vector<std::string> names{"linear", "square", "abs"};
    for (const auto& n : names) payoffs.push_back(payoff_by_name(n).on_path());
    const auto est = upper_expectations(payoffs, names, family, grid, 20000, 42);
    REQUIRE(est.size() == 3);
    CHECK(std::fabs(est[0].upper) <= 4.0 * est[0].upper_se);
    CHECK(std::fabs(est[0].lower) <= 4.0 * est[0].lower_se);
    CHECK(est[1].upper == doctest::Approx(1.0).epsilon(4.0 * est[1].upper_se));
    CHECK(est[1].argmax_label == constant_label(1.0));
    CHECK(est[1].lower == doctest::Approx(0.25).epsilon(4.0 * est[1].lower_se / 0.25));
    CHECK(est[1].argmin_label == constant_label(0.5));
    CHECK(std::fabs(est[2].upper - kSqrt2OverPi) <= 4.0 * est[2].upper_se);
    for (const auto& e : est) {
        CHECK(e.upper >= e.lower);
        CHECK(e.per_strategy.size() == family.size());
        for (const auto& s : e.per_strategy) CHECK(s.stats.std_error > 0.0);
        CHECK(e.upper_is_family_lower_bound);
    }
}

TEST_CASE("non-finite payoffs are reported with the path") {
    const auto family = default_strategy_family(kBand, 2);
    const PathPayoff bad = [](std::span<const double> m) { return m.back() > 1.0 ? NAN : 0.0; };
    CHECK_THROWS_AS(upper_expectation(bad, family, make_uniform_grid(1.0, 8), 2000, 1), DomainError);
}

TEST_CASE("enlarging the family never lowers the upper value") {
    const auto grid = make_uniform_grid(1.0, 64);
    const auto call = payoff_by_name("call(0.2)").on_path();
    const auto small = StrategyFamily("small", {ControlStrategy::constant(kBand, 0.75)});
    const auto large = StrategyFamily("large", {ControlStrategy::constant(kBand, 0.75),
                                                ControlStrategy::bang_bang(kBand, 0.0, true)});
    CHECK(upper_expectation(call, large, grid, 3000, 9).upper >= upper_expectation(call, small, grid, 3000, 9).upper);
}

TEST_CASE("sublinearity") {
    const auto family = default_strategy_family(kBand, 3);
    const auto grid = make_uniform_grid(1.0, 64);
    const auto lin = payoff_by_name("linear").on_path();
    const PathPayoff neg = [](std::span<const double> m) { return -m.back(); };
    const auto r = sublinearity_check(lin, neg, family, grid, 4000, 42);
    CHECK(r.upper_sum == 0.0);
    CHECK(r.passed());

    const auto sq = payoff_by_name("square").on_path();
    const auto r2 = sublinearity_check(sq, sq, family, grid, 4000, 42, 2.0);
    CHECK(r2.upper_scaled == 2.0 * r2.upper_x);
    CHECK(r2.passed());

    const auto r0 = sublinearity_check(sq, lin, family, grid, 1000, 42, 0.0);
    CHECK(r0.upper_scaled == 0.0);
    CHECK(r0.passed());

    const auto r3 = sublinearity_check(sq, payoff_by_name("abs").on_path(), family, grid, 1000, 42, 0.3);
    CHECK(r3.homogeneous);
    CHECK(r3.subadditive);
}

TEST_CASE("G-heat solver closed forms") {
    CHECK(std::fabs(pde("linear", 0.04)) < 1e-12);
    CHECK(pde("square", 0.02) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(pde("neg_square", 0.02) == doctest::Approx(-0.25).epsilon(1e-3));
    CHECK(pde("abs", 0.02) == doctest::Approx(kSqrt2OverPi).epsilon(0.01));
    // Degenerate band: linear heat equation.
    const auto flat = VolatilityBand::make(0.7, 0.7);
    const double v = solve_g_heat([](double x) { return std::cos(x); }, flat, 1.0, {6.0, 0.02},
                                  stable_time_steps(flat, 1.0, 0.02)).value;
    CHECK(v == doctest::Approx(std::exp(-0.49 / 2.0)).epsilon(1e-4));
}

TEST_CASE("G-heat scheme converges on smooth terminals") {
    for (auto terminal : {std::function<double(double)>([](double x) { return std::cos(2 * x); }),
                          std::function<double(double)>([](double x) { return std::sin(x) + 0.1 * x * x * x * x; })}) {
        double prev_value = NAN, prev_change = INFINITY;
        for (double dx : {0.16, 0.08, 0.04, 0.02}) {
            const double v = solve_g_heat(terminal, kBand, 1.0, {6.0, dx}, stable_time_steps(kBand, 1.0, dx)).value;
            if (!std::isnan(prev_value)) {
                const double change = std::fabs(v - prev_value);
                CHECK(change < prev_change);
                prev_change = change;
            }
            prev_value = v;
        }
    }
}

TEST_CASE("G-heat argument checks") {
    const auto f = [](double x) { return x * x; };
    CHECK_THROWS_WITH_AS(solve_g_heat(f, kBand, 1.0, {6.0, 0.02}, 100), doctest::Contains("need dt <="),
                         InvalidArgument);
    CHECK_THROWS_AS(solve_g_heat(f, kBand, 1.0, {3.0, 0.02}, 10000), InvalidArgument);
    CHECK(stable_time_steps(kBand, 1.0, 0.02) == 5000);
}

TEST_CASE("Monte Carlo upper value stays below the PDE reference") {
    const auto family = default_strategy_family(kBand, 5);
    const auto sinus = payoff_by_name("sin");
    const auto mc = upper_expectation(sinus.on_path(), family, make_uniform_grid(1.0, 256), 20000, 42);
    const double ref = solve_g_heat(sinus.f, kBand, 1.0, {6.0, 0.02}, stable_time_steps(kBand, 1.0, 0.02)).value;
    CHECK(ref > 0.0);
    CHECK(mc.upper <= ref + 3.0 * mc.upper_se + 0.01);
}
