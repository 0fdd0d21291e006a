#include "gmlab/expectation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>

#include "gmlab/errors.hpp"

namespace gmlab {

PathPayoff TerminalPayoff::on_path() const {
    return [f = f](std::span<const double> m) { return f(m.back()); };
}

std::vector<std::string> payoff_names() {
    return {"linear", "square", "neg_square", "abs", "call(K)", "indicator(a,b)", "sin"};
}

TerminalPayoff payoff_by_name(const std::string& spec) {
    if (spec == "linear") return {spec, [](double x) { return x; }};
    if (spec == "square") return {spec, [](double x) { return x * x; }};
    if (spec == "neg_square") return {spec, [](double x) { return -x * x; }};
    if (spec == "abs") return {spec, [](double x) { return std::fabs(x); }};
    if (spec == "sin") return {spec, [](double x) { return std::sin(x); }};
    static const std::regex call(R"(call\(\s*([-+0-9.eE]+)\s*\))");
    static const std::regex indicator(R"(indicator\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\))");
    auto number = [&](const std::string& text) {
        try {
            return std::stod(text);
        } catch (const std::exception&) {
            throw InvalidArgument("bad number '" + text + "' in payoff '" + spec + "'");
        }
    };
    std::smatch match;
    if (std::regex_match(spec, match, call)) {
        const double k = number(match[1]);
        return {spec, [k](double x) { return std::max(x - k, 0.0); }};
    }
    if (std::regex_match(spec, match, indicator)) {
        const double a = number(match[1]), b = number(match[2]);
        if (!(a < b)) throw InvalidArgument("indicator(a,b) needs a < b");
        return {spec, [a, b](double x) { return x >= a && x <= b ? 1.0 : 0.0; }};
    }
    std::string valid;
    for (const auto& n : payoff_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown payoff '" + spec + "'; valid: " + valid);
}

EstimateReport summarize_estimates(const std::string& name,
                                   std::span<const std::vector<double>> samples,
                                   std::span<const std::string> labels, std::uint64_t seed,
                                   std::size_t steps) {
    EstimateReport r;
    r.payoff = name;
    r.seed = seed;
    r.steps = steps;
    r.n_paths = samples.empty() ? 0 : samples[0].size();
    std::size_t hi = 0, lo = 0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        r.per_strategy.push_back({labels[s], sample_stats(samples[s])});
        if (r.per_strategy[s].stats.mean > r.per_strategy[hi].stats.mean) hi = s;
        if (r.per_strategy[s].stats.mean < r.per_strategy[lo].stats.mean) lo = s;
    }
    if (!r.per_strategy.empty()) {
        r.upper = r.per_strategy[hi].stats.mean;
        r.upper_se = r.per_strategy[hi].stats.std_error;
        r.argmax_label = r.per_strategy[hi].label;
        r.lower = r.per_strategy[lo].stats.mean;
        r.lower_se = r.per_strategy[lo].stats.std_error;
        r.argmin_label = r.per_strategy[lo].label;
    }
    return r;
}

std::vector<std::vector<std::vector<double>>> collect_samples(
    std::span<const PathPayoff> payoffs, std::span<const std::string> names,
    const StrategyFamily& family, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
    const SimulationOptions& options) {
    if (names.size() != payoffs.size()) throw InvalidArgument("one name per payoff required");
    const std::size_t P = payoffs.size();
    std::vector<std::vector<std::vector<double>>> samples(
        P, std::vector<std::vector<double>>(family.size(), std::vector<double>(n_paths)));
    for (std::size_t s = 0; s < family.size(); ++s) {
        const auto& strategy = family[s];
        for_each_block(strategy, grid, n_paths, seed, options, [&](const PathBundle& b) {
            for (std::size_t r = 0; r < b.n_paths; ++r) {
                const auto m = b.m_values.row(r);
                for (std::size_t p = 0; p < P; ++p) {
                    const double v = payoffs[p](m);
                    if (!std::isfinite(v)) {
                        char buf[200];
                        std::snprintf(buf, sizeof buf,
                                      "payoff '%s' is not finite on path %zu of strategy '%s' "
                                      "(M_T = %.6g)",
                                      names[p].c_str(), b.path_id(r), strategy.label().c_str(),
                                      m.back());
                        throw DomainError(buf);
                    }
                    samples[p][s][b.path_id(r)] = v;
                }
            }
        });
    }
    return samples;
}

std::vector<EstimateReport> upper_expectations(std::span<const PathPayoff> payoffs,
                                               std::span<const std::string> names,
                                               const StrategyFamily& family, const TimeGrid& grid,
                                               std::size_t n_paths, std::uint64_t seed,
                                               const SimulationOptions& options) {
    const auto samples = collect_samples(payoffs, names, family, grid, n_paths, seed, options);
    std::vector<std::string> labels;
    for (const auto& s : family.strategies()) labels.push_back(s.label());
    std::vector<EstimateReport> out;
    for (std::size_t p = 0; p < payoffs.size(); ++p)
        out.push_back(summarize_estimates(names[p], samples[p], labels, seed, grid.steps()));
    return out;
}

EstimateReport upper_expectation(const PathPayoff& payoff, const StrategyFamily& family,
                                 const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                 const SimulationOptions& options, const std::string& name) {
    const PathPayoff one[] = {payoff};
    const std::string names[] = {name};
    return upper_expectations(one, names, family, grid, n_paths, seed, options).front();
}

SublinearityReport sublinearity_from_samples(std::span<const std::vector<double>> x,
                                             std::span<const std::vector<double>> y, double scale,
                                             double constant) {
    if (!(scale >= 0.0)) throw InvalidArgument("homogeneity scale must be >= 0");
    if (x.size() != y.size() || x.empty()) throw InvalidArgument("X and Y need the same strategies");
    struct Upper {
        double mean = -INFINITY, se = 0.0, low = INFINITY;
    };
    auto upper = [&](auto&& transform) {
        Upper u;
        for (std::size_t s = 0; s < x.size(); ++s) {
            std::vector<double> v(x[s].size());
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = transform(x[s][i], y[s][i]);
            const auto st = sample_stats(v);
            if (st.mean > u.mean) u.mean = st.mean, u.se = st.std_error;
            u.low = std::min(u.low, st.mean);
        }
        return u;
    };
    const auto ux = upper([](double a, double) { return a; });
    const auto uy = upper([](double, double b) { return b; });
    const auto usum = upper([](double a, double b) { return a + b; });
    const auto uscaled = upper([&](double a, double) { return scale * a; });
    const auto umax = upper([](double a, double b) { return std::max(a, b); });
    const auto uconst = upper([&](double, double) { return constant; });

    SublinearityReport r;
    r.upper_x = ux.mean;
    r.upper_y = uy.mean;
    r.upper_sum = usum.mean;
    r.combined_se = std::sqrt(ux.se * ux.se + uy.se * uy.se + usum.se * usum.se);
    r.subadditive = r.upper_sum <= r.upper_x + r.upper_y + 3.0 * r.combined_se;
    r.scale = scale;
    r.upper_scaled = uscaled.mean;
    r.homogeneity_gap = std::fabs(r.upper_scaled - scale * r.upper_x);
    r.homogeneous = r.homogeneity_gap <= 1e-12 * (1.0 + std::fabs(scale * r.upper_x));
    r.monotone = umax.mean >= r.upper_x && umax.mean >= r.upper_y;
    r.constant = constant;
    r.constant_preserved = uconst.mean == constant && uconst.low == constant;
    return r;
}

SublinearityReport sublinearity_check(const PathPayoff& x, const PathPayoff& y,
                                      const StrategyFamily& family, const TimeGrid& grid,
                                      std::size_t n_paths, std::uint64_t seed, double scale,
                                      double constant, const SimulationOptions& options) {
    const PathPayoff payoffs[] = {x, y};
    const std::string names[] = {"X", "Y"};
    const auto samples = collect_samples(payoffs, names, family, grid, n_paths, seed, options);
    return sublinearity_from_samples(samples[0], samples[1], scale, constant);
}

std::size_t stable_time_steps(const VolatilityBand& band, double horizon, double dx) {
    const double max_dt = dx * dx / (2.0 * band.max_variance());
    auto steps = static_cast<std::size_t>(std::ceil(horizon / max_dt));
    while (horizon / static_cast<double>(steps) > max_dt) ++steps;
    return std::max<std::size_t>(steps, 1);
}

PdeSolution solve_g_heat(const std::function<double(double)>& terminal, const VolatilityBand& band,
                         double horizon, const SpaceGrid& space, std::size_t time_steps,
                         bool mollify) {
    if (!(horizon > 0.0)) throw InvalidArgument("PDE horizon must be positive");
    if (!(space.dx > 0.0)) throw InvalidArgument("space step must be positive");
    const double need = 6.0 * band.sigma_high() * std::sqrt(horizon);
    if (space.half_width < need * (1.0 - 1e-12)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "space grid half width %.4g is below 6 sigma_high sqrt(T) = %.4g",
                      space.half_width, need);
        throw InvalidArgument(buf);
    }
    if (time_steps == 0) throw InvalidArgument("PDE needs at least one time step");
    const double dt = horizon / static_cast<double>(time_steps);
    const double max_dt = space.dx * space.dx / (2.0 * band.max_variance());
    if (dt > max_dt) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "explicit scheme unstable: dt = %.6g exceeds dx^2/(2 max_variance) = %.6g; "
                      "need dt <= %.6g (at least %zu time steps)",
                      dt, max_dt, max_dt, stable_time_steps(band, horizon, space.dx));
        throw InvalidArgument(buf);
    }

    const auto half = static_cast<std::size_t>(std::ceil(space.half_width / space.dx - 1e-9));
    const std::size_t n = 2 * half + 1;
    PdeSolution sol;
    sol.dt = dt;
    sol.time_steps = time_steps;
    sol.x.resize(n);
    std::vector<double> u(n), d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = (static_cast<double>(i) - static_cast<double>(half)) * space.dx;
        sol.x[i] = x;
        if (mollify) {
            const double h = 0.5 * space.dx;
            u[i] = (terminal(x - h) + 4.0 * terminal(x) + terminal(x + h)) / 6.0;
        } else {
            u[i] = terminal(x);
        }
        if (!std::isfinite(u[i])) throw DomainError("terminal is not finite on the space grid");
    }
    const double inv_dx2 = 1.0 / (space.dx * space.dx);
    for (std::size_t step = 0; step < time_steps; ++step) {
        for (std::size_t i = 1; i + 1 < n; ++i) d2[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_dx2;
        d2[0] = d2[1];
        d2[n - 1] = d2[n - 2];
        for (std::size_t i = 0; i < n; ++i) u[i] += dt * band.g(d2[i]);
    }
    sol.u0 = std::move(u);
    sol.value = sol.u0[half];
    return sol;
}

void write_pde_csv(const PdeSolution& solution, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open " + tmp);
        out.precision(15);
        out << "x,u\n";
        for (std::size_t i = 0; i < solution.x.size(); ++i) out << solution.x[i] << ',' << solution.u0[i] << '\n';
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

}  // namespace gmlab
