#pragma once

// Upper and lower expectations over a strategy family, and the G-heat
// equation solver used as an independent reference for terminal payoffs.
//
// The family is finite, so the Monte Carlo upper value is a lower bound on
// the upper expectation over all admissible volatility processes; the PDE
// value is the reference for that gap.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gmlab/path_engine.hpp"
#include "gmlab/stats.hpp"

namespace gmlab {

/// Functional of one discrete path m_0..m_N.
using PathPayoff = std::function<double(std::span<const double> m)>;

/// Named payoff of the terminal value.
struct TerminalPayoff {
    std::string name;
    std::function<double(double)> f;

    PathPayoff on_path() const;
};

/// linear, square, neg_square, abs, call(K), indicator(a,b), sin.
/// Throws InvalidArgument listing the valid names.
TerminalPayoff payoff_by_name(const std::string& spec);

/// Names understood by payoff_by_name.
std::vector<std::string> payoff_names();

struct StrategyEstimate {
    std::string label;
    SampleStats stats;
};

struct EstimateReport {
    std::string payoff;
    double upper = 0.0;
    double lower = 0.0;
    double upper_se = 0.0;
    double lower_se = 0.0;
    std::string argmax_label;
    std::string argmin_label;
    std::vector<StrategyEstimate> per_strategy;
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    std::size_t steps = 0;
    /// The maximum runs over a finite family only.
    bool upper_is_family_lower_bound = true;
};

/// Per-path payoff samples, indexed [payoff][strategy][path], from one
/// simulation per strategy. Throws DomainError naming the path when a sample
/// is not finite.
std::vector<std::vector<std::vector<double>>> collect_samples(
    std::span<const PathPayoff> payoffs, std::span<const std::string> names,
    const StrategyFamily& family, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
    const SimulationOptions& options = {});

/// Estimates for several payoffs from one simulation per strategy. Throws
/// DomainError naming the path when a payoff sample is not finite.
std::vector<EstimateReport> upper_expectations(std::span<const PathPayoff> payoffs,
                                               std::span<const std::string> names,
                                               const StrategyFamily& family, const TimeGrid& grid,
                                               std::size_t n_paths, std::uint64_t seed,
                                               const SimulationOptions& options = {});

EstimateReport upper_expectation(const PathPayoff& payoff, const StrategyFamily& family,
                                 const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                 const SimulationOptions& options = {},
                                 const std::string& name = "payoff");

/// Builds the report from per-strategy samples.
EstimateReport summarize_estimates(const std::string& name,
                                   std::span<const std::vector<double>> samples,
                                   std::span<const std::string> labels, std::uint64_t seed,
                                   std::size_t steps);

struct SublinearityReport {
    double upper_x = 0.0;
    double upper_y = 0.0;
    double upper_sum = 0.0;
    double combined_se = 0.0;
    bool subadditive = false;        // upper(X+Y) <= upper(X) + upper(Y) + 3 SE
    double scale = 0.0;
    double upper_scaled = 0.0;
    double homogeneity_gap = 0.0;    // |upper(sX) - s upper(X)|
    bool homogeneous = false;        // gap <= 1e-12 (1 + |s upper(X)|); exact for powers of two
    bool monotone = false;           // upper(max(X,Y)) >= upper(X) and >= upper(Y)
    double constant = 0.0;
    bool constant_preserved = false; // upper(c) == c exactly
    bool passed() const { return subadditive && homogeneous && monotone && constant_preserved; }
};

/// The same checks on precomputed samples [strategy][path] of X and Y.
SublinearityReport sublinearity_from_samples(std::span<const std::vector<double>> x,
                                             std::span<const std::vector<double>> y,
                                             double scale = 2.0, double constant = 1.25);

SublinearityReport sublinearity_check(const PathPayoff& x, const PathPayoff& y,
                                      const StrategyFamily& family, const TimeGrid& grid,
                                      std::size_t n_paths, std::uint64_t seed, double scale = 2.0,
                                      double constant = 1.25, const SimulationOptions& options = {});

/// Centred space grid x_i = (i - half) * dx.
struct SpaceGrid {
    double half_width = 6.0;
    double dx = 0.02;
};

struct PdeSolution {
    std::vector<double> x;
    std::vector<double> u0;  // u(0, x)
    double value = 0.0;      // u(0, 0)
    double dt = 0.0;
    std::size_t time_steps = 0;
};

/// Explicit monotone scheme for u_t + G(u_xx) = 0, u(T, .) = terminal, marching
/// back to t = 0. The terminal is cell-averaged (Simpson) when mollify is set.
/// Throws InvalidArgument if the grid is narrower than 6 sigma_high sqrt(T) or
/// dt = T / time_steps exceeds dx^2 / (2 max_variance).
PdeSolution solve_g_heat(const std::function<double(double)>& terminal, const VolatilityBand& band,
                         double horizon, const SpaceGrid& space, std::size_t time_steps,
                         bool mollify = true);

/// Smallest step count meeting the stability bound.
std::size_t stable_time_steps(const VolatilityBand& band, double horizon, double dx);

/// CSV with columns x,u.
void write_pde_csv(const PdeSolution& solution, const std::string& path);

}  // namespace gmlab
