#pragma once

// Discrete paths of the symmetric martingale M_t = int_0^t sigma_s dW_s under
// one control strategy.
//
// Randomness contract: the Brownian driver of path i is built from Philox
// counters keyed by (seed, path index, bridge node); path i is therefore the
// same whatever n_paths, block size, or worker count is requested. On uniform
// grids the driver is a dyadic Brownian bridge, so the grid with 2N steps is a
// refinement of the grid with N steps (shared nodes carry identical W values).
//
// Path values live on a 2^-40 lattice: every partial sum of increments is
// exact, so telescoping identities hold without rounding.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "gmlab/matrix.hpp"
#include "gmlab/model.hpp"

namespace gmlab {

/// Lattice spacing of simulated path values.
inline constexpr double kPathQuantum = 0x1p-40;

struct PathBundle {
    TimeGrid grid = make_uniform_grid(1.0, 1);
    std::size_t first_path = 0;  // global index of row 0
    std::size_t n_paths = 0;
    Matrix m_values;    // n_paths x (N+1), column 0 is 0
    Matrix increments;  // n_paths x N, m_values(i,j+1) - m_values(i,j)
    Matrix qv_exact;    // n_paths x (N+1), cumulative sum of sigma^2 dt
    Matrix sigma_used;  // n_paths x N, left-point volatility
    std::uint64_t seed = 0;
    std::string strategy_label;

    std::size_t steps() const { return grid.steps(); }
    std::size_t path_id(std::size_t row) const { return first_path + row; }
};

struct SimulationOptions {
    std::size_t block_paths = 8;
    std::size_t workers = 1;
    /// Guard on the bytes a materialized bundle may occupy.
    std::size_t max_bundle_bytes = std::size_t{2} << 30;
};

/// Materialized simulation of paths 0..n_paths-1.
PathBundle simulate_paths(const ControlStrategy& strategy, const TimeGrid& grid,
                          std::size_t n_paths, std::uint64_t seed,
                          const SimulationOptions& options = {});

/// Fill `bundle` with paths first_path..first_path+count-1, reusing storage.
void simulate_path_range(const ControlStrategy& strategy, const TimeGrid& grid,
                         std::size_t first_path, std::size_t count, std::uint64_t seed,
                         PathBundle& bundle);

/// Stream paths 0..n_paths-1 in blocks. `visit` runs concurrently on up to
/// options.workers threads and must only write per-path outputs.
void for_each_block(const ControlStrategy& strategy, const TimeGrid& grid, std::size_t n_paths,
                    std::uint64_t seed, const SimulationOptions& options,
                    const std::function<void(const PathBundle&)>& visit);

/// Cumulative partition sums sum_{j<k} (dM_j)^2, n_paths x (N+1).
Matrix quadratic_variation_partition(const PathBundle& bundle);

/// Per-path partition quadratic variation at T.
double partition_qv_at_end(const PathBundle& bundle, std::size_t row);

/// CSV dump with columns path_id,step,t,M,qv_exact,sigma. Refuses bundles
/// with more than max_rows rows of output.
void write_paths_csv(const PathBundle& bundle, const std::string& path,
                     std::size_t max_rows = 5'000'000);

}  // namespace gmlab
