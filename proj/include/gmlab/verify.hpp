#pragma once

// Theorem-level checks driven by one run configuration. Each check names the
// quantities it needs per path; the suite simulates each (grid, strategy)
// once and lets every check read the shared per-path outputs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "gmlab/local_time.hpp"
#include "gmlab/model.hpp"

namespace gmlab {

inline constexpr int kReportSchemaVersion = 1;

struct SuiteConfig {
    double sigma_low = 0.5;
    double sigma_high = 1.0;
    double horizon = 1.0;
    std::size_t family_k = 5;
    double pivot = 0.0;
    bool strict_band = true;
    std::uint64_t seed = 42;
    std::size_t workers = 1;

    std::size_t steps = 16384;                // main grid
    std::vector<std::size_t> ladder;          // refinement ladder ending at steps; empty: derived
    std::size_t paths = 100000;               // main grid
    std::size_t ladder_paths = 10000;         // refinement ladder and per-path field checks
    std::size_t expectation_steps = 4096;
    std::size_t expectation_paths = 100000;
    std::size_t bicontinuity_paths = 10000;

    std::vector<double> epsilons{0.2, 0.1, 0.05};
    double level_spacing = 0.02;
    double level_half_width = 0.0;  // 0: 6 sigma_high sqrt(T)
    std::size_t bicontinuity_order = 2;
    double bicontinuity_h0 = 0.4;
    std::size_t bicontinuity_gaps = 4;
    std::vector<double> krylov_lengths{1.0, 0.25, 0.0625};
    double krylov_p = 2.0;
    double call_strike = 0.2;
    std::vector<double> pde_dx{0.02, 0.01};

    std::vector<std::string> checks{"all"};
    std::vector<std::string> skip;

    double tol_identity = 1e-9;
    double tol_square = 0.02;
    double tol_neg_square = 0.01;
    double tol_abs = 0.01;
    double tol_pde = 0.01;
    double tol_local_time = 0.02;
    double tol_cross = 0.05;
    double tol_occupation = 0.05;
    double tol_call = 0.02;
    double tol_growth = 0.05;

    /// Sets one key from text. Throws ConfigError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Throws ConfigError when the configuration cannot run.
    void validate() const;
    /// Ladder actually used.
    std::vector<std::size_t> resolved_ladder() const;
    double resolved_half_width() const;
    std::vector<std::string> enabled_checks() const;
    VolatilityBand band() const;
    nlohmann::ordered_json echo() const;
};

/// Registered check names, in run order.
const std::vector<std::string>& check_names();

struct Metric {
    std::string name;
    double value = 0.0;
    std::string relation;  // "<=", ">=", "==", or "info"
    double bound = 0.0;
    bool pass = true;
};

struct CheckReport {
    std::string name;
    bool passed = true;
    std::string error;  // set when the check threw
    std::vector<Metric> metrics;
    nlohmann::ordered_json details = nlohmann::ordered_json::object();
    std::uint64_t seed = 0;
    double runtime_seconds = 0.0;

    void add(std::string name, double value, std::string relation, double bound);
    void info(std::string name, double value);
};

struct SuiteResult {
    std::vector<CheckReport> reports;
    bool passed = true;
    bool errored = false;
    double runtime_seconds = 0.0;
    double simulation_seconds = 0.0;
    std::vector<std::pair<std::size_t, double>> pass_seconds;  // (steps, seconds) per shared pass
};

/// Runs the enabled checks. Configuration errors surface before any
/// simulation; a check that throws is reported as an error.
SuiteResult run_suite(const SuiteConfig& config, std::ostream* progress = nullptr);

/// Versioned report. Timings are left out unless requested so that reruns
/// produce identical bytes.
nlohmann::ordered_json suite_report_json(const SuiteResult& result, const SuiteConfig& config,
                                         bool include_timings = false);

/// Human-readable table.
std::string suite_table(const SuiteResult& result);

/// Convex function for the Tanaka check: f, its left derivative, and the
/// second-derivative measure as atoms plus a density on [density_lo, density_hi].
struct ConvexFunction {
    std::string name;
    std::function<double(double)> f;
    std::function<double(double)> left_derivative;
    std::vector<std::pair<double, double>> atoms;  // (level, weight)
    std::function<double(double)> density;         // may be empty
    double density_lo = 0.0;
    double density_hi = 0.0;

    /// Throws InvalidArgument when the measure has negative mass.
    void validate(const LevelGrid& levels) const;
};

ConvexFunction convex_abs(double a);
ConvexFunction convex_square();
ConvexFunction convex_call(double strike);

/// f(M_T) - f(M_0) - sum f'_-(M_j) dM_j - (1/2) int L_T(a) df'_-(a), with the
/// density part integrated by the trapezoid rule on `levels`.
double tanaka_residual_path(std::span<const double> m, const ConvexFunction& f,
                            const LevelGrid& levels);

}  // namespace gmlab
