#pragma once

// Local time L_t(a) of the simulated martingale, two ways:
//
//   tanaka:     |M_t - a| - |M_0 - a| - sum_j sgn(M_j - a) dM_j
//   occupation: (1/eps) sum_j 1[a <= M_j < a + eps] sigma_j^2 dt_j
//               (symmetric window: 1/(2 eps) and a - eps < M_j < a + eps)
//
// With sgn(0) = -1 the tanaka sum equals sum over crossing steps of
// 2 |M_{j+1} - a|, where a step crosses a when M_j and M_{j+1} lie on
// different sides of the split {x > a} / {x <= a}. The field builder uses that
// form: it is nonnegative, nondecreasing in t, zero at levels never crossed,
// and costs O(N + crossings) per path for all levels at once.
//
// Levels are snapped to the path lattice, so for lattice levels both forms are
// computed without rounding and agree exactly.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmlab/matrix.hpp"
#include "gmlab/path_engine.hpp"
#include "gmlab/stats.hpp"

namespace gmlab {

/// 1 for x > 0, -1 for x <= 0.
inline double sgn(double x) { return x > 0.0 ? 1.0 : -1.0; }

/// Nearest point of the path lattice.
double snap_level(double a);

/// Uniform levels a_k = first + k * spacing, k < count, each snapped to the
/// path lattice.
class LevelGrid {
public:
    static LevelGrid make(double first, double spacing, std::size_t count);
    /// Levels k * spacing for |k * spacing| <= half_width (0 is a level).
    static LevelGrid centered(double half_width, double spacing);

    std::size_t size() const { return levels_.size(); }
    double spacing() const { return spacing_; }
    double level(std::size_t k) const { return levels_[k]; }
    std::span<const double> levels() const { return levels_; }
    double front() const { return levels_.front(); }
    double back() const { return levels_.back(); }

    /// Index range [first, last) of levels a with lo <= a < hi.
    std::pair<std::size_t, std::size_t> half_open(double lo, double hi) const;
    /// Index range [first, last) of levels a with lo < a < hi.
    std::pair<std::size_t, std::size_t> open(double lo, double hi) const;

private:
    std::size_t lower_index(double x, bool strict) const;

    double first_ = 0.0;
    double spacing_ = 1.0;
    std::vector<double> levels_;
};

/// Spacing 0.02 sigma_high sqrt(T) over +-4 sigma_high sqrt(T).
LevelGrid default_level_grid(const VolatilityBand& band, double horizon);

/// Node indices 0 = s_0 < ... = N at which fields are recorded: every node
/// for N <= 256, otherwise 17 evenly spread nodes.
std::vector<std::size_t> default_snapshots(std::size_t steps);

/// Per-path values on (snapshot x level) nodes.
struct LocalTimeField {
    LevelGrid levels;
    TimeGrid grid = make_uniform_grid(1.0, 1);
    std::vector<std::size_t> snapshots;  // node indices
    std::size_t n_paths = 0;
    Matrix tanaka;       // n_paths x (snapshots * levels), empty if not computed
    Matrix occupation;   // same shape
    double epsilon = 0.0;
    bool symmetric = false;

    std::size_t column(std::size_t snapshot, std::size_t level) const {
        return snapshot * levels.size() + level;
    }
    double tanaka_at(std::size_t path, std::size_t snapshot, std::size_t level) const {
        return tanaka(path, column(snapshot, level));
    }
    double occupation_at(std::size_t path, std::size_t snapshot, std::size_t level) const {
        return occupation(path, column(snapshot, level));
    }
};

/// Tanaka part of the field.
LocalTimeField local_time_tanaka(const PathBundle& bundle, const LevelGrid& levels,
                                 std::vector<std::size_t> snapshots = {});

/// Occupation part of the field. Throws InvalidArgument when epsilon <= 0.
LocalTimeField local_time_occupation(const PathBundle& bundle, const LevelGrid& levels,
                                     double epsilon, bool symmetric = false,
                                     std::vector<std::size_t> snapshots = {});

/// Both parts.
LocalTimeField local_time_field(const PathBundle& bundle, const LevelGrid& levels, double epsilon,
                                bool symmetric = false, std::vector<std::size_t> snapshots = {});

// Per-path kernels. m holds N+1 values, inc and weight N.

/// Definitional form via the signed sum; L_T(a).
double tanaka_definition_path(std::span<const double> m, std::span<const double> inc, double a);

/// Crossing form; L_T(a).
double tanaka_crossing_path(std::span<const double> m, double a);

/// sigma_j^2 dt_j.
std::vector<double> qv_weights(std::span<const double> sigma, const TimeGrid& grid);

/// Occupation estimate at T for one level.
double occupation_path(std::span<const double> m, std::span<const double> weight, double a,
                       double epsilon, bool symmetric);

/// Tanaka L_t(a) for all levels at the given snapshots, written as
/// out[snapshot * K + k].
void tanaka_levels_path(std::span<const double> m, const LevelGrid& levels,
                        std::span<const std::size_t> snapshots, std::span<double> out);

/// Occupation counterpart of tanaka_levels_path.
void occupation_levels_path(std::span<const double> m, std::span<const double> weight,
                            const LevelGrid& levels, double epsilon, bool symmetric,
                            std::span<const std::size_t> snapshots, std::span<double> out);

/// Per-path comparison of sum g(M_j) sigma_j^2 dt_j with the trapezoid
/// sum_k g(a_k) L_T(a_k) spacing.
struct OccupationFormulaResult {
    std::vector<double> lhs;
    std::vector<double> rhs;
    std::vector<double> relative_error;  // |lhs - rhs| / |lhs|, 0 when both vanish
    double mean_relative_error = 0.0;
};

/// Throws CoverageError when a path leaves [a_0 + spacing, a_K - spacing].
OccupationFormulaResult occupation_formula_check(const PathBundle& bundle,
                                                 const std::function<double(double)>& g,
                                                 const LevelGrid& levels);

/// Per-path sides of the occupation formula; the coverage-checked kernel.
std::pair<double, double> occupation_formula_path(std::span<const double> m,
                                                  std::span<const double> weight,
                                                  const std::function<double(double)>& g,
                                                  const LevelGrid& levels);

enum class LocalTimeEstimator { tanaka, occupation };

/// Mass of dL_t(a) recorded while |M_t - a| > band_width, summed over levels,
/// next to the total mass sum_k L_T(a_k).
struct GrowthSetResult {
    std::vector<double> violation;  // per path
    std::vector<double> mass;       // per path
    double band_width = 0.0;
    double violation_fraction = 0.0;  // sum violation / sum mass
};

/// epsilon + 2 sigma_high sqrt(mesh log N).
double growth_band_width(double epsilon, double sigma_high, const TimeGrid& grid);

GrowthSetResult growth_set_check(const PathBundle& bundle, const LevelGrid& levels,
                                 LocalTimeEstimator estimator, double epsilon, double sigma_high,
                                 bool symmetric = false);

/// Per-path (violation, mass) for growth_set_check.
std::pair<double, double> growth_set_path(std::span<const double> m, std::span<const double> weight,
                                          const LevelGrid& levels, LocalTimeEstimator estimator,
                                          double epsilon, bool symmetric, double band_width);

/// sup_t |int sgn(M - x) dM - int sgn(M - y) dM| over grid nodes.
double level_increment_sup_path(std::span<const double> m, double x, double y);

/// Moment scaling of level increments of the signed integral.
struct RegularityFit {
    std::size_t order = 2;             // n; the moment is 2n
    std::vector<double> gaps;          // decreasing
    std::vector<double> moments;       // upper estimate per gap
    std::vector<double> std_errors;
    double slope = 0.0;                // least squares on log moment vs log gap
    double calibrated_constant = 0.0;  // moment(gaps[0]) / gaps[0]^n
    std::vector<double> bound;         // calibrated_constant * gap^n
    bool inequality_holds = false;     // moment <= bound + 3 SE at every gap
};

/// Fits moments collected elsewhere. Throws DiagnosticError on a degenerate
/// fit (nonpositive moment or fewer than 4 gaps).
RegularityFit fit_regularity(std::size_t order, std::vector<double> gaps,
                             std::vector<double> moments, std::vector<double> std_errors);

/// Gaps h0, h0/2, ..., pairs (base, base + h); upper estimate over bundles.
/// Requires order >= 2 and n_gaps >= 4.
RegularityFit level_regularity_check(std::span<const PathBundle* const> bundles, std::size_t order,
                                     double h0, std::size_t n_gaps = 4, double base = 0.0);

/// CSV export: level,time,mean_tanaka,mean_occupation,se (se of mean_tanaka).
void write_field_csv(const LocalTimeField& field, const std::string& path);

struct FieldSummary {
    double max_mean_tanaka = 0.0;
    double level_of_max = 0.0;
    double min_tanaka = 0.0;
    double max_mean_occupation = 0.0;
    double discrepancy_l1 = 0.0;   // mean over nodes of |mean tanaka - mean occupation|
    double discrepancy_sup = 0.0;  // max over nodes of the same
};

FieldSummary summarize(const LocalTimeField& field);

}  // namespace gmlab
