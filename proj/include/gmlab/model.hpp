#pragma once

// Uncertainty model: the volatility band, time grids, and the adapted
// volatility strategies whose finite family stands in for the set of
// probability measures behind the upper expectation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace gmlab {

/// Volatility interval [sigma_low, sigma_high]. The variance bounds
/// min_variance() = sigma_low^2 and max_variance() = sigma_high^2 are the
/// non-degeneracy and growth constants of the martingale's quadratic variation.
class VolatilityBand {
public:
    /// Requires 0 <= sigma_low <= sigma_high and sigma_high > 0.
    static VolatilityBand make(double sigma_low, double sigma_high);

    double sigma_low() const { return low_; }
    double sigma_high() const { return high_; }
    double min_variance() const { return low_ * low_; }
    double max_variance() const { return high_ * high_; }
    bool degenerate() const { return low_ == high_; }
    bool contains(double sigma) const { return sigma >= low_ && sigma <= high_; }

    /// G(a) = (max_variance * a^+ - min_variance * a^-) / 2.
    double g(double a) const;

private:
    VolatilityBand(double low, double high) : low_(low), high_(high) {}
    double low_;
    double high_;
};

/// Ordered time nodes 0 = t_0 < ... < t_N = T.
class TimeGrid {
public:
    static TimeGrid from_nodes(std::vector<double> nodes);

    double horizon() const { return nodes_.back(); }
    std::size_t steps() const { return nodes_.size() - 1; }
    std::span<const double> nodes() const { return nodes_; }
    double node(std::size_t j) const { return nodes_[j]; }
    /// Step length; exactly T/N on uniform grids.
    double dt(std::size_t j) const { return uniform_ ? uniform_dt_ : nodes_[j + 1] - nodes_[j]; }
    double mesh() const;
    bool uniform() const { return uniform_; }

private:
    friend TimeGrid make_uniform_grid(double horizon, std::size_t steps);
    TimeGrid() = default;

    std::vector<double> nodes_;
    bool uniform_ = false;
    double uniform_dt_ = 0.0;
};

/// Nodes t_j = T*j/N; nodes of N are bitwise a subset of those of 2N.
TimeGrid make_uniform_grid(double horizon, std::size_t steps);

/// How out-of-band volatilities are treated.
enum class BandMode { strict, clamp };

struct ConstantVol {
    double sigma;
};

/// Right-continuous step schedule of (time, sigma) knots; before the first
/// knot the first sigma applies.
struct ScheduleVol {
    std::vector<std::pair<double, double>> knots;
};

/// sigma = sigma_at_or_above if m >= pivot, else sigma_below.
struct ThresholdFeedback {
    double pivot;
    double sigma_at_or_above;
    double sigma_below;
};

/// Arbitrary adapted rule (t, current value) -> sigma. Checked at emission.
struct FeedbackRule {
    std::function<double(double t, double m)> rule;
};

/// Two-state volatility that switches at Poisson times of the given intensity,
/// using its own counter stream (offset by seed_offset).
struct RandomSwitching {
    double intensity;
    std::uint32_t seed_offset;
    double sigma_first;
    double sigma_second;
};

using StrategyKind =
    std::variant<ConstantVol, ScheduleVol, ThresholdFeedback, FeedbackRule, RandomSwitching>;

/// One adapted volatility policy, bound to a band. Every sigma it emits lies
/// in the band: strict mode throws DomainError otherwise, clamp mode clamps.
class ControlStrategy {
public:
    ControlStrategy(std::string label, StrategyKind kind, VolatilityBand band,
                    BandMode mode = BandMode::strict);

    static ControlStrategy constant(const VolatilityBand& band, double sigma,
                                    BandMode mode = BandMode::strict);
    /// Bang-bang feedback around pivot: `up` puts sigma_high at or above it.
    static ControlStrategy bang_bang(const VolatilityBand& band, double pivot, bool up);

    const std::string& label() const { return label_; }
    const StrategyKind& kind() const { return kind_; }
    const VolatilityBand& band() const { return band_; }
    BandMode mode() const { return mode_; }

    /// Sigma for the deterministic and feedback kinds. RandomSwitching needs
    /// the engine's switching state and is not answered here.
    double sigma_at(double t, double m) const;

    /// The band policy applied to one emitted value.
    double admit(double sigma) const;

    /// Set when the strategy always emits the same sigma.
    std::optional<double> constant_sigma() const;

    bool is_random() const { return std::holds_alternative<RandomSwitching>(kind_); }

private:
    std::string label_;
    StrategyKind kind_;
    VolatilityBand band_;
    BandMode mode_;
};

/// Finite family standing in for the measure set; nonempty, unique labels.
class StrategyFamily {
public:
    StrategyFamily(std::string label, std::vector<ControlStrategy> strategies);

    const std::string& label() const { return label_; }
    std::span<const ControlStrategy> strategies() const { return strategies_; }
    std::size_t size() const { return strategies_.size(); }
    const ControlStrategy& operator[](std::size_t i) const { return strategies_[i]; }
    const ControlStrategy* find(const std::string& label) const;

private:
    std::string label_;
    std::vector<ControlStrategy> strategies_;
};

/// k constants equally spaced on the band (endpoints included) plus the two
/// bang-bang feedbacks around `pivot`, with behavioural duplicates removed.
StrategyFamily default_strategy_family(const VolatilityBand& band, std::size_t k,
                                       double pivot = 0.0);

/// Label used for a constant strategy, e.g. "const(0.75)".
std::string constant_label(double sigma);

}  // namespace gmlab
