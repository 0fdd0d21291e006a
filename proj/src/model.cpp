#include "gmlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "gmlab/errors.hpp"

namespace gmlab {

VolatilityBand VolatilityBand::make(double sigma_low, double sigma_high) {
    if (!std::isfinite(sigma_low) || !std::isfinite(sigma_high) || sigma_low < 0.0 ||
        sigma_high <= 0.0 || sigma_low > sigma_high) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "volatility band [%g, %g] invalid: need 0 <= sigma_low <= sigma_high, "
                      "sigma_high > 0",
                      sigma_low, sigma_high);
        throw InvalidArgument(buf);
    }
    return VolatilityBand(sigma_low, sigma_high);
}

double VolatilityBand::g(double a) const {
    return 0.5 * (max_variance() * std::max(a, 0.0) - min_variance() * std::max(-a, 0.0));
}

TimeGrid TimeGrid::from_nodes(std::vector<double> nodes) {
    if (nodes.size() < 2) throw InvalidArgument("time grid needs at least two nodes");
    if (nodes.front() != 0.0) throw InvalidArgument("time grid must start at 0");
    for (std::size_t j = 0; j + 1 < nodes.size(); ++j) {
        if (!(nodes[j + 1] > nodes[j]) || !std::isfinite(nodes[j + 1]))
            throw InvalidArgument("time grid nodes must be finite and strictly increasing");
    }
    TimeGrid g;
    g.nodes_ = std::move(nodes);
    return g;
}

double TimeGrid::mesh() const {
    if (uniform_) return uniform_dt_;
    double m = 0.0;
    for (std::size_t j = 0; j + 1 < nodes_.size(); ++j) m = std::max(m, nodes_[j + 1] - nodes_[j]);
    return m;
}

TimeGrid make_uniform_grid(double horizon, std::size_t steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw InvalidArgument("time horizon must be positive and finite");
    if (steps == 0) throw InvalidArgument("time grid needs at least one step");
    TimeGrid g;
    g.nodes_.resize(steps + 1);
    const double n = static_cast<double>(steps);
    for (std::size_t j = 0; j < steps; ++j) g.nodes_[j] = horizon * static_cast<double>(j) / n;
    g.nodes_[steps] = horizon;
    g.uniform_ = true;
    g.uniform_dt_ = horizon / n;
    return g;
}

std::string constant_label(double sigma) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "const(%.6g)", sigma);
    return buf;
}

namespace {

// Band policy applied to a statically known sigma at construction.
double settle(const VolatilityBand& band, BandMode mode, double sigma, const std::string& label) {
    if (band.contains(sigma)) return sigma;
    if (mode == BandMode::clamp && std::isfinite(sigma))
        return std::clamp(sigma, band.sigma_low(), band.sigma_high());
    char buf[200];
    std::snprintf(buf, sizeof buf, "strategy '%s' emits sigma %g outside band [%g, %g]",
                  label.c_str(), sigma, band.sigma_low(), band.sigma_high());
    throw DomainError(buf);
}

}  // namespace

ControlStrategy::ControlStrategy(std::string label, StrategyKind kind, VolatilityBand band,
                                 BandMode mode)
    : label_(std::move(label)), kind_(std::move(kind)), band_(band), mode_(mode) {
    if (label_.empty()) throw InvalidArgument("strategy label must not be empty");
    std::visit(
        [&](auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ConstantVol>) {
                k.sigma = settle(band_, mode_, k.sigma, label_);
            } else if constexpr (std::is_same_v<K, ScheduleVol>) {
                if (k.knots.empty()) throw InvalidArgument("schedule strategy needs knots");
                for (std::size_t i = 0; i < k.knots.size(); ++i) {
                    if (i > 0 && !(k.knots[i].first > k.knots[i - 1].first))
                        throw InvalidArgument("schedule knot times must increase");
                    k.knots[i].second = settle(band_, mode_, k.knots[i].second, label_);
                }
            } else if constexpr (std::is_same_v<K, ThresholdFeedback>) {
                k.sigma_at_or_above = settle(band_, mode_, k.sigma_at_or_above, label_);
                k.sigma_below = settle(band_, mode_, k.sigma_below, label_);
            } else if constexpr (std::is_same_v<K, FeedbackRule>) {
                if (!k.rule) throw InvalidArgument("feedback strategy needs a rule");
            } else {
                if (!(k.intensity >= 0.0) || !std::isfinite(k.intensity))
                    throw InvalidArgument("switching intensity must be finite and >= 0");
                k.sigma_first = settle(band_, mode_, k.sigma_first, label_);
                k.sigma_second = settle(band_, mode_, k.sigma_second, label_);
            }
        },
        kind_);
}

ControlStrategy ControlStrategy::constant(const VolatilityBand& band, double sigma, BandMode mode) {
    return ControlStrategy(constant_label(sigma), ConstantVol{sigma}, band, mode);
}

ControlStrategy ControlStrategy::bang_bang(const VolatilityBand& band, double pivot, bool up) {
    const double hi = band.sigma_high();
    const double lo = band.sigma_low();
    return ControlStrategy(up ? "bangbang_up" : "bangbang_down",
                           ThresholdFeedback{pivot, up ? hi : lo, up ? lo : hi}, band);
}

double ControlStrategy::admit(double sigma) const {
    if (band_.contains(sigma)) return sigma;
    return settle(band_, mode_, sigma, label_);
}

double ControlStrategy::sigma_at(double t, double m) const {
    return std::visit(
        [&](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ConstantVol>) {
                return k.sigma;
            } else if constexpr (std::is_same_v<K, ScheduleVol>) {
                auto it = std::upper_bound(k.knots.begin(), k.knots.end(), t,
                                           [](double x, const auto& knot) { return x < knot.first; });
                return it == k.knots.begin() ? k.knots.front().second : std::prev(it)->second;
            } else if constexpr (std::is_same_v<K, ThresholdFeedback>) {
                return m >= k.pivot ? k.sigma_at_or_above : k.sigma_below;
            } else if constexpr (std::is_same_v<K, FeedbackRule>) {
                return admit(k.rule(t, m));
            } else {
                throw InvalidArgument("random switching volatility depends on engine state");
            }
        },
        kind_);
}

std::optional<double> ControlStrategy::constant_sigma() const {
    if (const auto* c = std::get_if<ConstantVol>(&kind_)) return c->sigma;
    if (const auto* f = std::get_if<ThresholdFeedback>(&kind_)) {
        if (f->sigma_at_or_above == f->sigma_below) return f->sigma_below;
    }
    if (const auto* s = std::get_if<ScheduleVol>(&kind_)) {
        const double v = s->knots.front().second;
        if (std::all_of(s->knots.begin(), s->knots.end(), [&](const auto& k) { return k.second == v; }))
            return v;
    }
    if (const auto* r = std::get_if<RandomSwitching>(&kind_)) {
        if (r->sigma_first == r->sigma_second) return r->sigma_first;
    }
    return std::nullopt;
}

StrategyFamily::StrategyFamily(std::string label, std::vector<ControlStrategy> strategies)
    : label_(std::move(label)), strategies_(std::move(strategies)) {
    if (strategies_.empty()) throw InvalidArgument("strategy family must not be empty");
    std::set<std::string> seen;
    for (const auto& s : strategies_) {
        if (!seen.insert(s.label()).second)
            throw InvalidArgument("duplicate strategy label '" + s.label() + "'");
    }
}

const ControlStrategy* StrategyFamily::find(const std::string& label) const {
    for (const auto& s : strategies_)
        if (s.label() == label) return &s;
    return nullptr;
}

StrategyFamily default_strategy_family(const VolatilityBand& band, std::size_t k, double pivot) {
    if (k < 2) throw InvalidArgument("default strategy family needs k >= 2");
    std::vector<ControlStrategy> out;
    std::vector<double> constants;
    const double lo = band.sigma_low();
    const double hi = band.sigma_high();
    for (std::size_t i = 0; i < k; ++i) {
        const double sigma =
            i + 1 == k ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
        if (std::find(constants.begin(), constants.end(), sigma) != constants.end()) continue;
        constants.push_back(sigma);
        out.push_back(ControlStrategy::constant(band, sigma));
    }
    // A bang-bang with equal sides is just a constant already present.
    if (!band.degenerate()) {
        out.push_back(ControlStrategy::bang_bang(band, pivot, true));
        out.push_back(ControlStrategy::bang_bang(band, pivot, false));
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "default(k=%zu)", k);
    return StrategyFamily(buf, std::move(out));
}

}  // namespace gmlab
