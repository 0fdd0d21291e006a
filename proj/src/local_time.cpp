#include "gmlab/local_time.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "gmlab/errors.hpp"
#include "gmlab/simd/kernels.hpp"

namespace gmlab {

double snap_level(double a) { return std::nearbyint(a * 0x1p40) * kPathQuantum; }

LevelGrid LevelGrid::make(double first, double spacing, std::size_t count) {
    if (!(spacing > 0.0) || !std::isfinite(spacing) || !std::isfinite(first))
        throw InvalidArgument("level spacing must be positive and finite");
    if (count == 0) throw InvalidArgument("level grid needs at least one level");
    LevelGrid g;
    g.spacing_ = spacing;
    g.levels_.resize(count);
    for (std::size_t k = 0; k < count; ++k) g.levels_[k] = snap_level(first + static_cast<double>(k) * spacing);
    g.first_ = g.levels_.front();
    return g;
}

LevelGrid LevelGrid::centered(double half_width, double spacing) {
    if (!(spacing > 0.0) || !std::isfinite(spacing))
        throw InvalidArgument("level spacing must be positive and finite");
    if (!(half_width >= 0.0) || !std::isfinite(half_width))
        throw InvalidArgument("level half width must be finite and >= 0");
    const auto half = static_cast<std::size_t>(std::floor(half_width / spacing * (1.0 + 1e-12)));
    LevelGrid g;
    g.spacing_ = spacing;
    g.levels_.resize(2 * half + 1);
    for (std::size_t k = 0; k < g.levels_.size(); ++k)
        g.levels_[k] = snap_level((static_cast<double>(k) - static_cast<double>(half)) * spacing);
    g.first_ = g.levels_.front();
    return g;
}

std::size_t LevelGrid::lower_index(double x, bool strict) const {
    const std::size_t n = levels_.size();
    auto ok = [&](std::size_t k) { return strict ? levels_[k] > x : levels_[k] >= x; };
    const double guess = std::ceil((x - first_) / spacing_);
    std::size_t k;
    if (!(guess > 0.0)) k = 0;
    else if (guess >= static_cast<double>(n)) k = n;
    else k = static_cast<std::size_t>(guess);
    while (k > 0 && ok(k - 1)) --k;
    while (k < n && !ok(k)) ++k;
    return k;
}

std::pair<std::size_t, std::size_t> LevelGrid::half_open(double lo, double hi) const {
    const std::size_t a = lower_index(lo, false);
    return {a, std::max(a, lower_index(hi, false))};
}

std::pair<std::size_t, std::size_t> LevelGrid::open(double lo, double hi) const {
    const std::size_t a = lower_index(lo, true);
    return {a, std::max(a, lower_index(hi, false))};
}

LevelGrid default_level_grid(const VolatilityBand& band, double horizon) {
    const double scale = band.sigma_high() * std::sqrt(horizon);
    return LevelGrid::centered(4.0 * scale, 0.02 * scale);
}

std::vector<std::size_t> default_snapshots(std::size_t steps) {
    std::vector<std::size_t> s;
    if (steps <= 256) {
        for (std::size_t j = 0; j <= steps; ++j) s.push_back(j);
        return s;
    }
    for (std::size_t q = 0; q <= 16; ++q) s.push_back(steps * q / 16);
    return s;
}

namespace {

void check_snapshots(std::vector<std::size_t>& snapshots, std::size_t steps) {
    if (snapshots.empty()) snapshots = default_snapshots(steps);
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        if (snapshots[s] > steps || (s > 0 && snapshots[s] <= snapshots[s - 1]))
            throw InvalidArgument("snapshot nodes must increase and lie on the grid");
    }
}

void check_epsilon(double epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw InvalidArgument("occupation window epsilon must be positive");
}

// Levels whose occupation window contains x.
std::pair<std::size_t, std::size_t> window_levels(const LevelGrid& levels, double x, double eps,
                                                  bool symmetric) {
    const double pad = levels.spacing();
    if (symmetric) return levels.open(x - eps - pad, x + eps + pad);
    return levels.half_open(x - eps - pad, x + pad);
}

bool in_window(double x, double a, double eps, bool symmetric) {
    return symmetric ? (x > a - eps && x < a + eps) : (x >= a && x < a + eps);
}

// Tracks c = #{levels a < m} along a path; the levels a tanaka step from u to
// v moves are those with index between c(u) and c(v).
class LevelCursor {
public:
    LevelCursor(const LevelGrid& levels, double m0) : a_(levels.levels()) {
        c_ = levels.half_open(-INFINITY, m0).second;
    }

    // Calls visit(k, 2|v - a_k|) for every crossed level and moves to v.
    template <class Visit>
    void step(double v, Visit&& visit) {
        std::size_t c = c_;
        while (c > 0 && !(a_[c - 1] < v)) --c;
        while (c < a_.size() && a_[c] < v) ++c;
        for (std::size_t k = std::min(c, c_); k < std::max(c, c_); ++k) {
            const double d = v - a_[k];
            visit(k, std::fabs(d + d));
        }
        c_ = c;
    }

private:
    std::span<const double> a_;
    std::size_t c_ = 0;
};

template <class Visit>
void for_window_levels(const LevelGrid& levels, double x, double w, double eps, bool symmetric,
                       Visit&& visit) {
    const auto [k0, k1] = window_levels(levels, x, eps, symmetric);
    for (std::size_t k = k0; k < k1; ++k)
        if (in_window(x, levels.level(k), eps, symmetric)) visit(k, w);
}

}  // namespace

double tanaka_definition_path(std::span<const double> m, std::span<const double> inc, double a) {
    const std::size_t n = inc.size();
    const double signed_sum = simd::active_kernels().sgn_dot(m.data(), inc.data(), a, n);
    return std::fabs(m[n] - a) - std::fabs(m[0] - a) - signed_sum;
}

double tanaka_crossing_path(std::span<const double> m, double a) {
    return simd::active_kernels().crossing_sum(m.data(), a, m.size() - 1);
}

std::vector<double> qv_weights(std::span<const double> sigma, const TimeGrid& grid) {
    std::vector<double> w(sigma.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = sigma[j] * sigma[j] * grid.dt(j);
    return w;
}

double occupation_path(std::span<const double> m, std::span<const double> weight, double a,
                       double epsilon, bool symmetric) {
    check_epsilon(epsilon);
    const std::size_t n = weight.size();
    if (!symmetric)
        return simd::active_kernels().window_sum(m.data(), weight.data(), a, a + epsilon, n) / epsilon;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        if (in_window(m[j], a, epsilon, true)) s += weight[j];
    return s / (2.0 * epsilon);
}

void tanaka_levels_path(std::span<const double> m, const LevelGrid& levels,
                        std::span<const std::size_t> snapshots, std::span<double> out) {
    const std::size_t K = levels.size();
    const std::size_t n = m.size() - 1;
    std::vector<double> acc(K, 0.0);
    LevelCursor cursor(levels, m[0]);
    std::size_t s = 0;
    for (std::size_t j = 0; j <= n; ++j) {
        while (s < snapshots.size() && snapshots[s] == j) {
            std::copy(acc.begin(), acc.end(), out.begin() + s * K);
            ++s;
        }
        if (j == n) break;
        cursor.step(m[j + 1], [&](std::size_t k, double v) { acc[k] += v; });
    }
}

void occupation_levels_path(std::span<const double> m, std::span<const double> weight,
                            const LevelGrid& levels, double epsilon, bool symmetric,
                            std::span<const std::size_t> snapshots, std::span<double> out) {
    check_epsilon(epsilon);
    const std::size_t K = levels.size();
    const std::size_t n = weight.size();
    const double scale = symmetric ? 2.0 * epsilon : epsilon;
    std::vector<double> acc(K, 0.0);
    std::size_t s = 0;
    for (std::size_t j = 0; j <= n; ++j) {
        while (s < snapshots.size() && snapshots[s] == j) {
            for (std::size_t k = 0; k < K; ++k) out[s * K + k] = acc[k] / scale;
            ++s;
        }
        if (j == n) break;
        for_window_levels(levels, m[j], weight[j], epsilon, symmetric,
                          [&](std::size_t k, double w) { acc[k] += w; });
    }
}

namespace {

LocalTimeField empty_field(const PathBundle& bundle, const LevelGrid& levels,
                           std::vector<std::size_t> snapshots) {
    check_snapshots(snapshots, bundle.steps());
    LocalTimeField f;
    f.levels = levels;
    f.grid = bundle.grid;
    f.snapshots = std::move(snapshots);
    f.n_paths = bundle.n_paths;
    return f;
}

void fill_tanaka(LocalTimeField& f, const PathBundle& bundle) {
    f.tanaka = Matrix(bundle.n_paths, f.snapshots.size() * f.levels.size());
    for (std::size_t i = 0; i < bundle.n_paths; ++i)
        tanaka_levels_path(bundle.m_values.row(i), f.levels, f.snapshots, f.tanaka.row(i));
}

void fill_occupation(LocalTimeField& f, const PathBundle& bundle, double epsilon, bool symmetric) {
    check_epsilon(epsilon);
    f.epsilon = epsilon;
    f.symmetric = symmetric;
    f.occupation = Matrix(bundle.n_paths, f.snapshots.size() * f.levels.size());
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
        const auto w = qv_weights(bundle.sigma_used.row(i), bundle.grid);
        occupation_levels_path(bundle.m_values.row(i), w, f.levels, epsilon, symmetric, f.snapshots,
                               f.occupation.row(i));
    }
}

}  // namespace

LocalTimeField local_time_tanaka(const PathBundle& bundle, const LevelGrid& levels,
                                 std::vector<std::size_t> snapshots) {
    auto f = empty_field(bundle, levels, std::move(snapshots));
    fill_tanaka(f, bundle);
    return f;
}

LocalTimeField local_time_occupation(const PathBundle& bundle, const LevelGrid& levels,
                                     double epsilon, bool symmetric,
                                     std::vector<std::size_t> snapshots) {
    check_epsilon(epsilon);
    auto f = empty_field(bundle, levels, std::move(snapshots));
    fill_occupation(f, bundle, epsilon, symmetric);
    return f;
}

LocalTimeField local_time_field(const PathBundle& bundle, const LevelGrid& levels, double epsilon,
                                bool symmetric, std::vector<std::size_t> snapshots) {
    check_epsilon(epsilon);
    auto f = empty_field(bundle, levels, std::move(snapshots));
    fill_tanaka(f, bundle);
    fill_occupation(f, bundle, epsilon, symmetric);
    return f;
}

std::pair<double, double> occupation_formula_path(std::span<const double> m,
                                                  std::span<const double> weight,
                                                  const std::function<double(double)>& g,
                                                  const LevelGrid& levels) {
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    if (*lo <= levels.front() + levels.spacing() || *hi >= levels.back() - levels.spacing()) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "path range [%.4g, %.4g] is not inside level grid [%.4g, %.4g] with one "
                      "spacing of margin",
                      *lo, *hi, levels.front(), levels.back());
        throw CoverageError(buf);
    }
    double lhs = 0.0;
    for (std::size_t j = 0; j < weight.size(); ++j) lhs += g(m[j]) * weight[j];

    const std::size_t K = levels.size();
    std::vector<double> lt(K);
    const std::size_t end = m.size() - 1;
    tanaka_levels_path(m, levels, std::span<const std::size_t>(&end, 1), lt);
    double rhs = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double c = (k == 0 || k + 1 == K) ? 0.5 : 1.0;
        if (lt[k] != 0.0) rhs += c * g(levels.level(k)) * lt[k];
    }
    return {lhs, rhs * levels.spacing()};
}

OccupationFormulaResult occupation_formula_check(const PathBundle& bundle,
                                                 const std::function<double(double)>& g,
                                                 const LevelGrid& levels) {
    OccupationFormulaResult r;
    r.lhs.resize(bundle.n_paths);
    r.rhs.resize(bundle.n_paths);
    r.relative_error.resize(bundle.n_paths);
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
        const auto w = qv_weights(bundle.sigma_used.row(i), bundle.grid);
        std::tie(r.lhs[i], r.rhs[i]) = occupation_formula_path(bundle.m_values.row(i), w, g, levels);
        const double diff = std::fabs(r.lhs[i] - r.rhs[i]);
        r.relative_error[i] = diff == 0.0 ? 0.0 : diff / std::fabs(r.lhs[i]);
    }
    r.mean_relative_error = sample_stats(r.relative_error).mean;
    return r;
}

double growth_band_width(double epsilon, double sigma_high, const TimeGrid& grid) {
    const double n = static_cast<double>(grid.steps());
    return epsilon + 2.0 * sigma_high * std::sqrt(grid.mesh() * std::log(std::max(n, 1.0)));
}

std::pair<double, double> growth_set_path(std::span<const double> m, std::span<const double> weight,
                                          const LevelGrid& levels, LocalTimeEstimator estimator,
                                          double epsilon, bool symmetric, double band_width) {
    double violation = 0.0, mass = 0.0;
    const double scale = symmetric ? 2.0 * epsilon : epsilon;
    LevelCursor cursor(levels, m[0]);
    for (std::size_t j = 0; j < weight.size(); ++j) {
        auto record = [&](std::size_t k, double dl) {
            mass += dl;
            if (std::fabs(m[j] - levels.level(k)) > band_width) violation += dl;
        };
        if (estimator == LocalTimeEstimator::tanaka) {
            cursor.step(m[j + 1], record);
        } else {
            for_window_levels(levels, m[j], weight[j] / scale, epsilon, symmetric, record);
        }
    }
    return {violation, mass};
}

GrowthSetResult growth_set_check(const PathBundle& bundle, const LevelGrid& levels,
                                 LocalTimeEstimator estimator, double epsilon, double sigma_high,
                                 bool symmetric) {
    check_epsilon(epsilon);
    GrowthSetResult r;
    r.band_width = growth_band_width(epsilon, sigma_high, bundle.grid);
    r.violation.resize(bundle.n_paths);
    r.mass.resize(bundle.n_paths);
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
        const auto w = qv_weights(bundle.sigma_used.row(i), bundle.grid);
        std::tie(r.violation[i], r.mass[i]) = growth_set_path(
            bundle.m_values.row(i), w, levels, estimator, epsilon, symmetric, r.band_width);
    }
    const double total = pairwise_sum(r.mass);
    r.violation_fraction = total > 0.0 ? pairwise_sum(r.violation) / total : 0.0;
    return r;
}

double level_increment_sup_path(std::span<const double> m, double x, double y) {
    double d = 0.0, sup = 0.0;
    for (std::size_t j = 0; j + 1 < m.size(); ++j) {
        const double coef = sgn(m[j] - x) - sgn(m[j] - y);
        if (coef != 0.0) {
            d += coef * (m[j + 1] - m[j]);
            sup = std::max(sup, std::fabs(d));
        }
    }
    return sup;
}

RegularityFit fit_regularity(std::size_t order, std::vector<double> gaps,
                             std::vector<double> moments, std::vector<double> std_errors) {
    if (gaps.size() < 2 || gaps.size() != moments.size() || gaps.size() != std_errors.size())
        throw DiagnosticError("regularity fit needs at least two matched (gap, moment) pairs");
    RegularityFit r;
    r.order = order;
    double sx = 0, sy = 0;
    const double n = static_cast<double>(gaps.size());
    for (std::size_t k = 0; k < gaps.size(); ++k) {
        if (!(moments[k] > 0.0) || !std::isfinite(moments[k])) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "moment %.3g at gap %.3g cannot enter a log-log fit",
                          moments[k], gaps[k]);
            throw DiagnosticError(buf);
        }
        sx += std::log(gaps[k]);
        sy += std::log(moments[k]);
    }
    double sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < gaps.size(); ++k) {
        const double dx = std::log(gaps[k]) - sx / n;
        sxx += dx * dx;
        sxy += dx * (std::log(moments[k]) - sy / n);
    }
    if (!(sxx > 0.0)) throw DiagnosticError("gaps have zero spread");
    r.slope = sxy / sxx;
    const double p = static_cast<double>(order);
    r.calibrated_constant = moments[0] / std::pow(gaps[0], p);
    r.inequality_holds = true;
    for (std::size_t k = 0; k < gaps.size(); ++k) {
        r.bound.push_back(r.calibrated_constant * std::pow(gaps[k], p));
        if (moments[k] > r.bound.back() + 3.0 * std_errors[k]) r.inequality_holds = false;
    }
    r.gaps = std::move(gaps);
    r.moments = std::move(moments);
    r.std_errors = std::move(std_errors);
    return r;
}

RegularityFit level_regularity_check(std::span<const PathBundle* const> bundles, std::size_t order,
                                     double h0, std::size_t n_gaps, double base) {
    if (order < 2) throw InvalidArgument("moment order n must be at least 2");
    if (n_gaps < 4) throw InvalidArgument("regularity check needs at least 4 level pairs");
    if (!(h0 > 0.0)) throw InvalidArgument("largest gap must be positive");
    const int power = static_cast<int>(2 * order);
    std::vector<double> gaps, moments, ses;
    for (std::size_t g = 0; g < n_gaps; ++g) {
        const double h = std::ldexp(h0, -static_cast<int>(g));
        double best = -INFINITY, best_se = 0.0;
        for (const PathBundle* b : bundles) {
            std::vector<double> v(b->n_paths);
            for (std::size_t i = 0; i < b->n_paths; ++i)
                v[i] = std::pow(level_increment_sup_path(b->m_values.row(i), base, base + h), power);
            const auto st = sample_stats(v);
            if (st.mean > best) {
                best = st.mean;
                best_se = st.std_error;
            }
        }
        gaps.push_back(h);
        moments.push_back(best);
        ses.push_back(best_se);
    }
    return fit_regularity(order, std::move(gaps), std::move(moments), std::move(ses));
}

void write_field_csv(const LocalTimeField& field, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open " + tmp);
        out.precision(12);
        out << "level,time,mean_tanaka,mean_occupation,se\n";
        const std::size_t K = field.levels.size();
        std::vector<double> col(field.n_paths);
        for (std::size_t s = 0; s < field.snapshots.size(); ++s) {
            for (std::size_t k = 0; k < K; ++k) {
                double mt = NAN, se = NAN, mo = NAN;
                if (field.tanaka.rows()) {
                    for (std::size_t i = 0; i < field.n_paths; ++i) col[i] = field.tanaka_at(i, s, k);
                    const auto st = sample_stats(col);
                    mt = st.mean;
                    se = st.std_error;
                }
                if (field.occupation.rows()) {
                    for (std::size_t i = 0; i < field.n_paths; ++i) col[i] = field.occupation_at(i, s, k);
                    mo = sample_stats(col).mean;
                }
                out << field.levels.level(k) << ',' << field.grid.node(field.snapshots[s]) << ','
                    << mt << ',' << mo << ',' << se << '\n';
            }
        }
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

FieldSummary summarize(const LocalTimeField& field) {
    FieldSummary s;
    const std::size_t cols = field.snapshots.size() * field.levels.size();
    const bool has_t = field.tanaka.rows() > 0, has_o = field.occupation.rows() > 0;
    std::vector<double> col(field.n_paths);
    double l1 = 0.0;
    s.max_mean_tanaka = -INFINITY;
    s.min_tanaka = INFINITY;
    for (std::size_t c = 0; c < cols; ++c) {
        double mt = 0.0, mo = 0.0;
        if (has_t) {
            for (std::size_t i = 0; i < field.n_paths; ++i) {
                col[i] = field.tanaka(i, c);
                s.min_tanaka = std::min(s.min_tanaka, col[i]);
            }
            mt = pairwise_sum(col) / static_cast<double>(field.n_paths);
            if (mt > s.max_mean_tanaka) {
                s.max_mean_tanaka = mt;
                s.level_of_max = field.levels.level(c % field.levels.size());
            }
        }
        if (has_o) {
            for (std::size_t i = 0; i < field.n_paths; ++i) col[i] = field.occupation(i, c);
            mo = pairwise_sum(col) / static_cast<double>(field.n_paths);
            s.max_mean_occupation = std::max(s.max_mean_occupation, mo);
        }
        if (has_t && has_o) {
            l1 += std::fabs(mt - mo);
            s.discrepancy_sup = std::max(s.discrepancy_sup, std::fabs(mt - mo));
        }
    }
    if (!has_t) s.max_mean_tanaka = s.min_tanaka = 0.0;
    s.discrepancy_l1 = cols ? l1 / static_cast<double>(cols) : 0.0;
    return s;
}

}  // namespace gmlab
