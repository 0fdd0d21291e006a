#include "gmlab/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "gmlab/errors.hpp"

namespace gmlab {

namespace {

void require_order(double p) {
    if (!(p >= 1.0) || !std::isfinite(p)) throw InvalidArgument("norm order p must be >= 1");
}

double abs_pow(double x, double p) {
    const double a = std::fabs(x);
    return p == 1.0 ? a : p == 2.0 ? a * a : std::pow(a, p);
}

double checked(const StateIntegrand& f, double x) {
    const double v = f.f(x);
    if (!std::isfinite(v)) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "integrand is not finite at x = %.17g", x);
        throw DomainError(buf);
    }
    if (std::fabs(v) > f.growth_bound * (1.0 + std::fabs(x)) * (1.0 + 1e-12)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "integrand value %.6g at x = %.6g breaks growth bound %.6g",
                      v, x, f.growth_bound);
        throw DomainError(buf);
    }
    return v;
}

// Node index of each breakpoint, snapped within mesh/100.
std::vector<std::size_t> snap_breakpoints(const std::vector<double>& bps, const TimeGrid& grid) {
    const auto nodes = grid.nodes();
    const double tol = grid.mesh() / 100.0;
    std::vector<std::size_t> idx;
    idx.reserve(bps.size());
    for (double t : bps) {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
        std::size_t k = static_cast<std::size_t>(it - nodes.begin());
        if (k == nodes.size() || (k > 0 && t - nodes[k - 1] < nodes[k] - t)) --k;
        if (std::fabs(nodes[k] - t) > tol) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "breakpoint %.9g is %.3g from the nearest grid node %.9g (tolerance %.3g)",
                          t, std::fabs(nodes[k] - t), nodes[k], tol);
            throw GridMismatch(buf);
        }
        if (!idx.empty() && k <= idx.back())
            throw GridMismatch("breakpoints collapse onto the same grid node");
        idx.push_back(k);
    }
    return idx;
}

Matrix cumulative(const Matrix& values, const PathBundle& bundle) {
    const std::size_t n = bundle.steps();
    if (values.rows() != bundle.n_paths || values.cols() != n)
        throw InvalidArgument("integrand shape does not match the bundle");
    Matrix out(bundle.n_paths, n + 1);
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
        const auto v = values.row(i);
        const auto inc = bundle.increments.row(i);
        auto o = out.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += v[j] * inc[j];
            o[j + 1] = s;
        }
    }
    return out;
}

SampleStats per_path_stats(const EvaluatedIntegrand& e, double p, bool against_qv) {
    const PathBundle& b = *e.bundle;
    std::vector<double> totals(b.n_paths);
    for (std::size_t i = 0; i < b.n_paths; ++i) {
        totals[i] = against_qv ? power_dqv_path(e.values.row(i), b.sigma_used.row(i), b.grid, p)
                               : power_dt_path(e.values.row(i), b.grid, p);
    }
    return sample_stats(totals);
}

NormEstimate finish(std::vector<SampleStats> means, double p) {
    NormEstimate out;
    out.means = std::move(means);
    double best = -INFINITY;
    for (std::size_t s = 0; s < out.means.size(); ++s) {
        if (out.means[s].mean > best) {
            best = out.means[s].mean;
            out.argmax = s;
        }
    }
    out.value = std::pow(std::max(best, 0.0), 1.0 / p);
    return out;
}

NormEstimate norm(std::span<const EvaluatedIntegrand> eta, double p, bool against_qv) {
    require_order(p);
    if (eta.empty()) throw InvalidArgument("norm needs at least one strategy");
    std::vector<SampleStats> means;
    for (const auto& e : eta) means.push_back(per_path_stats(e, p, against_qv));
    return finish(std::move(means), p);
}

}  // namespace

Matrix evaluate_simple(const SimpleProcess& eta, const PathBundle& bundle) {
    const std::size_t n = bundle.steps();
    const auto idx = snap_breakpoints(eta.breakpoints, bundle.grid);
    Matrix out(bundle.n_paths, n);
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
        const auto m = bundle.m_values.row(i);
        auto o = out.row(i);
        for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
            const double xi = eta.value(bundle.grid.node(idx[k]), m.first(idx[k] + 1));
            if (!std::isfinite(xi)) throw DomainError("simple process value is not finite");
            for (std::size_t j = idx[k]; j < idx[k + 1]; ++j) o[j] = xi;
        }
    }
    return out;
}

Matrix evaluate_state(const StateIntegrand& f, const PathBundle& bundle) {
    const std::size_t n = bundle.steps();
    Matrix out(bundle.n_paths, n);
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
        const auto m = bundle.m_values.row(i);
        auto o = out.row(i);
        for (std::size_t j = 0; j < n; ++j) o[j] = checked(f, m[j]);
    }
    return out;
}

Matrix integrate_values(const Matrix& values, const PathBundle& bundle) {
    return cumulative(values, bundle);
}

Matrix integrate_simple(const SimpleProcess& eta, const PathBundle& bundle) {
    return cumulative(evaluate_simple(eta, bundle), bundle);
}

Matrix integrate_state(const StateIntegrand& f, const PathBundle& bundle) {
    return cumulative(evaluate_state(f, bundle), bundle);
}

double state_integral_path(const std::function<double(double)>& f, std::span<const double> m) {
    double s = 0.0;
    for (std::size_t j = 0; j + 1 < m.size(); ++j) s += f(m[j]) * (m[j + 1] - m[j]);
    return s;
}

double power_dt_path(std::span<const double> eta, const TimeGrid& grid, double p) {
    double s = 0.0;
    for (std::size_t j = 0; j < eta.size(); ++j) s += abs_pow(eta[j], p) * grid.dt(j);
    return s;
}

double power_dqv_path(std::span<const double> eta, std::span<const double> sigma,
                      const TimeGrid& grid, double p) {
    double s = 0.0;
    for (std::size_t j = 0; j < eta.size(); ++j)
        s += abs_pow(eta[j], p) * (sigma[j] * sigma[j] * grid.dt(j));
    return s;
}

NormEstimate m_norm(std::span<const EvaluatedIntegrand> eta, double p) { return norm(eta, p, false); }

NormEstimate mbar_norm(std::span<const EvaluatedIntegrand> eta, double p) { return norm(eta, p, true); }

NormEstimate norm_from_totals(std::span<const std::vector<double>> totals, double p) {
    require_order(p);
    if (totals.empty()) throw InvalidArgument("norm needs at least one strategy");
    std::vector<SampleStats> means;
    for (const auto& t : totals) means.push_back(sample_stats(t));
    return finish(std::move(means), p);
}

DecaySequence make_decay_sequence(std::vector<double> values, std::vector<double> std_errors,
                                  double fraction) {
    DecaySequence d;
    d.values = std::move(values);
    d.std_errors = std::move(std_errors);
    d.nonincreasing = true;
    for (std::size_t k = 1; k < d.values.size(); ++k) {
        const double slack = 2.0 * std::hypot(d.std_errors[k], d.std_errors[k - 1]);
        if (d.values[k] > d.values[k - 1] + slack) d.nonincreasing = false;
    }
    d.decayed = d.values.empty() || d.values.back() == 0.0 ||
                d.values.back() <= fraction * d.values.front();
    return d;
}

DecaySequence tail_truncation_decay(std::span<const EvaluatedIntegrand> eta, double p,
                                    std::span<const double> thresholds, double fraction) {
    require_order(p);
    for (std::size_t k = 1; k < thresholds.size(); ++k) {
        if (!(thresholds[k] > thresholds[k - 1]))
            throw InvalidArgument("truncation thresholds must increase");
    }
    std::vector<double> values, ses;
    for (double level : thresholds) {
        double best = -INFINITY, best_se = 0.0;
        for (const auto& e : eta) {
            const PathBundle& b = *e.bundle;
            std::vector<double> totals(b.n_paths);
            for (std::size_t i = 0; i < b.n_paths; ++i) {
                const auto v = e.values.row(i);
                const auto sig = b.sigma_used.row(i);
                double s = 0.0;
                for (std::size_t j = 0; j < v.size(); ++j) {
                    if (std::fabs(v[j]) > level) s += abs_pow(v[j], p) * (sig[j] * sig[j] * b.grid.dt(j));
                }
                totals[i] = s;
            }
            const auto st = sample_stats(totals);
            if (st.mean > best) {
                best = st.mean;
                best_se = st.std_error;
            }
        }
        values.push_back(best);
        ses.push_back(best_se);
    }
    return make_decay_sequence(std::move(values), std::move(ses), fraction);
}

DecaySequence dominated_convergence_check(std::span<const StateIntegrand> approximants,
                                          const StateIntegrand& limit,
                                          std::span<const PathBundle* const> bundles,
                                          double fraction) {
    std::vector<double> values, ses;
    for (const auto& phi_n : approximants) {
        double best = -INFINITY, best_se = 0.0;
        for (const PathBundle* b : bundles) {
            std::vector<double> totals(b->n_paths);
            for (std::size_t i = 0; i < b->n_paths; ++i) {
                const auto m = b->m_values.row(i);
                const auto sig = b->sigma_used.row(i);
                double s = 0.0;
                for (std::size_t j = 0; j < b->steps(); ++j) {
                    const double d = checked(phi_n, m[j]) - checked(limit, m[j]);
                    s += d * d * (sig[j] * sig[j] * b->grid.dt(j));
                }
                totals[i] = s;
            }
            const auto st = sample_stats(totals);
            if (st.mean > best) {
                best = st.mean;
                best_se = st.std_error;
            }
        }
        values.push_back(best);
        ses.push_back(best_se);
    }
    return make_decay_sequence(std::move(values), std::move(ses), fraction);
}

KrylovConstants krylov_constants(double expected_qv, double expected_abs_move, double p) {
    require_order(p);
    KrylovConstants k;
    k.p = p;
    k.expected_qv = expected_qv;
    k.expected_abs_move = expected_abs_move;
    k.c1 = std::pow(expected_qv, (p - 1.0) / p);
    k.c2 = expected_abs_move;
    k.c = k.c1 * std::pow(k.c2, 1.0 / p);
    return k;
}

double krylov_bound(const KrylovConstants& k, double g_lp_norm) { return k.c * g_lp_norm; }

KrylovConstants krylov_constants(std::span<const PathBundle* const> bundles, double p) {
    double qv = 0.0, move = 0.0;
    for (const PathBundle* b : bundles) {
        const std::size_t n = b->steps();
        std::vector<double> q(b->n_paths), a(b->n_paths);
        for (std::size_t i = 0; i < b->n_paths; ++i) {
            q[i] = b->qv_exact(i, n);
            a[i] = std::fabs(b->m_values(i, n) - b->m_values(i, 0));
        }
        qv = std::max(qv, sample_stats(q).mean);
        move = std::max(move, sample_stats(a).mean);
    }
    return krylov_constants(qv, move, p);
}

}  // namespace gmlab
