#pragma once

// Stochastic integrals against M on the simulation grid, the two integrand
// norms (against dt and against d<M>), and the convergence diagnostics built
// on them.
//
// Two layers: per-path kernels on spans, used by the streaming verification
// harness, and bundle-level operations that apply them row by row.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gmlab/matrix.hpp"
#include "gmlab/path_engine.hpp"
#include "gmlab/stats.hpp"

namespace gmlab {

/// eta = sum_j xi_j 1[t_j, t_{j+1}) with xi_j computed from the path up to t_j.
struct SimpleProcess {
    std::vector<double> breakpoints;  // t_0 < ... < t_K within [0, T]
    /// (t_j, path values m_0..m_{k(j)} at grid nodes up to t_j) -> xi_j.
    std::function<double(double t, std::span<const double> path_so_far)> value;
};

/// Borel integrand f(M_t) with a declared linear-growth constant:
/// |f(x)| <= growth_bound * (1 + |x|).
struct StateIntegrand {
    std::function<double(double)> f;
    double growth_bound = 1.0;
};

/// Left-point values of eta at every step, n_paths x N. Breakpoints snap to
/// grid nodes within mesh/100; farther ones throw GridMismatch.
Matrix evaluate_simple(const SimpleProcess& eta, const PathBundle& bundle);

/// f(M_{t_j}) at every step, n_paths x N. Throws DomainError on non-finite
/// values or a broken growth bound.
Matrix evaluate_state(const StateIntegrand& f, const PathBundle& bundle);

/// Cumulative left-point sums sum_{j<k} xi_j dM_j, n_paths x (N+1).
Matrix integrate_simple(const SimpleProcess& eta, const PathBundle& bundle);

/// Cumulative sums sum_{j<k} f(M_{t_j}) dM_j, n_paths x (N+1).
Matrix integrate_state(const StateIntegrand& f, const PathBundle& bundle);

/// Cumulative integral of precomputed left-point values, n_paths x (N+1).
Matrix integrate_values(const Matrix& values, const PathBundle& bundle);

// Per-path kernels.

/// Terminal value sum_j f(m_j) (m_{j+1} - m_j). Reads m[0..n].
double state_integral_path(const std::function<double(double)>& f, std::span<const double> m);

/// sum_j |eta_j|^p dt_j.
double power_dt_path(std::span<const double> eta, const TimeGrid& grid, double p);

/// sum_j |eta_j|^p sigma_j^2 dt_j.
double power_dqv_path(std::span<const double> eta, std::span<const double> sigma,
                      const TimeGrid& grid, double p);

/// Left-point values and the matching bundle, one per strategy.
struct EvaluatedIntegrand {
    const PathBundle* bundle;
    Matrix values;  // n_paths x N
};

/// Upper estimate over several strategies: the largest per-strategy mean.
struct NormEstimate {
    double value = 0.0;             // (max mean)^(1/p)
    std::size_t argmax = 0;
    std::vector<SampleStats> means;  // per strategy, before the 1/p power
};

/// (E^[ int |eta|^p dt ])^(1/p). Throws InvalidArgument when p < 1.
NormEstimate m_norm(std::span<const EvaluatedIntegrand> eta, double p);

/// (E^[ int |eta|^p d<M> ])^(1/p), with d<M> = sigma^2 dt.
NormEstimate mbar_norm(std::span<const EvaluatedIntegrand> eta, double p);

/// Norm from per-path totals, one vector per strategy.
NormEstimate norm_from_totals(std::span<const std::vector<double>> totals, double p);

/// A sequence of upper estimates indexed by a refinement parameter.
struct DecaySequence {
    std::vector<double> values;      // upper estimate per index
    std::vector<double> std_errors;  // SE of the maximizing strategy
    bool nonincreasing = false;      // up to 2 SE between neighbours
    bool decayed = false;            // last <= fraction * first (or all zero)
};

/// Classifies a sequence of estimates.
DecaySequence make_decay_sequence(std::vector<double> values, std::vector<double> std_errors,
                                  double fraction);

/// E^[ int |eta|^p 1{|eta| > N_k} d<M> ] over increasing thresholds N_k.
DecaySequence tail_truncation_decay(std::span<const EvaluatedIntegrand> eta, double p,
                                    std::span<const double> thresholds, double fraction = 0.1);

/// E^[ int |phi_n(M) - phi(M)|^2 d<M> ] for each approximant phi_n.
DecaySequence dominated_convergence_check(std::span<const StateIntegrand> approximants,
                                          const StateIntegrand& limit,
                                          std::span<const PathBundle* const> bundles,
                                          double fraction = 0.1);

/// Constants of the occupation bound E^[int |g(M)| d<M>] <= C ||g||_p with
/// C = C1 * C2^(1/p), C1 = (E^[<M>_T])^((p-1)/p), C2 = E^[|M_T - M_0|].
struct KrylovConstants {
    double p = 1.0;
    double expected_qv = 0.0;       // E^[<M>_T]
    double expected_abs_move = 0.0; // E^[|M_T - M_0|]
    double c1 = 1.0;
    double c2 = 0.0;
    double c = 0.0;
};

KrylovConstants krylov_constants(double expected_qv, double expected_abs_move, double p);

/// C * ||g||_{L^p}.
double krylov_bound(const KrylovConstants& k, double g_lp_norm);

/// Constants estimated from bundles (sup over strategies of the two means).
KrylovConstants krylov_constants(std::span<const PathBundle* const> bundles, double p);

}  // namespace gmlab
