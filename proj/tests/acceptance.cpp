// Acceptance run: the default suite (band [0.5, 1], T = 1, k = 5, seed 42)
// and one pass/fail line per acceptance criterion. Exit status is nonzero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "gmlab/local_time.hpp"
#include "gmlab/stats.hpp"
#include "gmlab/verify.hpp"

using namespace gmlab;

namespace {

const CheckReport* find_report(const SuiteResult& r, const std::string& name) {
    for (const auto& c : r.reports)
        if (c.name == name) return &c;
    return nullptr;
}

struct Criterion {
    Criterion(int id_, std::string title_) : id(id_), title(std::move(title_)) {}

    int id;
    std::string title;
    bool pass = true;
    std::string detail;

    // Requires a metric from the suite report; a missing metric or a check
    // error fails the criterion.
    void need(const SuiteResult& r, const std::string& check, const std::string& metric) {
        const CheckReport* c = find_report(r, check);
        if (!c) return fail(check + " missing");
        if (!c->error.empty()) return fail(check + " error: " + c->error);
        for (const auto& m : c->metrics) {
            if (m.name != metric) continue;
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s=%.4g (%s %.4g)%s", metric.c_str(), m.value,
                          m.relation.c_str(), m.bound, m.pass ? "" : " !");
            note(buf);
            pass = pass && m.pass;
            return;
        }
        fail(check + "." + metric + " missing");
    }
    void expect(bool ok, const std::string& text) {
        note(text + (ok ? "" : " !"));
        pass = pass && ok;
    }
    void fail(const std::string& text) {
        pass = false;
        note(text);
    }
    void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }
    void print() const {
        std::printf("[%s] criterion %d %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
        std::fflush(stdout);
    }
};

// Every 12-step walk with steps +-1/4 in exact integer arithmetic against the
// library's discrete Tanaka terms for the call at K = 0.2 on the path lattice.
bool binomial_oracle_matches() {
    const double strike = snap_level(0.2);
    const auto k = static_cast<std::int64_t>(std::ldexp(strike, 40));
    const std::int64_t h = (std::int64_t{1} << 40) / 4;
    const auto levels = LevelGrid::centered(6.0, 0.02);
    const auto call = convex_call(strike);
    for (std::uint32_t bits = 0; bits < 4096; ++bits) {
        std::int64_t x = 0, stochastic = 0, signed_sum = 0;
        std::vector<double> m{0.0};
        for (int j = 0; j < 12; ++j) {
            const std::int64_t d = (bits >> j) & 1 ? h : -h;
            if (x > k) stochastic += d;
            signed_sum += x > k ? d : -d;
            x += d;
            m.push_back(std::ldexp(static_cast<double>(x), -40));
        }
        const std::int64_t local_time = std::llabs(x - k) - std::llabs(k) - signed_sum;
        const std::int64_t residual = std::max<std::int64_t>(x - k, 0) - stochastic - local_time / 2;
        if (residual != 0) return false;
        if (tanaka_crossing_path(m, strike) != std::ldexp(static_cast<double>(local_time), -40)) return false;
        if (tanaka_residual_path(m, call, levels) != 0.0) return false;
    }
    return true;
}

}  // namespace

int main() {
    SuiteConfig config;  // defaults are the acceptance fixture
    std::printf("running default suite (seed %llu)\n", static_cast<unsigned long long>(config.seed));
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    const SuiteResult first = run_suite(config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto report_one = suite_report_json(first, config).dump();

    std::vector<Criterion> out;

    Criterion c1{1, "exact identities"};
    c1.need(first, "quadratic_variation", "telescoping_max_relative_error");
    c1.need(first, "tanaka", "abs_residual_max");
    c1.need(first, "norm_sandwich", "per_path_violations");
    c1.need(first, "norm_sandwich", "norm_violations");
    c1.need(first, "local_time", "occupation_negative_entries");
    c1.need(first, "local_time", "occupation_time_decreases");
    out.push_back(c1);

    Criterion c2{2, "upper/lower expectation closed forms"};
    c2.need(first, "expectation", "upper_square_abs_error");
    c2.need(first, "expectation", "lower_square_abs_error");
    c2.need(first, "expectation", "upper_abs_abs_error");
    c2.need(first, "expectation", "upper_linear_abs_z");
    c2.need(first, "expectation", "lower_linear_abs_z");
    out.push_back(c2);

    Criterion c3{3, "PDE agreement"};
    c3.need(first, "expectation", "pde_square_abs_error");
    c3.need(first, "expectation", "pde_neg_square_abs_error");
    c3.need(first, "expectation", "pde_abs_abs_error");
    c3.need(first, "expectation", "mc_sin_minus_pde_minus_3se");
    out.push_back(c3);

    Criterion c4{4, "expected local time at 0"};
    c4.need(first, "local_time", "local_time_relative_error");
    out.push_back(c4);

    Criterion c5{5, "cross-estimator convergence"};
    c5.need(first, "local_time", "discrepancy_decreasing");
    c5.need(first, "local_time", "final_discrepancy_fraction");
    out.push_back(c5);

    Criterion c6{6, "occupation formula, g = 1"};
    c6.need(first, "occupation_formula", "g_one_mean_relative_error");
    out.push_back(c6);

    Criterion c7{7, "convex Tanaka, call K = 0.2"};
    c7.need(first, "tanaka", "call_mean_abs_residual");
    c7.need(first, "tanaka", "call_residual_strictly_decreasing");
    c7.expect(binomial_oracle_matches(), "12-step binomial oracle exact");
    out.push_back(c7);

    Criterion c8{8, "Krylov inequality"};
    for (const char* m : {"indicator_lhs_l=1", "indicator_lhs_l=0.25", "indicator_lhs_l=0.0625"})
        c8.need(first, "krylov", m);
    out.push_back(c8);

    Criterion c9{9, "bicontinuity moment scaling"};
    c9.need(first, "bicontinuity", "fitted_slope");
    c9.need(first, "bicontinuity", "calibrated_inequality_holds");
    out.push_back(c9);

    for (const auto& c : out) c.print();

    Criterion c10{10, "reproducibility"};
    {
        const SuiteResult again = run_suite(config);
        c10.expect(suite_report_json(again, config).dump() == report_one, "rerun byte-identical");
        SuiteConfig wide = config;
        wide.workers = 8;
        const auto eight = suite_report_json(run_suite(wide), wide);
        const auto one = nlohmann::ordered_json::parse(report_one);
        c10.expect(eight["checks"] == one["checks"] && eight["config"] == one["config"],
                   "workers 1 vs 8 identical");
        char buf[96];
        std::snprintf(buf, sizeof buf, "suite runtime %.0f s <= 600 s", seconds);
        c10.expect(seconds <= 600.0, buf);
    }
    c10.print();
    out.push_back(c10);

    int failed = 0;
    for (const auto& c : out) failed += c.pass ? 0 : 1;
    std::printf("%d of %zu criteria pass\n", static_cast<int>(out.size()) - failed, out.size());
    return failed == 0 ? 0 : 1;
}
