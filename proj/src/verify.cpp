#include "gmlab/verify.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>

#include "gmlab/calculus.hpp"
#include "gmlab/errors.hpp"
#include "gmlab/expectation.hpp"
#include "gmlab/path_engine.hpp"
#include "gmlab/stats.hpp"

namespace gmlab {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_real(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ConfigError("'" + key + "': '" + text + "' is not a number");
    return v;
}

std::uint64_t parse_count(const std::string& key, const std::string& text) {
    const double v = parse_real(key, text);
    if (!(v >= 0.0) || v != std::floor(v) || v > 9007199254740992.0)
        throw ConfigError("'" + key + "': '" + text + "' is not a nonnegative integer");
    return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("'" + key + "': '" + text + "' is not a boolean");
}

template <class T, class Parse>
std::vector<T> parse_vector(const std::string& key, const std::string& text, Parse parse) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) out.push_back(static_cast<T>(parse(key, item)));
    return out;
}

using Setter = void (*)(SuiteConfig&, const std::string&, const std::string&);

const std::vector<std::pair<std::string, Setter>>& setters() {
#define GMLAB_REAL(field) \
    {#field, [](SuiteConfig& c, const std::string& k, const std::string& v) { c.field = parse_real(k, v); }}
#define GMLAB_COUNT(field) \
    {#field, [](SuiteConfig& c, const std::string& k, const std::string& v) { c.field = parse_count(k, v); }}
#define GMLAB_REALS(field)                                                       \
    {#field, [](SuiteConfig& c, const std::string& k, const std::string& v) { \
         c.field = parse_vector<double>(k, v, parse_real);                       \
     }}
    static const std::vector<std::pair<std::string, Setter>> table = {
        GMLAB_REAL(sigma_low),
        GMLAB_REAL(sigma_high),
        GMLAB_REAL(horizon),
        GMLAB_COUNT(family_k),
        GMLAB_REAL(pivot),
        {"strict_band",
         [](SuiteConfig& c, const std::string& k, const std::string& v) {
             c.strict_band = parse_bool(k, v);
         }},
        GMLAB_COUNT(seed),
        GMLAB_COUNT(workers),
        GMLAB_COUNT(steps),
        {"ladder",
         [](SuiteConfig& c, const std::string& k, const std::string& v) {
             c.ladder = parse_vector<std::size_t>(k, v, parse_count);
         }},
        GMLAB_COUNT(paths),
        GMLAB_COUNT(ladder_paths),
        GMLAB_COUNT(expectation_steps),
        GMLAB_COUNT(expectation_paths),
        GMLAB_COUNT(bicontinuity_paths),
        GMLAB_REALS(epsilons),
        GMLAB_REAL(level_spacing),
        GMLAB_REAL(level_half_width),
        GMLAB_COUNT(bicontinuity_order),
        GMLAB_REAL(bicontinuity_h0),
        GMLAB_COUNT(bicontinuity_gaps),
        GMLAB_REALS(krylov_lengths),
        GMLAB_REAL(krylov_p),
        GMLAB_REAL(call_strike),
        GMLAB_REALS(pde_dx),
        {"checks",
         [](SuiteConfig& c, const std::string&, const std::string& v) { c.checks = split_list(v); }},
        {"skip",
         [](SuiteConfig& c, const std::string&, const std::string& v) { c.skip = split_list(v); }},
        GMLAB_REAL(tol_identity),
        GMLAB_REAL(tol_square),
        GMLAB_REAL(tol_neg_square),
        GMLAB_REAL(tol_abs),
        GMLAB_REAL(tol_pde),
        GMLAB_REAL(tol_local_time),
        GMLAB_REAL(tol_cross),
        GMLAB_REAL(tol_occupation),
        GMLAB_REAL(tol_call),
        GMLAB_REAL(tol_growth),
    };
#undef GMLAB_REAL
#undef GMLAB_COUNT
#undef GMLAB_REALS
    return table;
}

std::string join(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
    return out;
}

template <class T>
bool strictly_increasing(const std::vector<T>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) return false;
    return true;
}

template <class T>
bool strictly_decreasing(const std::vector<T>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

}  // namespace

void SuiteConfig::set(const std::string& raw_key, const std::string& value) {
    std::string key = trim(raw_key);
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "T") key = "horizon";
    for (const auto& [name, setter] : setters()) {
        if (name == key) {
            setter(*this, key, value);
            return;
        }
    }
    std::vector<std::string> keys;
    for (const auto& [name, setter] : setters()) keys.push_back(name);
    throw ConfigError("unknown configuration key '" + raw_key + "'; valid keys: " + join(keys));
}

VolatilityBand SuiteConfig::band() const {
    try {
        return VolatilityBand::make(sigma_low, sigma_high);
    } catch (const InvalidArgument& e) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "volatility band [%g, %g]: ", sigma_low, sigma_high);
        throw ConfigError(buf + std::string(e.what()));
    }
}

std::vector<std::size_t> SuiteConfig::resolved_ladder() const {
    if (!ladder.empty()) return ladder;
    std::vector<std::size_t> out;
    for (std::size_t n : {steps / 16, steps / 4, steps})
        if (n >= 1 && (out.empty() || n > out.back())) out.push_back(n);
    return out;
}

double SuiteConfig::resolved_half_width() const {
    return level_half_width > 0.0 ? level_half_width : 6.0 * sigma_high * std::sqrt(horizon);
}

std::vector<std::string> SuiteConfig::enabled_checks() const {
    const bool all = std::find(checks.begin(), checks.end(), "all") != checks.end();
    std::vector<std::string> out;
    for (const auto& name : check_names()) {
        const bool wanted = all || std::find(checks.begin(), checks.end(), name) != checks.end();
        const bool skipped = std::find(skip.begin(), skip.end(), name) != skip.end();
        if (wanted && !skipped) out.push_back(name);
    }
    return out;
}

void SuiteConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    (void)band();
    if (!(horizon > 0.0) || !std::isfinite(horizon)) fail("horizon T must be positive");
    if (family_k < 2) fail("family_k must be at least 2");
    if (!std::isfinite(pivot)) fail("pivot must be finite");
    if (workers < 1) fail("workers must be at least 1");
    if (steps < 1) fail("steps must be at least 1");
    if (expectation_steps < 1) fail("expectation_steps must be at least 1");
    if (paths < 1 || ladder_paths < 1 || expectation_paths < 1 || bicontinuity_paths < 1)
        fail("path counts must be at least 1");
    const auto lad = resolved_ladder();
    if (lad.empty() || lad.front() < 1 || !strictly_increasing(lad) || lad.back() != steps)
        fail("ladder must be strictly increasing, start at >= 1 and end at steps");
    if (epsilons.empty() || epsilons.back() <= 0.0 || !strictly_decreasing(epsilons))
        fail("epsilons must be positive and strictly decreasing");
    if (!(level_spacing > 0.0)) fail("level_spacing must be positive");
    if (level_half_width < 0.0) fail("level_half_width must be >= 0");
    if (!(resolved_half_width() > 2.0 * level_spacing)) fail("level grid is narrower than two spacings");
    if (bicontinuity_order < 2) fail("bicontinuity_order must be at least 2");
    if (bicontinuity_gaps < 4) fail("bicontinuity_gaps must be at least 4");
    if (!(bicontinuity_h0 > 0.0)) fail("bicontinuity_h0 must be positive");
    if (krylov_lengths.empty() || krylov_lengths.back() <= 0.0 || !strictly_decreasing(krylov_lengths))
        fail("krylov_lengths must be positive and strictly decreasing");
    if (!(krylov_p >= 1.0)) fail("krylov_p must be at least 1");
    if (!std::isfinite(call_strike)) fail("call_strike must be finite");
    if (pde_dx.empty() || pde_dx.back() <= 0.0 || !strictly_decreasing(pde_dx))
        fail("pde_dx must be positive and strictly decreasing");
    for (double t : {tol_identity, tol_square, tol_neg_square, tol_abs, tol_pde, tol_local_time,
                     tol_cross, tol_occupation, tol_call, tol_growth})
        if (!(t >= 0.0)) fail("tolerances must be nonnegative");
    for (const auto* list : {&checks, &skip}) {
        for (const auto& name : *list) {
            if (name == "all" && list == &checks) continue;
            if (std::find(check_names().begin(), check_names().end(), name) == check_names().end())
                fail("unknown check '" + name + "'; valid checks: all, " + join(check_names()));
        }
    }
}

json SuiteConfig::echo() const {
    json j;
    j["sigma_low"] = sigma_low;
    j["sigma_high"] = sigma_high;
    j["horizon"] = horizon;
    j["family_k"] = family_k;
    j["pivot"] = pivot;
    j["strict_band"] = strict_band;
    j["seed"] = seed;
    j["steps"] = steps;
    j["ladder"] = resolved_ladder();
    j["paths"] = paths;
    j["ladder_paths"] = ladder_paths;
    j["expectation_steps"] = expectation_steps;
    j["expectation_paths"] = expectation_paths;
    j["bicontinuity_paths"] = bicontinuity_paths;
    j["epsilons"] = epsilons;
    j["level_spacing"] = level_spacing;
    j["level_half_width"] = resolved_half_width();
    j["bicontinuity_order"] = bicontinuity_order;
    j["bicontinuity_h0"] = bicontinuity_h0;
    j["bicontinuity_gaps"] = bicontinuity_gaps;
    j["krylov_lengths"] = krylov_lengths;
    j["krylov_p"] = krylov_p;
    j["call_strike"] = call_strike;
    j["pde_dx"] = pde_dx;
    j["checks"] = checks;
    j["skip"] = skip;
    j["tol_identity"] = tol_identity;
    j["tol_square"] = tol_square;
    j["tol_neg_square"] = tol_neg_square;
    j["tol_abs"] = tol_abs;
    j["tol_pde"] = tol_pde;
    j["tol_local_time"] = tol_local_time;
    j["tol_cross"] = tol_cross;
    j["tol_occupation"] = tol_occupation;
    j["tol_call"] = tol_call;
    j["tol_growth"] = tol_growth;
    return j;
}

// ---------------------------------------------------------------------------
// Reports

void CheckReport::add(std::string metric, double value, std::string relation, double bound) {
    bool ok = false;
    if (relation == "<=") ok = value <= bound;
    else if (relation == ">=") ok = value >= bound;
    else if (relation == "==") ok = value == bound;
    else throw InvalidArgument("unknown metric relation '" + relation + "'");
    metrics.push_back({std::move(metric), value, std::move(relation), bound, ok});
    passed = passed && ok;
}

void CheckReport::info(std::string metric, double value) {
    metrics.push_back({std::move(metric), value, "info", 0.0, true});
}

// ---------------------------------------------------------------------------
// Convex functions for the Tanaka check

void ConvexFunction::validate(const LevelGrid& levels) const {
    for (const auto& [a, w] : atoms) {
        if (!(w >= 0.0) || !std::isfinite(a))
            throw InvalidArgument("second-derivative measure of '" + name +
                                  "' has negative mass: the function is not convex");
    }
    if (density) {
        for (double a : levels.levels()) {
            if (a < density_lo || a > density_hi) continue;
            if (!(density(a) >= 0.0))
                throw InvalidArgument("second-derivative density of '" + name +
                                      "' is negative: the function is not convex");
        }
    }
}

ConvexFunction convex_abs(double a) {
    ConvexFunction f;
    f.name = "abs";
    f.f = [a](double x) { return std::fabs(x - a); };
    f.left_derivative = [a](double x) { return sgn(x - a); };
    f.atoms = {{a, 2.0}};
    return f;
}

ConvexFunction convex_square() {
    ConvexFunction f;
    f.name = "square";
    f.f = [](double x) { return x * x; };
    f.left_derivative = [](double x) { return 2.0 * x; };
    f.density = [](double) { return 2.0; };
    f.density_lo = -INFINITY;
    f.density_hi = INFINITY;
    return f;
}

ConvexFunction convex_call(double strike) {
    ConvexFunction f;
    f.name = "call";
    f.f = [strike](double x) { return std::max(x - strike, 0.0); };
    f.left_derivative = [strike](double x) { return x > strike ? 1.0 : 0.0; };
    f.atoms = {{strike, 1.0}};
    return f;
}

double tanaka_residual_path(std::span<const double> m, const ConvexFunction& f,
                            const LevelGrid& levels) {
    const std::size_t n = m.size() - 1;
    const double stochastic = state_integral_path(f.left_derivative, m);
    double measure = 0.0;
    for (const auto& [a, w] : f.atoms) measure += w * tanaka_crossing_path(m, a);
    if (f.density) {
        thread_local std::vector<double> lt;
        lt.resize(levels.size());
        const std::size_t snapshot[] = {n};
        tanaka_levels_path(m, levels, snapshot, lt);
        std::size_t k0 = levels.size(), k1 = 0;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            if (levels.level(k) < f.density_lo || levels.level(k) > f.density_hi) continue;
            k0 = std::min(k0, k);
            k1 = k + 1;
        }
        double acc = 0.0;
        for (std::size_t k = k0; k < k1; ++k) {
            const double c = (k == k0 || k + 1 == k1) ? 0.5 : 1.0;
            if (lt[k] != 0.0) acc += c * f.density(levels.level(k)) * lt[k];
        }
        measure += acc * levels.spacing();
    }
    return f.f(m[n]) - f.f(m[0]) - stochastic - 0.5 * measure;
}

// ---------------------------------------------------------------------------
// Shared simulation passes

namespace {

struct PathView {
    std::span<const double> m;       // N + 1
    std::span<const double> inc;     // N
    std::span<const double> sigma;   // N
    std::span<const double> qv;      // N + 1
    std::span<const double> weight;  // N, sigma^2 dt
    const TimeGrid& grid;
};

using PathFn = std::function<void(const PathView&, std::span<double>)>;

// Per-path outputs of one collector: data[strategy][path * width + w].
struct Output {
    std::size_t width = 0;
    std::size_t n_paths = 0;
    PathFn fn;
    std::vector<std::vector<double>> data;

    std::mutex error_mutex;
    std::exception_ptr error;
    std::pair<std::size_t, std::size_t> error_at{SIZE_MAX, SIZE_MAX};

    const double* row(std::size_t s, std::size_t i) const { return data[s].data() + i * width; }
    std::size_t strategies() const { return data.size(); }

    void record(std::size_t s, std::size_t i, std::exception_ptr e) {
        std::lock_guard lock(error_mutex);
        if (std::pair{s, i} < error_at) {
            error_at = {s, i};
            error = std::move(e);
        }
    }
    void rethrow() const {
        if (error) std::rethrow_exception(error);
    }
};

class Pass {
public:
    explicit Pass(TimeGrid grid) : grid_(std::move(grid)) {}

    const TimeGrid& grid() const { return grid_; }

    void need(const std::string& key, std::size_t width, std::size_t n_paths, PathFn fn) {
        auto& slot = outputs_[key];
        if (!slot) {
            slot = std::make_unique<Output>();
            slot->width = width;
            slot->fn = std::move(fn);
        } else if (slot->width != width) {
            throw InvalidArgument("collector '" + key + "' registered twice with different widths");
        }
        slot->n_paths = std::max(slot->n_paths, n_paths);
    }

    const Output& out(const std::string& key) const {
        const auto it = outputs_.find(key);
        if (it == outputs_.end()) throw InvalidArgument("no collector '" + key + "'");
        it->second->rethrow();
        return *it->second;
    }

    std::size_t n_paths() const {
        std::size_t n = 0;
        for (const auto& [k, o] : outputs_) n = std::max(n, o->n_paths);
        return n;
    }

    void run(const StrategyFamily& family, std::uint64_t seed, const SimulationOptions& options) {
        const std::size_t n = n_paths();
        const std::size_t N = grid_.steps();
        for (auto& [k, o] : outputs_)
            o->data.assign(family.size(),
                           std::vector<double>(o->n_paths * o->width,
                                               std::numeric_limits<double>::quiet_NaN()));
        for (std::size_t s = 0; s < family.size(); ++s) {
            for_each_block(family[s], grid_, n, seed, options, [&](const PathBundle& b) {
                thread_local std::vector<double> w;
                w.resize(N);
                for (std::size_t r = 0; r < b.n_paths; ++r) {
                    const std::size_t i = b.path_id(r);
                    const auto sigma = b.sigma_used.row(r);
                    for (std::size_t j = 0; j < N; ++j) w[j] = sigma[j] * sigma[j] * grid_.dt(j);
                    const PathView view{b.m_values.row(r), b.increments.row(r), sigma,
                                        b.qv_exact.row(r), w, grid_};
                    for (auto& [key, o] : outputs_) {
                        if (i >= o->n_paths) continue;
                        try {
                            o->fn(view, {o->data[s].data() + i * o->width, o->width});
                        } catch (...) {
                            o->record(s, i, std::current_exception());
                        }
                    }
                }
            });
        }
    }

private:
    TimeGrid grid_;
    std::map<std::string, std::unique_ptr<Output>> outputs_;
};

struct Context {
    const SuiteConfig& cfg;
    VolatilityBand band;
    StrategyFamily family;
    std::vector<std::size_t> ladder;
    LevelGrid levels;
    std::map<std::size_t, Pass> passes;

    Pass& pass(std::size_t steps) {
        auto it = passes.find(steps);
        if (it == passes.end())
            it = passes.emplace(steps, Pass(make_uniform_grid(cfg.horizon, steps))).first;
        return it->second;
    }
    const Pass& pass(std::size_t steps) const { return passes.at(steps); }
    std::size_t main_steps() const { return cfg.steps; }
    std::size_t coarse_steps() const { return ladder.front(); }
    double sqrt_t() const { return std::sqrt(cfg.horizon); }
};

// Upper estimate of a per-path quantity: largest per-strategy mean.
struct Upper {
    double mean = -INFINITY;
    double se = 0.0;
    std::size_t arg = 0;
    std::vector<SampleStats> per;
};

template <class F>
Upper upper_of(const Output& o, F&& f) {
    Upper u;
    std::vector<double> v(o.n_paths);
    for (std::size_t s = 0; s < o.strategies(); ++s) {
        for (std::size_t i = 0; i < o.n_paths; ++i) v[i] = f(o.row(s, i));
        const auto st = sample_stats(v);
        u.per.push_back(st);
        if (st.mean > u.mean) {
            u.mean = st.mean;
            u.se = st.std_error;
            u.arg = s;
        }
    }
    return u;
}

Upper upper_col(const Output& o, std::size_t w) {
    return upper_of(o, [w](const double* r) { return r[w]; });
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

double max_abs_over(const Output& o, std::size_t w) {
    double worst = 0.0;
    for (std::size_t s = 0; s < o.strategies(); ++s)
        for (std::size_t i = 0; i < o.n_paths; ++i) worst = std::max(worst, std::fabs(o.row(s, i)[w]));
    return worst;
}

double sum_over(const Output& o, std::size_t w) {
    double total = 0.0;
    for (std::size_t s = 0; s < o.strategies(); ++s)
        for (std::size_t i = 0; i < o.n_paths; ++i) total += o.row(s, i)[w];
    return total;
}

json stats_json(const Context& ctx, const Upper& u) {
    json j;
    j["upper"] = u.mean;
    j["se"] = u.se;
    j["argmax"] = ctx.family[u.arg].label();
    json per = json::object();
    for (std::size_t s = 0; s < u.per.size(); ++s)
        per[ctx.family[s].label()] = {{"mean", u.per[s].mean}, {"se", u.per[s].std_error}};
    j["per_strategy"] = std::move(per);
    return j;
}

// ---------------------------------------------------------------------------
// Checks. Each check registers per-path collectors on the passes it reads,
// then evaluates from the stored outputs once every pass has run.

struct CheckDef {
    const char* name;
    void (*plan)(Context&);
    void (*evaluate)(const Context&, CheckReport&);
};

// Increment bounds (t, s) on a sample of node pairs.
std::vector<std::pair<std::size_t, std::size_t>> node_pairs(std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t t : {std::size_t{0}, n / 4, n / 2}) {
        for (std::size_t s : {n / 64, n / 8, n / 2}) {
            s = std::max<std::size_t>(s, 1);
            if (t + s > n) continue;
            if (std::find(pairs.begin(), pairs.end(), std::pair{t, s}) == pairs.end())
                pairs.emplace_back(t, s);
        }
    }
    return pairs;
}

void plan_h_assumption(Context& ctx) {
    const std::size_t n = ctx.cfg.expectation_steps;
    const auto pairs = node_pairs(n);
    ctx.pass(n).need("h_increments", 2 * pairs.size(), ctx.cfg.ladder_paths,
                     [pairs](const PathView& v, std::span<double> out) {
                         for (std::size_t p = 0; p < pairs.size(); ++p) {
                             const auto [t, s] = pairs[p];
                             const double d = v.m[t + s] - v.m[t];
                             out[2 * p] = d * d;
                             out[2 * p + 1] = v.qv[t + s] - v.qv[t];
                         }
                     });
}

void eval_h_assumption(const Context& ctx, CheckReport& r) {
    const std::size_t n = ctx.cfg.expectation_steps;
    const auto& pass = ctx.pass(n);
    const auto& o = pass.out("h_increments");
    const auto pairs = node_pairs(n);
    const double hi = ctx.band.max_variance(), lo = ctx.band.min_variance();
    double excess = -INFINITY, over_hi = 0.0, under_lo = INFINITY, const_dev = 0.0;
    json rows = json::array();
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [t, s] = pairs[p];
        const double len = pass.grid().node(t + s) - pass.grid().node(t);
        const auto u = upper_col(o, 2 * p);
        for (std::size_t k = 0; k < o.strategies(); ++k) {
            excess = std::max(excess, u.per[k].mean - hi * len - 4.0 * u.per[k].std_error);
            if (ctx.family[k].constant_sigma() == ctx.band.sigma_high())
                const_dev = std::max(const_dev, std::fabs(u.per[k].mean / (hi * len) - 1.0));
            for (std::size_t i = 0; i < o.n_paths; ++i) {
                const double q = o.row(k, i)[2 * p + 1];
                over_hi = std::max(over_hi, q / (hi * len));
                if (lo > 0.0) under_lo = std::min(under_lo, q / (lo * len));
            }
        }
        rows.push_back({{"t", pass.grid().node(t)}, {"s", len}, {"upper_second_moment", u.mean},
                        {"se", u.se}, {"bound", hi * len}});
    }
    r.add("second_moment_minus_bound_minus_4se", excess, "<=", 0.0);
    r.add("qv_increment_over_upper_rate", over_hi, "<=", 1.0 + 1e-12);
    if (lo > 0.0) r.add("qv_increment_over_lower_rate", under_lo, ">=", 1.0 - 1e-12);
    r.info("constant_high_relative_deviation", const_dev);
    r.details["pairs"] = std::move(rows);
}

void plan_quadratic_variation(Context& ctx) {
    for (std::size_t n : ctx.ladder) {
        ctx.pass(n).need("qv_identity", 2, ctx.cfg.ladder_paths,
                         [](const PathView& v, std::span<double> out) {
                             const auto m = v.m;
                             double top = 0.0;
                             for (double x : m) top = std::max(top, x * x);
                             double sq = 0.0, cross = 0.0, worst = 0.0;
                             for (std::size_t j = 0; j < v.inc.size(); ++j) {
                                 sq += v.inc[j] * v.inc[j];
                                 cross += m[j] * v.inc[j];
                                 const double rhs = m[j + 1] * m[j + 1] - m[0] * m[0] - 2.0 * cross;
                                 worst = std::max(worst, std::fabs(sq - rhs));
                             }
                             out[0] = worst / (1.0 + top);
                             out[1] = std::fabs(sq - (v.qv.back() - v.qv.front()));
                         });
    }
}

void eval_quadratic_variation(const Context& ctx, CheckReport& r) {
    double worst = 0.0;
    std::vector<double> errors;
    json ladder = json::array();
    for (std::size_t n : ctx.ladder) {
        const auto& o = ctx.pass(n).out("qv_identity");
        worst = std::max(worst, max_abs_over(o, 0));
        const auto u = upper_col(o, 1);
        errors.push_back(u.mean);
        ladder.push_back({{"steps", n}, {"mean_abs_error", u.mean}, {"se", u.se}});
        r.info("partition_qv_mean_abs_error_N=" + std::to_string(n), u.mean);
    }
    r.add("telescoping_max_relative_error", worst, "<=", ctx.cfg.tol_identity);
    if (errors.size() > 1)
        r.add("partition_qv_error_decreasing", strictly_decreasing(errors) ? 1.0 : 0.0, "==", 1.0);
    r.details["ladder"] = std::move(ladder);
}

// Integrands for the norm checks, evaluated at M_{t_j}.
constexpr int kNormIntegrands = 4;
constexpr double kNormPowers[] = {1.0, 2.0, 3.0};
const char* const kNormNames[] = {"M", "sin(3M)", "1", "sgn(M)"};

double norm_integrand(int e, double x) {
    switch (e) {
        case 0: return x;
        case 1: return std::sin(3.0 * x);
        case 2: return 1.0;
        default: return sgn(x);
    }
}

void plan_norm_sandwich(Context& ctx) {
    ctx.pass(ctx.coarse_steps())
        .need("norm_powers", kNormIntegrands * 3 * 2, ctx.cfg.ladder_paths,
              [](const PathView& v, std::span<double> out) {
                  thread_local std::vector<double> eta;
                  eta.resize(v.inc.size());
                  for (int e = 0; e < kNormIntegrands; ++e) {
                      for (std::size_t j = 0; j < eta.size(); ++j) eta[j] = norm_integrand(e, v.m[j]);
                      for (int p = 0; p < 3; ++p) {
                          out[(e * 3 + p) * 2] = power_dt_path(eta, v.grid, kNormPowers[p]);
                          out[(e * 3 + p) * 2 + 1] =
                              power_dqv_path(eta, v.sigma, v.grid, kNormPowers[p]);
                      }
                  }
              });
}

void eval_norm_sandwich(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.coarse_steps()).out("norm_powers");
    const double hi = ctx.band.max_variance(), lo = ctx.band.min_variance();
    const double tol = ctx.cfg.tol_identity;
    double path_violations = 0.0, norm_violations = 0.0, mbar_one = 0.0;
    json norms = json::array();
    for (int e = 0; e < kNormIntegrands; ++e) {
        for (int p = 0; p < 3; ++p) {
            const std::size_t c = static_cast<std::size_t>(e * 3 + p) * 2;
            for (std::size_t s = 0; s < o.strategies(); ++s) {
                for (std::size_t i = 0; i < o.n_paths; ++i) {
                    const double dt = o.row(s, i)[c], dq = o.row(s, i)[c + 1];
                    if (dq > hi * dt * (1.0 + tol) || dq < lo * dt * (1.0 - tol)) ++path_violations;
                }
            }
            const double pw = kNormPowers[p];
            const double m = std::pow(upper_col(o, c).mean, 1.0 / pw);
            const double mbar = std::pow(upper_col(o, c + 1).mean, 1.0 / pw);
            if (mbar > std::pow(hi, 1.0 / pw) * m * (1.0 + tol) ||
                mbar < std::pow(lo, 1.0 / pw) * m * (1.0 - tol))
                ++norm_violations;
            if (e == 2 && pw == 2.0) mbar_one = mbar;
            norms.push_back({{"integrand", kNormNames[e]}, {"p", pw}, {"m_norm", m}, {"mbar_norm", mbar}});
        }
    }
    r.add("per_path_violations", path_violations, "==", 0.0);
    r.add("norm_violations", norm_violations, "==", 0.0);
    const double expect = ctx.band.sigma_high() * ctx.sqrt_t();
    r.add("mbar_norm_of_one_p2_relative_error", std::fabs(mbar_one - expect) / expect, "<=", tol);
    r.details["norms"] = std::move(norms);
}

void plan_isometry(Context& ctx) {
    ctx.pass(ctx.cfg.expectation_steps)
        .need("isometry", 6, ctx.cfg.ladder_paths, [](const PathView& v, std::span<double> out) {
            for (int f = 0; f < 2; ++f) {
                double integral = 0.0, dqv = 0.0, dt = 0.0;
                for (std::size_t j = 0; j < v.inc.size(); ++j) {
                    const double x = f == 0 ? std::cos(3.0 * v.m[j]) : sgn(v.m[j]);
                    integral += x * v.inc[j];
                    dqv += x * x * v.weight[j];
                    dt += x * x * v.grid.dt(j);
                }
                out[3 * f] = integral;
                out[3 * f + 1] = dqv;
                out[3 * f + 2] = dt;
            }
        });
}

void eval_isometry(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.cfg.expectation_steps).out("isometry");
    const double hi = ctx.band.max_variance();
    const auto z = [](const SampleStats& st) {
        return st.std_error > 0.0 ? st.mean / st.std_error : (st.mean == 0.0 ? 0.0 : INFINITY * st.mean);
    };
    const char* names[] = {"cos(3M)", "sgn(M)"};
    for (std::size_t f = 0; f < 2; ++f) {
        const auto iso = upper_of(o, [f](const double* x) { return x[3 * f] * x[3 * f] - x[3 * f + 1]; });
        const auto dtf = upper_of(o, [f, hi](const double* x) { return x[3 * f] * x[3 * f] - hi * x[3 * f + 2]; });
        const auto mean = upper_of(o, [f](const double* x) { return x[3 * f]; });
        double iso_z = 0.0, dt_z = -INFINITY, mean_z = 0.0;
        for (std::size_t s = 0; s < o.strategies(); ++s) {
            iso_z = std::max(iso_z, std::fabs(z(iso.per[s])));
            dt_z = std::max(dt_z, z(dtf.per[s]));
            mean_z = std::max(mean_z, std::fabs(z(mean.per[s])));
        }
        const std::string tag = names[f];
        r.add("isometry_dqv_abs_z[" + tag + "]", iso_z, "<=", 4.0);
        r.add("control_dt_form_z[" + tag + "]", dt_z, "<=", 4.0);
        r.add("terminal_mean_abs_z[" + tag + "]", mean_z, "<=", 4.0);
    }
}

constexpr double kTailThresholds[] = {1.0, 2.0, 4.0, 8.0};

void plan_tail_truncation(Context& ctx) {
    ctx.pass(ctx.coarse_steps()).need("tail", 4, ctx.cfg.ladder_paths, [](const PathView& v, std::span<double> out) {
        for (int k = 0; k < 4; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < v.inc.size(); ++j)
                if (std::fabs(v.m[j]) > kTailThresholds[k]) acc += v.m[j] * v.m[j] * v.weight[j];
            out[k] = acc;
        }
    });
}

void eval_tail_truncation(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.coarse_steps()).out("tail");
    std::vector<double> values, ses;
    for (std::size_t k = 0; k < 4; ++k) {
        const auto u = upper_col(o, k);
        values.push_back(u.mean);
        ses.push_back(u.se);
        r.info("tail_mass_threshold=" + num(kTailThresholds[k]), u.mean);
    }
    const auto seq = make_decay_sequence(values, ses, 0.1);
    r.add("nonincreasing", seq.nonincreasing ? 1.0 : 0.0, "==", 1.0);
    r.add("decayed_below_tenth", seq.decayed ? 1.0 : 0.0, "==", 1.0);
}

constexpr double kClampScales[] = {1, 2, 4, 8, 16, 32};

void plan_dominated_convergence(Context& ctx) {
    ctx.pass(ctx.main_steps()).need("dominated", 7, ctx.cfg.ladder_paths, [](const PathView& v, std::span<double> out) {
        for (int k = 0; k < 6; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < v.inc.size(); ++j) {
                const double d = std::clamp(kClampScales[k] * v.m[j], -1.0, 1.0) - sgn(v.m[j]);
                acc += d * d * v.weight[j];
            }
            out[k] = acc;
        }
        out[6] = std::fabs(v.m.back() - v.m.front());
    });
}

void eval_dominated_convergence(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.main_steps()).out("dominated");
    const double c2 = upper_col(o, 6).mean;
    std::vector<double> values, ses;
    double violations = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
        const auto u = upper_col(o, k);
        values.push_back(u.mean);
        ses.push_back(u.se);
        // integral of |clamp(nx) - sgn x| over the line is 2/(3n)
        const double bound = c2 * 2.0 / (3.0 * kClampScales[k]) + 3.0 * u.se;
        if (u.mean > bound) ++violations;
        r.info("gap_n=" + num(kClampScales[k]), u.mean);
    }
    const auto seq = make_decay_sequence(values, ses, 0.1);
    r.add("nonincreasing", seq.nonincreasing ? 1.0 : 0.0, "==", 1.0);
    r.add("decayed_below_tenth", seq.decayed ? 1.0 : 0.0, "==", 1.0);
    r.add("occupation_bound_violations", violations, "==", 0.0);
}

void plan_ae_identity(Context& ctx) {
    ctx.pass(ctx.coarse_steps()).need("ae_identity", 1, ctx.cfg.ladder_paths, [](const PathView& v, std::span<double> out) {
        // f'(x) = f(x) except on {0.3, -0.2}, a Lebesgue-null set
        double acc = 0.0;
        for (std::size_t j = 0; j < v.inc.size(); ++j) {
            const double x = v.m[j];
            const double f = std::tanh(x);
            const double g = (x == 0.3 || x == -0.2) ? f + 5.0 : f;
            acc += (g - f) * (g - f) * v.weight[j];
        }
        out[0] = acc;
    });
}

void eval_ae_identity(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.coarse_steps()).out("ae_identity");
    r.add("mbar_norm_of_difference", std::sqrt(std::max(upper_col(o, 0).mean, 0.0)), "<=", 1e-10);
}

void plan_krylov(Context& ctx) {
    const auto lengths = ctx.cfg.krylov_lengths;
    ctx.pass(ctx.main_steps())
        .need("krylov", 2 + lengths.size(), ctx.cfg.paths, [lengths](const PathView& v, std::span<double> out) {
            out[0] = v.qv.back() - v.qv.front();
            out[1] = std::fabs(v.m.back() - v.m.front());
            for (std::size_t k = 0; k < lengths.size(); ++k) {
                const double hi = lengths[k];
                double acc = 0.0;
                for (std::size_t j = 0; j < v.inc.size(); ++j)
                    acc += (v.m[j] >= 0.0 && v.m[j] <= hi) ? v.weight[j] : 0.0;
                out[2 + k] = acc;
            }
        });
    ctx.pass(ctx.main_steps()).need("krylov_bump", 1, ctx.cfg.ladder_paths, [](const PathView& v, std::span<double> out) {
        double acc = 0.0;
        for (std::size_t j = 0; j < v.inc.size(); ++j) acc += std::exp(-0.5 * v.m[j] * v.m[j]) * v.weight[j];
        out[0] = acc;
    });
}

void eval_krylov(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.main_steps()).out("krylov");
    const auto qv = upper_col(o, 0), move = upper_col(o, 1);
    const double p = ctx.cfg.krylov_p;
    const auto k = krylov_constants(qv.mean, move.mean, p);
    r.info("C1", k.c1);
    r.info("C2", k.c2);
    r.info("C", k.c);
    std::vector<double> lhs;
    for (std::size_t i = 0; i < ctx.cfg.krylov_lengths.size(); ++i) {
        const double len = ctx.cfg.krylov_lengths[i];
        const auto u = upper_col(o, 2 + i);
        lhs.push_back(u.mean);
        r.add("indicator_lhs_l=" + num(len), u.mean, "<=", krylov_bound(k, std::pow(len, 1.0 / p)) + 3.0 * u.se);
    }
    if (lhs.size() > 1) r.add("indicator_lhs_decreasing", strictly_decreasing(lhs) ? 1.0 : 0.0, "==", 1.0);
    const auto bump = upper_col(ctx.pass(ctx.main_steps()).out("krylov_bump"), 0);
    const auto k1 = krylov_constants(qv.mean, move.mean, 1.0);
    r.add("gaussian_bump_lhs", bump.mean, "<=",
          krylov_bound(k1, std::sqrt(2.0 * std::numbers::pi)) + 3.0 * bump.se);
    r.details["expected_qv"] = stats_json(ctx, qv);
    r.details["expected_abs_move"] = stats_json(ctx, move);
}

// Field invariants on the coarse grid: counts of negative entries and of
// decreases in time, for both estimators.
void plan_local_time(Context& ctx) {
    const auto eps = ctx.cfg.epsilons;
    const std::size_t E = eps.size();
    ctx.pass(ctx.main_steps())
        .need("local_time", 5 + 2 * E, ctx.cfg.paths, [eps, E](const PathView& v, std::span<double> out) {
            const double l0 = tanaka_crossing_path(v.m, 0.0);
            out[0] = l0;
            out[1] = std::fabs(tanaka_definition_path(v.m, v.inc, 0.0) - l0);
            out[2] = std::fabs(v.m.back() - v.m.front());
            for (std::size_t e = 0; e < E; ++e) {
                out[3 + e] = occupation_path(v.m, v.weight, 0.0, eps[e], false);
                out[3 + E + e] = occupation_path(v.m, v.weight, 0.0, eps[e], true);
            }
            out[3 + 2 * E] = tanaka_crossing_path(v.m, snap_level(0.5));
            out[4 + 2 * E] = tanaka_crossing_path(v.m, snap_level(-1.0));
        });
    const LevelGrid grid = default_level_grid(ctx.band, ctx.cfg.horizon);
    const auto snaps = default_snapshots(ctx.coarse_steps());
    const double eps0 = eps.front();
    ctx.pass(ctx.coarse_steps())
        .need("local_time_field", 4, ctx.cfg.ladder_paths, [grid, snaps, eps0](const PathView& v, std::span<double> out) {
            const std::size_t K = grid.size(), S = snaps.size();
            thread_local std::vector<double> field;
            field.resize(K * S);
            double counts[4] = {0, 0, 0, 0};
            for (int est = 0; est < 2; ++est) {
                if (est == 0) tanaka_levels_path(v.m, grid, snaps, field);
                else occupation_levels_path(v.m, v.weight, grid, eps0, false, snaps, field);
                for (std::size_t s = 0; s < S; ++s) {
                    for (std::size_t k = 0; k < K; ++k) {
                        if (field[s * K + k] < 0.0) ++counts[2 * est];
                        if (s > 0 && field[s * K + k] < field[(s - 1) * K + k]) ++counts[2 * est + 1];
                    }
                }
            }
            std::copy(counts, counts + 4, out.begin());
        });
}

void eval_local_time(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.main_steps()).out("local_time");
    const auto& eps = ctx.cfg.epsilons;
    const std::size_t E = eps.size();
    const auto l0 = upper_col(o, 0);
    const double closed = ctx.band.sigma_high() * std::sqrt(2.0 * ctx.cfg.horizon / std::numbers::pi);
    r.info("upper_local_time_at_0", l0.mean);
    r.info("closed_form", closed);
    r.add("local_time_relative_error", std::fabs(l0.mean - closed) / closed, "<=", ctx.cfg.tol_local_time);
    r.add("definition_vs_crossing_max", max_abs_over(o, 1), "<=", ctx.cfg.tol_identity);

    std::vector<double> gaps;
    json cross = json::array();
    for (std::size_t e = 0; e < E; ++e) {
        const auto one = upper_of(o, [e](const double* x) { return std::fabs(x[3 + e] - x[0]); });
        const auto sym = upper_of(o, [e, E](const double* x) { return std::fabs(x[3 + E + e] - x[0]); });
        gaps.push_back(one.mean);
        r.info("discrepancy_eps=" + num(eps[e]), one.mean);
        r.info("symmetric_discrepancy_eps=" + num(eps[e]), sym.mean);
        cross.push_back({{"epsilon", eps[e]}, {"one_sided", one.mean}, {"one_sided_se", one.se},
                         {"symmetric", sym.mean}, {"symmetric_se", sym.se}});
    }
    if (gaps.size() > 1) r.add("discrepancy_decreasing", strictly_decreasing(gaps) ? 1.0 : 0.0, "==", 1.0);
    r.add("final_discrepancy_fraction", gaps.back() / l0.mean, "<=", ctx.cfg.tol_cross);

    const auto abs_move = upper_col(o, 2);
    const std::pair<const char*, std::size_t> levels[] = {{"0", 0}, {"0.5", 3 + 2 * E}, {"-1", 4 + 2 * E}};
    for (const auto& [label, col] : levels) {
        const auto u = upper_col(o, col);
        r.add(std::string("upper_local_time_a=") + label, u.mean, "<=", abs_move.mean + 3.0 * u.se);
    }

    const auto& f = ctx.pass(ctx.coarse_steps()).out("local_time_field");
    r.add("tanaka_negative_entries", sum_over(f, 0), "==", 0.0);
    r.add("tanaka_time_decreases", sum_over(f, 1), "==", 0.0);
    r.add("occupation_negative_entries", sum_over(f, 2), "==", 0.0);
    r.add("occupation_time_decreases", sum_over(f, 3), "==", 0.0);
    r.details["local_time_at_0"] = stats_json(ctx, l0);
    r.details["cross_estimator"] = std::move(cross);
}

void plan_occupation_formula(Context& ctx) {
    const LevelGrid levels = ctx.levels;
    ctx.pass(ctx.main_steps())
        .need("occupation_formula", 5, ctx.cfg.ladder_paths, [levels](const PathView& v, std::span<double> out) {
            static const std::function<double(double)> one = [](double) { return 1.0; };
            // I[0, inf) up to a null set; the midpoint value at the jump keeps the trapezoid exact
            static const std::function<double(double)> half = [](double x) {
                return x > 0.0 ? 1.0 : x == 0.0 ? 0.5 : 0.0;
            };
            std::tie(out[0], out[1]) = occupation_formula_path(v.m, v.weight, one, levels);
            std::tie(out[2], out[3]) = occupation_formula_path(v.m, v.weight, half, levels);
            out[4] = v.qv.back() - v.qv.front();
        });
}

void eval_occupation_formula(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.main_steps()).out("occupation_formula");
    const auto rel = upper_of(o, [](const double* x) {
        const double d = std::fabs(x[0] - x[1]);
        return d == 0.0 ? 0.0 : d / std::fabs(x[0]);
    });
    const auto qv_gap = upper_of(o, [](const double* x) { return std::fabs(x[0] - x[4]); });
    r.add("g_one_mean_relative_error", rel.mean, "<=", ctx.cfg.tol_occupation);
    r.add("g_one_lhs_minus_qv_max", qv_gap.mean, "<=", ctx.cfg.tol_identity);
    const auto lhs = upper_col(o, 2), rhs = upper_col(o, 3), qv = upper_col(o, 4);
    double worst = 0.0;
    for (std::size_t s = 0; s < o.strategies(); ++s)
        worst = std::max(worst, std::fabs(rhs.per[s].mean - lhs.per[s].mean) / lhs.per[s].mean);
    r.add("half_line_relative_gap", worst, "<=", ctx.cfg.tol_occupation);
    json per = json::object();
    for (std::size_t s = 0; s < o.strategies(); ++s)
        per[ctx.family[s].label()] = {{"g_one_relative_error", rel.per[s].mean},
                                      {"half_line_lhs", lhs.per[s].mean},
                                      {"half_line_rhs", rhs.per[s].mean},
                                      {"half_qv", 0.5 * qv.per[s].mean}};
    r.details["per_strategy"] = std::move(per);
}

void plan_growth_set(Context& ctx) {
    const LevelGrid levels = ctx.levels;
    const double eps = ctx.cfg.level_spacing;
    const double width = growth_band_width(eps, ctx.band.sigma_high(), ctx.pass(ctx.main_steps()).grid());
    ctx.pass(ctx.main_steps())
        .need("growth_set", 4, ctx.cfg.ladder_paths, [levels, eps, width](const PathView& v, std::span<double> out) {
            std::tie(out[0], out[1]) =
                growth_set_path(v.m, v.weight, levels, LocalTimeEstimator::tanaka, eps, false, width);
            std::tie(out[2], out[3]) =
                growth_set_path(v.m, v.weight, levels, LocalTimeEstimator::occupation, eps, false, width);
        });
}

void eval_growth_set(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.main_steps()).out("growth_set");
    double tanaka = 0.0, occupation = 0.0;
    for (std::size_t s = 0; s < o.strategies(); ++s) {
        double v[4] = {0, 0, 0, 0};
        for (std::size_t i = 0; i < o.n_paths; ++i)
            for (int c = 0; c < 4; ++c) v[c] += o.row(s, i)[c];
        if (v[1] > 0.0) tanaka = std::max(tanaka, v[0] / v[1]);
        if (v[3] > 0.0) occupation = std::max(occupation, v[2] / v[3]);
    }
    r.info("band_width", growth_band_width(ctx.cfg.level_spacing, ctx.band.sigma_high(),
                                           ctx.pass(ctx.main_steps()).grid()));
    r.add("occupation_violation_fraction", occupation, "==", 0.0);
    r.add("tanaka_violation_fraction", tanaka, "<=", ctx.cfg.tol_growth);
}

std::vector<double> bicontinuity_gaps(const SuiteConfig& cfg) {
    std::vector<double> gaps;
    for (std::size_t g = 0; g < cfg.bicontinuity_gaps; ++g)
        gaps.push_back(std::ldexp(cfg.bicontinuity_h0, -static_cast<int>(g)));
    return gaps;
}

void plan_bicontinuity(Context& ctx) {
    const auto gaps = bicontinuity_gaps(ctx.cfg);
    const int power = static_cast<int>(2 * ctx.cfg.bicontinuity_order);
    ctx.pass(ctx.main_steps())
        .need("bicontinuity", gaps.size(), ctx.cfg.bicontinuity_paths, [gaps, power](const PathView& v, std::span<double> out) {
            for (std::size_t g = 0; g < gaps.size(); ++g)
                out[g] = std::pow(level_increment_sup_path(v.m, 0.0, gaps[g]), power);
        });
}

void eval_bicontinuity(const Context& ctx, CheckReport& r) {
    const auto& o = ctx.pass(ctx.main_steps()).out("bicontinuity");
    const auto gaps = bicontinuity_gaps(ctx.cfg);
    std::vector<double> moments, ses;
    for (std::size_t g = 0; g < gaps.size(); ++g) {
        const auto u = upper_col(o, g);
        moments.push_back(u.mean);
        ses.push_back(u.se);
    }
    const auto fit = fit_regularity(ctx.cfg.bicontinuity_order, gaps, moments, ses);
    const double n = static_cast<double>(ctx.cfg.bicontinuity_order);
    r.add("fitted_slope", fit.slope, ">=", n - 0.5);
    r.add("calibrated_inequality_holds", fit.inequality_holds ? 1.0 : 0.0, "==", 1.0);
    r.info("calibrated_constant", fit.calibrated_constant);
    json rows = json::array();
    for (std::size_t g = 0; g < gaps.size(); ++g)
        rows.push_back({{"gap", gaps[g]}, {"moment", fit.moments[g]}, {"se", fit.std_errors[g]},
                        {"bound", fit.bound[g]}, {"moment_over_gap_power", fit.moments[g] / std::pow(gaps[g], n)}});
    r.details["gaps"] = std::move(rows);
}

void plan_tanaka(Context& ctx) {
    const LevelGrid levels = ctx.levels;
    const auto call = convex_call(snap_level(ctx.cfg.call_strike));
    const auto abs0 = convex_abs(0.0);
    const auto abs1 = convex_abs(snap_level(0.3));
    const auto square = convex_square();
    for (const auto* f : {&call, &abs0, &abs1, &square}) f->validate(levels);
    for (std::size_t n : ctx.ladder) {
        ctx.pass(n).need("tanaka", 4, ctx.cfg.ladder_paths,
                         [=](const PathView& v, std::span<double> out) {
                             out[0] = std::fabs(tanaka_residual_path(v.m, call, levels));
                             out[1] = std::max(std::fabs(tanaka_residual_path(v.m, abs0, levels)),
                                               std::fabs(tanaka_residual_path(v.m, abs1, levels)));
                             out[2] = std::fabs(tanaka_residual_path(v.m, square, levels));
                             out[3] = v.qv.back() - v.qv.front();
                         });
    }
}

void eval_tanaka(const Context& ctx, CheckReport& r) {
    std::vector<double> call;
    double abs_max = 0.0;
    json ladder = json::array();
    for (std::size_t n : ctx.ladder) {
        const auto& o = ctx.pass(n).out("tanaka");
        const auto u = upper_col(o, 0);
        call.push_back(u.mean);
        abs_max = std::max(abs_max, max_abs_over(o, 1));
        const auto sq = upper_col(o, 2), qv = upper_col(o, 3);
        ladder.push_back({{"steps", n}, {"call_mean_abs_residual", u.mean}, {"se", u.se},
                          {"square_mean_abs_residual", sq.mean}, {"mean_qv", qv.mean}});
        r.info("call_mean_abs_residual_N=" + std::to_string(n), u.mean);
    }
    r.add("call_mean_abs_residual", call.back(), "<=", ctx.cfg.tol_call);
    if (call.size() > 1)
        r.add("call_residual_strictly_decreasing", strictly_decreasing(call) ? 1.0 : 0.0, "==", 1.0);
    r.add("abs_residual_max", abs_max, "<=", ctx.cfg.tol_identity);
    const auto& top = ctx.pass(ctx.main_steps()).out("tanaka");
    r.add("square_residual_relative", upper_col(top, 2).mean / upper_col(top, 3).mean, "<=",
          ctx.cfg.tol_occupation);

    ConvexFunction concave = convex_call(0.0);
    concave.name = "negative_call";
    concave.atoms = {{0.0, -1.0}};
    bool rejected = false;
    try {
        concave.validate(ctx.levels);
    } catch (const InvalidArgument&) {
        rejected = true;
    }
    r.add("negative_mass_rejected", rejected ? 1.0 : 0.0, "==", 1.0);
    r.details["ladder"] = std::move(ladder);
}

void plan_terminal(Context& ctx) {
    ctx.pass(ctx.cfg.expectation_steps)
        .need("terminal", 1, ctx.cfg.expectation_paths,
              [](const PathView& v, std::span<double> out) { out[0] = v.m.back(); });
}

std::vector<std::vector<double>> terminal_samples(const Context& ctx, double (*f)(double)) {
    const auto& o = ctx.pass(ctx.cfg.expectation_steps).out("terminal");
    std::vector<std::vector<double>> out(o.strategies(), std::vector<double>(o.n_paths));
    for (std::size_t s = 0; s < o.strategies(); ++s)
        for (std::size_t i = 0; i < o.n_paths; ++i) out[s][i] = f(o.row(s, i)[0]);
    return out;
}

json estimate_json(const EstimateReport& e) {
    json j;
    j["payoff"] = e.payoff;
    j["upper"] = e.upper;
    j["upper_se"] = e.upper_se;
    j["lower"] = e.lower;
    j["lower_se"] = e.lower_se;
    j["argmax"] = e.argmax_label;
    j["argmin"] = e.argmin_label;
    return j;
}

void eval_expectation(const Context& ctx, CheckReport& r) {
    std::vector<std::string> labels;
    for (const auto& s : ctx.family.strategies()) labels.push_back(s.label());
    const auto estimate = [&](const char* name, double (*f)(double)) {
        return summarize_estimates(name, terminal_samples(ctx, f), labels, ctx.cfg.seed,
                                   ctx.cfg.expectation_steps);
    };
    const auto linear = estimate("linear", [](double x) { return x; });
    const auto square = estimate("square", [](double x) { return x * x; });
    const auto neg_square = estimate("neg_square", [](double x) { return -x * x; });
    const auto abs = estimate("abs", [](double x) { return std::fabs(x); });
    const auto sine = estimate("sin", [](double x) { return std::sin(x); });

    const double T = ctx.cfg.horizon;
    const double hi = ctx.band.max_variance(), lo = ctx.band.min_variance();
    const double abs_closed = ctx.band.sigma_high() * std::sqrt(2.0 * T / std::numbers::pi);
    r.info("upper_square", square.upper);
    r.add("upper_square_abs_error", std::fabs(square.upper - hi * T), "<=", ctx.cfg.tol_square);
    r.info("lower_square", -neg_square.upper);
    r.add("lower_square_abs_error", std::fabs(-neg_square.upper - lo * T), "<=", ctx.cfg.tol_neg_square);
    r.info("upper_abs", abs.upper);
    r.add("upper_abs_abs_error", std::fabs(abs.upper - abs_closed), "<=", ctx.cfg.tol_abs);
    r.add("upper_linear_abs_z", std::fabs(linear.upper) / linear.upper_se, "<=", 4.0);
    r.add("lower_linear_abs_z", std::fabs(linear.lower) / linear.lower_se, "<=", 4.0);

    const SpaceGrid base{std::max(6.0, 6.0 * ctx.band.sigma_high() * std::sqrt(T)), 0.0};
    struct Target {
        const char* name;
        double (*f)(double);
        double closed;
    };
    const Target targets[] = {{"square", [](double x) { return x * x; }, hi * T},
                              {"neg_square", [](double x) { return -x * x; }, -lo * T},
                              {"abs", [](double x) { return std::fabs(x); }, abs_closed},
                              {"sin", [](double x) { return std::sin(x); }, NAN}};
    json pde = json::array();
    double sine_pde = 0.0;
    for (const auto& t : targets) {
        std::vector<double> values;
        for (double dx : ctx.cfg.pde_dx) {
            SpaceGrid g = base;
            g.dx = dx;
            values.push_back(solve_g_heat(t.f, ctx.band, T, g, stable_time_steps(ctx.band, T, dx)).value);
        }
        const std::string tag = t.name;
        if (std::isfinite(t.closed))
            r.add("pde_" + tag + "_abs_error", std::fabs(values.back() - t.closed), "<=", ctx.cfg.tol_pde);
        else
            sine_pde = values.back();
        if (values.size() > 1)
            r.info("pde_" + tag + "_refinement_change", std::fabs(values.back() - values[values.size() - 2]));
        pde.push_back({{"payoff", t.name}, {"dx", ctx.cfg.pde_dx}, {"values", values}});
    }
    r.info("pde_sin", sine_pde);
    r.info("mc_upper_sin", sine.upper);
    r.add("mc_sin_minus_pde_minus_3se", sine.upper - sine_pde - 3.0 * sine.upper_se, "<=", ctx.cfg.tol_pde);
    json est = json::array();
    for (const auto* e : {&linear, &square, &neg_square, &abs, &sine}) est.push_back(estimate_json(*e));
    r.details["estimates"] = std::move(est);
    r.details["pde"] = std::move(pde);
}

void eval_sublinearity(const Context& ctx, CheckReport& r) {
    const auto m = terminal_samples(ctx, [](double x) { return x; });
    const auto neg = terminal_samples(ctx, [](double x) { return -x; });
    const auto sq = terminal_samples(ctx, [](double x) { return x * x; });
    const auto ab = terminal_samples(ctx, [](double x) { return std::fabs(x); });
    const std::pair<const char*, SublinearityReport> pairs[] = {
        {"square,abs", sublinearity_from_samples(sq, ab, 2.0, 1.25)},
        {"M,-M", sublinearity_from_samples(m, neg, 2.0, 1.25)}};
    json rows = json::array();
    for (const auto& [tag, s] : pairs) {
        const std::string t = tag;
        r.add("subadditive[" + t + "]", s.subadditive ? 1.0 : 0.0, "==", 1.0);
        r.add("homogeneous[" + t + "]", s.homogeneous ? 1.0 : 0.0, "==", 1.0);
        r.add("monotone[" + t + "]", s.monotone ? 1.0 : 0.0, "==", 1.0);
        r.add("constant_preserved[" + t + "]", s.constant_preserved ? 1.0 : 0.0, "==", 1.0);
        rows.push_back({{"pair", t}, {"upper_x", s.upper_x}, {"upper_y", s.upper_y},
                        {"upper_sum", s.upper_sum}, {"combined_se", s.combined_se},
                        {"homogeneity_gap", s.homogeneity_gap}});
    }
    r.details["pairs"] = std::move(rows);
}

const std::vector<CheckDef>& check_table() {
    static const std::vector<CheckDef> table = {
        {"h_assumption", plan_h_assumption, eval_h_assumption},
        {"quadratic_variation", plan_quadratic_variation, eval_quadratic_variation},
        {"norm_sandwich", plan_norm_sandwich, eval_norm_sandwich},
        {"isometry", plan_isometry, eval_isometry},
        {"tail_truncation", plan_tail_truncation, eval_tail_truncation},
        {"dominated_convergence", plan_dominated_convergence, eval_dominated_convergence},
        {"ae_identity", plan_ae_identity, eval_ae_identity},
        {"krylov", plan_krylov, eval_krylov},
        {"local_time", plan_local_time, eval_local_time},
        {"occupation_formula", plan_occupation_formula, eval_occupation_formula},
        {"growth_set", plan_growth_set, eval_growth_set},
        {"bicontinuity", plan_bicontinuity, eval_bicontinuity},
        {"tanaka", plan_tanaka, eval_tanaka},
        {"expectation", plan_terminal, eval_expectation},
        {"sublinearity", plan_terminal, eval_sublinearity},
    };
    return table;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

const std::vector<std::string>& check_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& c : check_table()) n.push_back(c.name);
        return n;
    }();
    return names;
}

SuiteResult run_suite(const SuiteConfig& config, std::ostream* progress) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto band = config.band();
    Context ctx{config,
                band,
                default_strategy_family(band, config.family_k, config.pivot),
                config.resolved_ladder(),
                LevelGrid::centered(config.resolved_half_width(), config.level_spacing),
                {}};
    if (!config.strict_band) {
        std::vector<ControlStrategy> relaxed;
        for (const auto& s : ctx.family.strategies())
            relaxed.emplace_back(s.label(), s.kind(), s.band(), BandMode::clamp);
        ctx.family = StrategyFamily(ctx.family.label(), std::move(relaxed));
    }

    SuiteResult result;
    std::vector<const CheckDef*> enabled;
    for (const auto& name : config.enabled_checks())
        for (const auto& c : check_table())
            if (name == c.name) enabled.push_back(&c);

    std::map<std::string, std::string> plan_errors;
    for (const auto* c : enabled) {
        try {
            c->plan(ctx);
        } catch (const std::exception& e) {
            plan_errors[c->name] = e.what();
        }
    }

    SimulationOptions options;
    options.workers = config.workers;
    for (auto& [steps, pass] : ctx.passes) {
        const auto t0 = std::chrono::steady_clock::now();
        if (progress)
            *progress << "simulating N=" << steps << ", " << pass.n_paths() << " paths x "
                      << ctx.family.size() << " strategies" << std::endl;
        pass.run(ctx.family, config.seed, options);
        result.pass_seconds.emplace_back(steps, seconds_since(t0));
        result.simulation_seconds += result.pass_seconds.back().second;
    }

    for (const auto* c : enabled) {
        CheckReport r;
        r.name = c->name;
        r.seed = config.seed;
        const auto t0 = std::chrono::steady_clock::now();
        if (const auto it = plan_errors.find(c->name); it != plan_errors.end()) {
            r.passed = false;
            r.error = it->second;
        } else {
            try {
                c->evaluate(ctx, r);
            } catch (const std::exception& e) {
                r.passed = false;
                r.error = e.what();
            }
        }
        r.runtime_seconds = seconds_since(t0);
        if (progress)
            *progress << "  " << r.name << ": " << (!r.error.empty() ? "error" : r.passed ? "pass" : "fail")
                      << std::endl;
        result.passed = result.passed && r.passed;
        result.errored = result.errored || !r.error.empty();
        result.reports.push_back(std::move(r));
    }
    result.runtime_seconds = seconds_since(start);
    return result;
}

namespace {

const char* status_of(const CheckReport& r) {
    if (!r.error.empty()) return "error";
    return r.passed ? "pass" : "fail";
}

}  // namespace

json suite_report_json(const SuiteResult& result, const SuiteConfig& config, bool include_timings) {
    json j;
    j["schema"] = "gmlab.verify";
    j["schema_version"] = kReportSchemaVersion;
    j["status"] = result.errored ? "error" : result.passed ? "pass" : "fail";
    j["config"] = config.echo();
    json checks = json::array();
    for (const auto& r : result.reports) {
        json c;
        c["name"] = r.name;
        c["status"] = status_of(r);
        if (!r.error.empty()) c["error"] = r.error;
        c["seed"] = r.seed;
        json stats = json::object();
        for (const auto& m : r.metrics) {
            json s;
            s["value"] = m.value;
            s["relation"] = m.relation;
            if (m.relation != "info") s["tolerance"] = m.bound;
            s["pass"] = m.pass;
            stats[m.name] = std::move(s);
        }
        c["statistics"] = std::move(stats);
        c["details"] = r.details;
        c["config_echo"] = config.echo();
        if (include_timings) c["runtime_seconds"] = r.runtime_seconds;
        checks.push_back(std::move(c));
    }
    j["checks"] = std::move(checks);
    j["execution"] = {{"workers", config.workers}};
    if (include_timings)
        j["timings"] = {{"total_seconds", result.runtime_seconds},
                        {"simulation_seconds", result.simulation_seconds},
                        {"passes", result.pass_seconds}};
    return j;
}

std::string suite_table(const SuiteResult& result) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-22s %-6s %9s  %s\n", "check", "status", "seconds", "failing metrics");
    out << line;
    for (const auto& r : result.reports) {
        std::string failing;
        for (const auto& m : r.metrics)
            if (!m.pass) failing += (failing.empty() ? "" : ", ") + m.name;
        if (!r.error.empty()) failing = r.error;
        std::snprintf(line, sizeof line, "%-22s %-6s %9.2f  ", r.name.c_str(), status_of(r), r.runtime_seconds);
        out << line << failing << "\n";
    }
    std::snprintf(line, sizeof line, "suite: %s (%zu checks, %.1f s, %.1f s simulating)\n",
                  result.errored ? "error" : result.passed ? "pass" : "fail", result.reports.size(),
                  result.runtime_seconds, result.simulation_seconds);
    out << line;
    return out.str();
}

}  // namespace gmlab
