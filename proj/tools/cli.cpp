#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "gmlab/errors.hpp"
#include "gmlab/expectation.hpp"
#include "gmlab/local_time.hpp"
#include "gmlab/path_engine.hpp"
#include "gmlab/stats.hpp"
#include "gmlab/verify.hpp"

namespace gmlab::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr const char* kOutEnv = "GMLAB_OUT";

struct CommonFlags {
    std::string config_file;
    std::optional<std::string> seed, paths, steps, horizon, sigma_low, sigma_high, workers, strict_band;
    std::optional<std::string> out;
    std::vector<std::string> sets;
};

struct Resolved {
    SuiteConfig suite;
    std::set<std::string> explicit_keys;
    fs::path out_dir;
};

void add_common(CLI::App& cmd, CommonFlags& f) {
    cmd.add_option("--config", f.config_file, "key=value configuration file (flags win)");
    cmd.add_option("--seed", f.seed, "master seed");
    cmd.add_option("--paths", f.paths, "paths per strategy");
    cmd.add_option("--steps", f.steps, "time steps N");
    cmd.add_option("--T", f.horizon, "horizon");
    cmd.add_option("--sigma-low", f.sigma_low, "lower volatility bound");
    cmd.add_option("--sigma-high", f.sigma_high, "upper volatility bound");
    cmd.add_option("--out", f.out, std::string("output directory (default $") + kOutEnv + " or ./gmlab_out)");
    cmd.add_option("--workers", f.workers, "worker threads");
    cmd.add_option("--strict-band", f.strict_band, "true: out-of-band volatility is an error; false: clamp");
    cmd.add_option("--set", f.sets, "extra key=value setting, repeatable");
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string normalize_key(std::string key) {
    key = trim(key);
    std::replace(key.begin(), key.end(), '-', '_');
    return key == "T" ? "horizon" : key;
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& where) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + text + "'");
    return {normalize_key(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

Resolved resolve(const CommonFlags& f) {
    Resolved r;
    std::optional<std::string> out_key;
    auto apply = [&](const std::string& key, const std::string& value) {
        if (key == "out") {
            out_key = value;
            return;
        }
        r.suite.set(key, value);
        r.explicit_keys.insert(key);
    };
    if (!f.config_file.empty()) {
        std::ifstream in(f.config_file);
        if (!in) throw ConfigError("cannot read config file '" + f.config_file + "'");
        std::string line;
        for (int n = 1; std::getline(in, line); ++n) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            if (trim(line).empty()) continue;
            const auto [k, v] = split_assignment(line, f.config_file + ":" + std::to_string(n));
            apply(k, v);
        }
    }
    for (const auto& s : f.sets) {
        const auto [k, v] = split_assignment(s, "--set");
        apply(k, v);
    }
    const std::pair<const char*, const std::optional<std::string>*> flags[] = {
        {"seed", &f.seed},           {"paths", &f.paths},           {"steps", &f.steps},
        {"horizon", &f.horizon},     {"sigma_low", &f.sigma_low},   {"sigma_high", &f.sigma_high},
        {"workers", &f.workers},     {"strict_band", &f.strict_band}};
    for (const auto& [key, value] : flags)
        if (*value) apply(key, **value);
    if (f.out) out_key = *f.out;
    if (out_key) {
        r.out_dir = *out_key;
    } else if (const char* env = std::getenv(kOutEnv); env && *env) {
        r.out_dir = env;
    } else {
        r.out_dir = "gmlab_out";
    }
    return r;
}

void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp.string());
        out << content;
        if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string file_label(const std::string& label) {
    std::string s;
    for (char c : label) s += std::isalnum(static_cast<unsigned char>(c)) || c == '.' ? c : '_';
    while (!s.empty() && s.back() == '_') s.pop_back();
    return s;
}

std::string csv_preamble(const json& echo) { return "# config: " + echo.dump() + "\n"; }

StrategyFamily family_of(const SuiteConfig& c) {
    const auto band = c.band();
    auto family = default_strategy_family(band, c.family_k, c.pivot);
    if (c.strict_band) return family;
    std::vector<ControlStrategy> relaxed;
    for (const auto& s : family.strategies())
        relaxed.emplace_back(s.label(), s.kind(), s.band(), BandMode::clamp);
    return StrategyFamily(family.label(), std::move(relaxed));
}

json command_echo(const Resolved& r, const std::string& command) {
    json e = r.suite.echo();
    e["command"] = command;
    return e;
}

SimulationOptions options_of(const SuiteConfig& c) {
    SimulationOptions o;
    o.workers = c.workers;
    return o;
}

// simulate -----------------------------------------------------------------

int cmd_simulate(const Resolved& r, std::size_t dump_paths, std::ostream& out) {
    for (const char* key : {"steps", "paths"})
        if (!r.explicit_keys.count(key))
            throw UsageError(std::string("simulate requires --") + key + " (or '" + key + "' in the config file)");
    const auto& c = r.suite;
    c.validate();
    const auto family = family_of(c);
    const auto grid = make_uniform_grid(c.horizon, c.steps);
    json echo = command_echo(r, "simulate");
    echo["dump_paths"] = dump_paths;
    json rows = json::array();
    for (const auto& strategy : family.strategies()) {
        std::vector<double> qv(c.paths), partition(c.paths), terminal(c.paths);
        for_each_block(strategy, grid, c.paths, c.seed, options_of(c), [&](const PathBundle& b) {
            for (std::size_t i = 0; i < b.n_paths; ++i) {
                qv[b.path_id(i)] = b.qv_exact.row(i).back();
                partition[b.path_id(i)] = partition_qv_at_end(b, i);
                terminal[b.path_id(i)] = b.m_values.row(i).back();
            }
        });
        const auto q = sample_stats(qv), p = sample_stats(partition), m = sample_stats(terminal);
        rows.push_back({{"strategy", strategy.label()},
                        {"mean_qv_exact", q.mean},
                        {"se_qv_exact", q.std_error},
                        {"mean_partition_qv", p.mean},
                        {"se_partition_qv", p.std_error},
                        {"mean_terminal", m.mean},
                        {"se_terminal", m.std_error}});
        if (dump_paths > 0) {
            const auto bundle = simulate_paths(strategy, grid, std::min(dump_paths, c.paths), c.seed);
            const fs::path target = r.out_dir / ("paths_" + file_label(strategy.label()) + ".csv");
            fs::create_directories(r.out_dir);
            const fs::path body = target.string() + ".body";
            write_paths_csv(bundle, body.string());
            const std::string content = csv_preamble(echo) + read_file(body);
            fs::remove(body);
            write_atomic(target, content);
        }
    }
    json doc;
    doc["schema"] = "gmlab.simulate";
    doc["schema_version"] = kReportSchemaVersion;
    doc["config"] = echo;
    doc["strategies"] = std::move(rows);
    write_atomic(r.out_dir / "simulate_summary.json", doc.dump(2) + "\n");
    out << doc.dump(2) << "\n";
    return kPass;
}

// expectation ----------------------------------------------------------------

int cmd_expectation(const Resolved& r, const std::vector<std::string>& names, bool pde,
                    std::ostream& out) {
    std::vector<TerminalPayoff> payoffs;
    for (const auto& n : names) {
        try {
            payoffs.push_back(payoff_by_name(n));
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
    }
    SuiteConfig c = r.suite;
    if (!r.explicit_keys.count("steps")) c.steps = c.expectation_steps;
    if (!r.explicit_keys.count("paths")) c.paths = c.expectation_paths;
    if (!r.explicit_keys.count("ladder")) c.ladder.clear();
    c.validate();
    const auto family = family_of(c);
    const auto grid = make_uniform_grid(c.horizon, c.steps);
    std::vector<PathPayoff> fns;
    std::vector<std::string> labels;
    for (const auto& p : payoffs) {
        fns.push_back(p.on_path());
        labels.push_back(p.name);
    }
    const auto reports = upper_expectations(fns, labels, family, grid, c.paths, c.seed, options_of(c));
    json echo = c.echo();
    echo["command"] = "expectation";
    echo["payoffs"] = names;
    echo["pde"] = pde;
    json list = json::array();
    for (std::size_t k = 0; k < reports.size(); ++k) {
        const auto& e = reports[k];
        json j;
        j["payoff"] = e.payoff;
        j["upper"] = e.upper;
        j["upper_se"] = e.upper_se;
        j["lower"] = e.lower;
        j["lower_se"] = e.lower_se;
        j["argmax"] = e.argmax_label;
        j["argmin"] = e.argmin_label;
        j["upper_is_family_lower_bound"] = e.upper_is_family_lower_bound;
        json per = json::object();
        for (const auto& s : e.per_strategy)
            per[s.label] = {{"mean", s.stats.mean}, {"se", s.stats.std_error}};
        j["per_strategy"] = std::move(per);
        if (pde) {
            const double dx = c.pde_dx.back();
            const SpaceGrid space{std::max(6.0, 6.0 * c.sigma_high * std::sqrt(c.horizon)), dx};
            j["pde_upper"] = solve_g_heat(payoffs[k].f, c.band(), c.horizon, space,
                                          stable_time_steps(c.band(), c.horizon, dx))
                                 .value;
            j["pde_dx"] = dx;
        }
        list.push_back(std::move(j));
    }
    json doc;
    doc["schema"] = "gmlab.expectation";
    doc["schema_version"] = kReportSchemaVersion;
    doc["config"] = echo;
    doc["seed"] = c.seed;
    doc["n_paths"] = c.paths;
    doc["steps"] = c.steps;
    doc["estimates"] = std::move(list);
    write_atomic(r.out_dir / "expectation.json", doc.dump(2) + "\n");
    out << doc.dump(2) << "\n";
    return kPass;
}

// localtime ------------------------------------------------------------------

int cmd_localtime(const Resolved& r, std::optional<double> epsilon, bool symmetric, std::ostream& out) {
    SuiteConfig c = r.suite;
    if (!r.explicit_keys.count("steps")) c.steps = 1024;
    if (!r.explicit_keys.count("paths")) c.paths = 2000;
    if (!r.explicit_keys.count("ladder")) c.ladder.clear();
    c.validate();
    const double eps = epsilon.value_or(c.level_spacing);
    if (!(eps > 0.0)) throw ConfigError("--epsilon must be positive");
    const double half = c.level_half_width > 0.0 ? c.level_half_width : 4.0 * c.sigma_high * std::sqrt(c.horizon);
    const auto levels = LevelGrid::centered(half, c.level_spacing);
    const auto grid = make_uniform_grid(c.horizon, c.steps);
    const auto snaps = default_snapshots(c.steps);
    const auto family = family_of(c);
    const std::size_t K = levels.size(), S = snaps.size(), nodes = K * S;
    constexpr std::size_t kBlock = 64;
    auto opts = options_of(c);
    opts.block_paths = kBlock;

    json echo = c.echo();
    echo["command"] = "localtime";
    echo["epsilon"] = eps;
    echo["symmetric"] = symmetric;
    echo["level_half_width"] = half;
    json summaries = json::array();
    for (const auto& strategy : family.strategies()) {
        const std::size_t blocks = (c.paths + kBlock - 1) / kBlock;
        // per block: sum tanaka, sum tanaka^2, sum occupation; combined in block order
        std::vector<std::vector<double>> partial(blocks);
        for_each_block(strategy, grid, c.paths, c.seed, opts, [&](const PathBundle& b) {
            std::vector<double> acc(3 * nodes, 0.0), t(nodes), o(nodes);
            for (std::size_t i = 0; i < b.n_paths; ++i) {
                const auto w = qv_weights(b.sigma_used.row(i), grid);
                tanaka_levels_path(b.m_values.row(i), levels, snaps, t);
                occupation_levels_path(b.m_values.row(i), w, levels, eps, symmetric, snaps, o);
                for (std::size_t k = 0; k < nodes; ++k) {
                    acc[k] += t[k];
                    acc[nodes + k] += t[k] * t[k];
                    acc[2 * nodes + k] += o[k];
                }
            }
            partial[b.first_path / kBlock] = std::move(acc);
        });
        std::vector<double> total(3 * nodes, 0.0);
        for (const auto& p : partial)
            for (std::size_t k = 0; k < total.size(); ++k) total[k] += p[k];
        const double n = static_cast<double>(c.paths);
        std::ostringstream csv;
        csv.precision(17);
        csv << csv_preamble(echo) << "level,time,mean_tanaka,mean_occupation,se\n";
        double best = -INFINITY, best_level = 0.0, l1 = 0.0, sup = 0.0, best_occ = -INFINITY;
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t k = 0; k < K; ++k) {
                const std::size_t x = s * K + k;
                const double mt = total[x] / n, mo = total[2 * nodes + x] / n;
                const double var = n > 1 ? std::max(total[nodes + x] / n - mt * mt, 0.0) * n / (n - 1) : 0.0;
                csv << levels.level(k) << ',' << grid.node(snaps[s]) << ',' << mt << ',' << mo << ','
                    << std::sqrt(var / n) << '\n';
                if (mt > best) best = mt, best_level = levels.level(k);
                best_occ = std::max(best_occ, mo);
                l1 += std::fabs(mt - mo);
                sup = std::max(sup, std::fabs(mt - mo));
            }
        }
        const std::string file = "localtime_" + file_label(strategy.label()) + ".csv";
        write_atomic(r.out_dir / file, csv.str());
        summaries.push_back({{"strategy", strategy.label()},
                             {"file", file},
                             {"max_mean_tanaka", best},
                             {"level_of_max", best_level},
                             {"max_mean_occupation", best_occ},
                             {"discrepancy_l1", l1 / static_cast<double>(nodes)},
                             {"discrepancy_sup", sup}});
    }
    json doc;
    doc["schema"] = "gmlab.localtime";
    doc["schema_version"] = kReportSchemaVersion;
    doc["config"] = echo;
    doc["strategies"] = std::move(summaries);
    write_atomic(r.out_dir / "localtime_summary.json", doc.dump(2) + "\n");
    out << doc.dump(2) << "\n";
    return kPass;
}

// verify ---------------------------------------------------------------------

int cmd_verify(const Resolved& r, const std::vector<std::string>& checks, bool timings, bool progress,
               const std::string& report_name, std::ostream& out, std::ostream& err) {
    SuiteConfig c = r.suite;
    if (!checks.empty()) c.checks = checks;
    c.validate();
    const auto result = run_suite(c, progress ? &err : nullptr);
    const auto doc = suite_report_json(result, c, timings);
    write_atomic(r.out_dir / report_name, doc.dump(2) + "\n");
    out << suite_table(result);
    if (result.errored) return kRuntime;
    return result.passed ? kPass : kCheckFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Monte Carlo laboratory for martingales under volatility uncertainty", "gmlab"};
    app.require_subcommand(1);

    CommonFlags sim_flags, exp_flags, lt_flags, ver_flags;
    std::size_t dump_paths = 0;
    auto* sim = app.add_subcommand("simulate", "simulate paths and summarize quadratic variation");
    add_common(*sim, sim_flags);
    sim->add_option("--dump-paths", dump_paths, "write the first K paths per strategy as CSV");

    std::vector<std::string> payoffs;
    bool pde = false;
    auto* exp = app.add_subcommand("expectation", "upper and lower expectations of terminal payoffs");
    add_common(*exp, exp_flags);
    std::string valid_payoffs;
    for (const auto& n : payoff_names()) valid_payoffs += (valid_payoffs.empty() ? "" : ", ") + n;
    exp->add_option("payoff", payoffs, "payoff names: " + valid_payoffs)->required();
    exp->add_flag("--pde", pde, "also solve the G-heat equation for each payoff");

    std::optional<double> epsilon;
    bool symmetric = false;
    auto* lt = app.add_subcommand("localtime", "local time field export");
    add_common(*lt, lt_flags);
    lt->add_option("--epsilon", epsilon, "occupation window (default: level spacing)");
    lt->add_flag("--symmetric", symmetric, "symmetric occupation window");

    std::vector<std::string> checks;
    bool timings = false, progress = false;
    std::string report_name = "verify_report.json";
    auto* ver = app.add_subcommand("verify", "run the check suite");
    add_common(*ver, ver_flags);
    std::string valid_checks = "all";
    for (const auto& n : check_names()) valid_checks += ", " + n;
    ver->add_option("checks", checks, "checks to run: " + valid_checks);
    ver->add_flag("--timings", timings, "include runtimes in the report");
    ver->add_flag("--progress", progress, "progress on stderr");
    ver->add_option("--report", report_name, "report file name inside the output directory");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        if (!rev.empty()) rev.pop_back();  // program name
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kPass;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kPass;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return kUsage;
    }

    try {
        if (sim->parsed()) return cmd_simulate(resolve(sim_flags), dump_paths, out);
        if (exp->parsed()) return cmd_expectation(resolve(exp_flags), payoffs, pde, out);
        if (lt->parsed()) return cmd_localtime(resolve(lt_flags), epsilon, symmetric, out);
        return cmd_verify(resolve(ver_flags), checks, timings, progress, report_name, out, err);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kUsage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
}

}  // namespace gmlab::cli
