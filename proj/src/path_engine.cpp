#include "gmlab/path_engine.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

#include "gmlab/errors.hpp"
#include "gmlab/simd/kernels.hpp"

namespace gmlab {

namespace {

constexpr std::uint32_t kSequentialStream = 0x40000000u;
constexpr std::uint32_t kSwitchStream = 0x80000000u;

simd::Key key_from_seed(std::uint64_t seed) {
    return {{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}};
}

// Round to the nearest multiple of kPathQuantum (ties to even). Adding and
// removing 1.5 * 2^52 rounds to an integer for |x| < 2^51, matching nearbyint
// without a libm call.
double to_lattice(double x) {
    constexpr double kShift = 0x1.8p52;
    const double scaled = x * 0x1p40;
    return ((scaled + kShift) - kShift) * kPathQuantum;
}

// Per-thread scratch for the Brownian driver.
struct DriverScratch {
    std::vector<double> w;
    std::vector<double> z;

    void normals(const simd::KernelTable& k, simd::Key key, std::uint32_t stream, std::uint64_t path,
                 std::size_t count) {
        const std::size_t pairs = (count + 1) / 2;
        z.resize(2 * pairs);
        k.philox_normals(key, stream, path, 0, pairs, z.data());
    }

    // W at every grid node.
    void build(const TimeGrid& grid, simd::Key key, std::uint64_t path) {
        const simd::KernelTable& k = simd::active_kernels();
        const std::size_t n = grid.steps();
        w.assign(n + 1, 0.0);
        if (!grid.uniform()) {
            normals(k, key, kSequentialStream, path, n);
            for (std::size_t j = 0; j < n; ++j) w[j + 1] = w[j] + std::sqrt(grid.dt(j)) * z[j];
            return;
        }
        // n = q * 2^m: q sequential coarse increments, then m bridge levels.
        const int m = std::countr_zero(n);
        const std::size_t q = n >> m;
        const std::size_t coarse = std::size_t{1} << m;
        normals(k, key, 0, path, q);
        const double sd0 = std::sqrt(grid.horizon() / static_cast<double>(q));
        for (std::size_t i = 0; i < q; ++i) w[(i + 1) * coarse] = w[i * coarse] + sd0 * z[i];
        const double dt = grid.dt(0);
        for (int level = 1; level <= m; ++level) {
            const std::size_t half = std::size_t{1} << (m - level);
            const std::size_t count = q << (level - 1);
            normals(k, key, static_cast<std::uint32_t>(level), path, count);
            const double sd = std::sqrt(static_cast<double>(half) * dt * 0.5);
            for (std::size_t c = 0; c < count; ++c) {
                const std::size_t i = (2 * c + 1) * half;
                w[i] = 0.5 * (w[i - half] + w[i + half]) + sd * z[c];
            }
        }
    }
};

// Switching-state uniform for step j.
double switch_uniform(simd::Key key, std::uint32_t offset, std::uint64_t path, std::size_t j) {
    const simd::Counter r = simd::philox4x32_10(
        simd::Counter{{static_cast<std::uint32_t>(j >> 1), kSwitchStream | offset,
                       static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)}},
        key);
    return (j & 1) ? simd::uniform_from_words(r.w[2], r.w[3])
                   : simd::uniform_from_words(r.w[0], r.w[1]);
}

void fill_row(const ControlStrategy& strategy, const TimeGrid& grid, std::uint64_t path,
              simd::Key key, DriverScratch& scratch, std::span<double> m, std::span<double> inc,
              std::span<double> qv, std::span<double> sig) {
    scratch.build(grid, key, path);
    const std::vector<double>& w = scratch.w;
    const std::size_t n = grid.steps();
    const auto* sw = std::get_if<RandomSwitching>(&strategy.kind());
    const auto* threshold = std::get_if<ThresholdFeedback>(&strategy.kind());
    const std::optional<double> fixed = strategy.constant_sigma();
    bool first_state = true;
    if (sw != nullptr && !fixed) first_state = switch_uniform(key, sw->seed_offset, path, 0) < 0.5;

    m[0] = 0.0;
    qv[0] = 0.0;
    double cur = 0.0;
    double q = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double sigma;
        if (fixed) {
            sigma = *fixed;
        } else if (threshold != nullptr) {
            sigma = cur >= threshold->pivot ? threshold->sigma_at_or_above : threshold->sigma_below;
        } else if (sw != nullptr) {
            if (j > 0) {
                const double p_switch = -std::expm1(-sw->intensity * grid.dt(j - 1));
                if (switch_uniform(key, sw->seed_offset, path, j) < p_switch) first_state = !first_state;
            }
            sigma = first_state ? sw->sigma_first : sw->sigma_second;
        } else {
            sigma = strategy.sigma_at(grid.node(j), cur);
        }
        const double next = cur + to_lattice(sigma * (w[j + 1] - w[j]));
        m[j + 1] = next;
        inc[j] = next - cur;
        sig[j] = sigma;
        q += sigma * sigma * grid.dt(j);
        qv[j + 1] = q;
        cur = next;
    }
}

}  // namespace

void simulate_path_range(const ControlStrategy& strategy, const TimeGrid& grid,
                         std::size_t first_path, std::size_t count, std::uint64_t seed,
                         PathBundle& bundle) {
    const std::size_t n = grid.steps();
    bundle.grid = grid;
    bundle.first_path = first_path;
    bundle.n_paths = count;
    bundle.seed = seed;
    bundle.strategy_label = strategy.label();
    bundle.m_values.resize(count, n + 1);
    bundle.increments.resize(count, n);
    bundle.qv_exact.resize(count, n + 1);
    bundle.sigma_used.resize(count, n);
    thread_local DriverScratch scratch;
    const simd::Key key = key_from_seed(seed);
    for (std::size_t r = 0; r < count; ++r) {
        fill_row(strategy, grid, first_path + r, key, scratch, bundle.m_values.row(r),
                 bundle.increments.row(r), bundle.qv_exact.row(r), bundle.sigma_used.row(r));
    }
}

PathBundle simulate_paths(const ControlStrategy& strategy, const TimeGrid& grid,
                          std::size_t n_paths, std::uint64_t seed, const SimulationOptions& options) {
    if (n_paths == 0) throw InvalidArgument("n_paths must be at least 1");
    const std::size_t per_path = (4 * grid.steps() + 2) * sizeof(double);
    if (n_paths > options.max_bundle_bytes / per_path) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "bundle of %zu paths x %zu steps exceeds the %zu-byte guard; stream with "
                      "for_each_block instead",
                      n_paths, grid.steps(), options.max_bundle_bytes);
        throw CapacityError(buf);
    }
    PathBundle bundle;
    bundle.grid = grid;
    bundle.n_paths = n_paths;
    bundle.seed = seed;
    bundle.strategy_label = strategy.label();
    const std::size_t n = grid.steps();
    bundle.m_values = Matrix(n_paths, n + 1);
    bundle.increments = Matrix(n_paths, n);
    bundle.qv_exact = Matrix(n_paths, n + 1);
    bundle.sigma_used = Matrix(n_paths, n);
    const simd::Key key = key_from_seed(seed);
    const std::size_t block = std::max<std::size_t>(1, options.block_paths);
    const std::size_t n_blocks = (n_paths + block - 1) / block;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        DriverScratch scratch;
        try {
            for (std::size_t b = next++; b < n_blocks; b = next++) {
                for (std::size_t r = b * block; r < std::min(n_paths, (b + 1) * block); ++r) {
                    fill_row(strategy, grid, r, key, scratch, bundle.m_values.row(r),
                             bundle.increments.row(r), bundle.qv_exact.row(r),
                             bundle.sigma_used.row(r));
                }
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, n_blocks);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return bundle;
}

void for_each_block(const ControlStrategy& strategy, const TimeGrid& grid, std::size_t n_paths,
                    std::uint64_t seed, const SimulationOptions& options,
                    const std::function<void(const PathBundle&)>& visit) {
    if (n_paths == 0) throw InvalidArgument("n_paths must be at least 1");
    const std::size_t block = std::max<std::size_t>(1, options.block_paths);
    const std::size_t n_blocks = (n_paths + block - 1) / block;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::atomic<bool> stop{false};
    auto work = [&] {
        PathBundle bundle;
        try {
            for (std::size_t b = next++; b < n_blocks && !stop; b = next++) {
                const std::size_t first = b * block;
                simulate_path_range(strategy, grid, first, std::min(block, n_paths - first), seed, bundle);
                visit(bundle);
            }
        } catch (...) {
            stop = true;
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, n_blocks);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

Matrix quadratic_variation_partition(const PathBundle& bundle) {
    const std::size_t n = bundle.steps();
    Matrix out(bundle.n_paths, n + 1);
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
        const auto inc = bundle.increments.row(i);
        auto row = out.row(i);
        double s = 0.0;
        row[0] = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += inc[j] * inc[j];
            row[j + 1] = s;
        }
    }
    return out;
}

double partition_qv_at_end(const PathBundle& bundle, std::size_t row) {
    const auto inc = bundle.increments.row(row);
    return simd::active_kernels().sum_squares(inc.data(), inc.size());
}

void write_paths_csv(const PathBundle& bundle, const std::string& path, std::size_t max_rows) {
    const std::size_t rows = bundle.n_paths * (bundle.steps() + 1);
    if (rows > max_rows) {
        throw CapacityError("path dump of " + std::to_string(rows) + " rows exceeds limit " +
                            std::to_string(max_rows));
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open " + tmp);
        out << "path_id,step,t,M,qv_exact,sigma\n";
        out.precision(17);
        const std::size_t n = bundle.steps();
        for (std::size_t i = 0; i < bundle.n_paths; ++i) {
            for (std::size_t j = 0; j <= n; ++j) {
                out << bundle.path_id(i) << ',' << j << ',' << bundle.grid.node(j) << ','
                    << bundle.m_values(i, j) << ',' << bundle.qv_exact(i, j) << ',';
                if (j < n) out << bundle.sigma_used(i, j);
                out << '\n';
            }
        }
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

}  // namespace gmlab
