#pragma once

// Data-parallel inner loops used by the path engine and the estimators.
//
// Every kernel has a scalar reference implementation and, where the CPU
// supports it, an AVX2 variant. Variants are bit-identical to the reference:
// reductions follow one fixed tree (eight interleaved partial sums combined
// pairwise) and the normal transform uses only correctly rounded operations
// in the same order, so the selected ISA never changes a result.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace gmlab::simd {

/// Philox4x32-10 counter block.
struct Counter {
    std::uint32_t w[4];
};

/// Philox key (two 32-bit words).
struct Key {
    std::uint32_t w[2];
};

struct KernelTable {
    std::string_view isa;

    /// Standard normals for counters (first_pair + p, c1, path_lo, path_hi),
    /// p < n_pairs; two normals per counter, written to out[2p], out[2p+1].
    void (*philox_normals)(Key key, std::uint32_t c1, std::uint64_t path,
                           std::uint32_t first_pair, std::size_t n_pairs,
                           double* out);

    /// sum_j sgn(m[j] - a) * dm[j], sgn(0) = -1.
    double (*sgn_dot)(const double* m, const double* dm, double a, std::size_t n);

    /// sum_j [lo <= m[j] < hi] * w[j].
    double (*window_sum)(const double* m, const double* w, double lo, double hi,
                         std::size_t n);

    /// sum_{j<n} 2|m[j+1] - a| over steps where m crosses a (side change with
    /// the x > a / x <= a split). Reads m[0..n].
    double (*crossing_sum)(const double* m, double a, std::size_t n);

    /// sum_j x[j]^2.
    double (*sum_squares)(const double* x, std::size_t n);

    /// sum_j x[j] * y[j].
    double (*dot)(const double* x, const double* y, std::size_t n);
};

const KernelTable& scalar_kernels();

/// nullptr when the build or the CPU lacks AVX2.
const KernelTable* avx2_kernels();

/// Best table for this CPU. GMLAB_SIMD=scalar forces the reference kernels.
const KernelTable& active_kernels();

/// Reference Philox4x32-10 block.
Counter philox4x32_10(Counter ctr, Key key);

/// Uniform in (0,1) from two 32-bit words, 52-bit resolution, never 0 or 1.
double uniform_from_words(std::uint32_t lo, std::uint32_t hi);

}  // namespace gmlab::simd
