#include <cmath>
#include <cstring>

#include "gmlab/simd/kernels.hpp"
#include "normal_transform.hpp"
#include "reduction.hpp"

namespace gmlab::simd {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

}  // namespace

Counter philox4x32_10(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key.w[0] += kWeyl0;
            key.w[1] += kWeyl1;
        }
        const std::uint64_t p0 = std::uint64_t{kMul0} * ctr.w[0];
        const std::uint64_t p1 = std::uint64_t{kMul1} * ctr.w[2];
        const Counter next{{static_cast<std::uint32_t>(p1 >> 32) ^ ctr.w[1] ^ key.w[0],
                            static_cast<std::uint32_t>(p1),
                            static_cast<std::uint32_t>(p0 >> 32) ^ ctr.w[3] ^ key.w[1],
                            static_cast<std::uint32_t>(p0)}};
        ctr = next;
    }
    return ctr;
}

double uniform_from_words(std::uint32_t lo, std::uint32_t hi) {
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1p-52;
}

namespace {

void philox_normals_scalar(Key key, std::uint32_t c1, std::uint64_t path,
                           std::uint32_t first_pair, std::size_t n_pairs, double* out) {
    const auto path_lo = static_cast<std::uint32_t>(path);
    const auto path_hi = static_cast<std::uint32_t>(path >> 32);
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const Counter r = philox4x32_10(
            Counter{{first_pair + static_cast<std::uint32_t>(p), c1, path_lo, path_hi}}, key);
        const double u1 = uniform_from_words(r.w[0], r.w[1]);
        const double u2 = uniform_from_words(r.w[2], r.w[3]);
        detail::box_muller(u1, u2, out[2 * p], out[2 * p + 1]);
    }
}

double sgn_dot_scalar(const double* m, const double* dm, double a, std::size_t n) {
    detail::Lanes8 acc;
    for (std::size_t j = 0; j < n; ++j) acc.add(j, m[j] > a ? dm[j] : -dm[j]);
    return acc.total();
}

double window_sum_scalar(const double* m, const double* w, double lo, double hi,
                         std::size_t n) {
    detail::Lanes8 acc;
    for (std::size_t j = 0; j < n; ++j) acc.add(j, (m[j] >= lo && m[j] < hi) ? w[j] : 0.0);
    return acc.total();
}

double crossing_sum_scalar(const double* m, double a, std::size_t n) {
    detail::Lanes8 acc;
    for (std::size_t j = 0; j < n; ++j) {
        const bool before = m[j] > a;
        const bool after = m[j + 1] > a;
        const double d = m[j + 1] - a;
        const double mag = d + d;
        acc.add(j, before != after ? std::fabs(mag) : 0.0);
    }
    return acc.total();
}

double sum_squares_scalar(const double* x, std::size_t n) {
    detail::Lanes8 acc;
    for (std::size_t j = 0; j < n; ++j) acc.add(j, x[j] * x[j]);
    return acc.total();
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
    detail::Lanes8 acc;
    for (std::size_t j = 0; j < n; ++j) acc.add(j, x[j] * y[j]);
    return acc.total();
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{"scalar",          philox_normals_scalar, sgn_dot_scalar,
                                   window_sum_scalar, crossing_sum_scalar,   sum_squares_scalar,
                                   dot_scalar};
    return table;
}

}  // namespace gmlab::simd
