// Compiled with -mavx2 only (no FMA contraction): every lane operation is the
// same correctly rounded IEEE operation the reference kernel performs.

#include "gmlab/simd/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include "normal_transform.hpp"
#include "reduction.hpp"

namespace gmlab::simd::detail {

// K independent 4-lane vectors per value: every operation is issued K times
// back to back, which keeps the long polynomial chains from stalling on
// latency.
template <int K>
struct Pack {
    __m256d v[K];

    Pack() = default;
    Pack(double x) {  // NOLINT: broadcast
        for (int k = 0; k < K; ++k) v[k] = _mm256_set1_pd(x);
    }

    template <class Op>
    GMLAB_INLINE static Pack map(const Pack& a, const Pack& b, Op op) {
        Pack r;
        for (int k = 0; k < K; ++k) r.v[k] = op(a.v[k], b.v[k]);
        return r;
    }

    GMLAB_INLINE friend Pack operator+(const Pack& a, const Pack& b) { return map(a, b, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); }); }
    GMLAB_INLINE friend Pack operator-(const Pack& a, const Pack& b) { return map(a, b, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); }); }
    GMLAB_INLINE friend Pack operator*(const Pack& a, const Pack& b) { return map(a, b, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); }); }
    GMLAB_INLINE friend Pack operator/(const Pack& a, const Pack& b) { return map(a, b, [](__m256d x, __m256d y) { return _mm256_div_pd(x, y); }); }
};

template <int K>
GMLAB_INLINE Pack<K> sqrt(const Pack<K>& x) {
    Pack<K> r;
    for (int k = 0; k < K; ++k) r.v[k] = _mm256_sqrt_pd(x.v[k]);
    return r;
}

GMLAB_INLINE __m256d exact_u52_to_double(__m256i bits) {
    const __m256i magic = _mm256_set1_epi64x(0x4330000000000000LL);
    return _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(bits, magic)),
                         _mm256_set1_pd(0x1p52));
}

template <int K>
GMLAB_INLINE void split_exponent(const Pack<K>& x, Pack<K>& m, Pack<K>& e) {
    for (int k = 0; k < K; ++k) {
        const __m256i bits = _mm256_castpd_si256(x.v[k]);
        const __m256i biased = _mm256_srli_epi64(bits, 52);
        const __m256i mant = _mm256_or_si256(
            _mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL)),
            _mm256_set1_epi64x(0x3FF0000000000000LL));
        m.v[k] = _mm256_castsi256_pd(mant);
        e.v[k] = _mm256_sub_pd(exact_u52_to_double(biased), _mm256_set1_pd(1023.0));
    }
}

template <int K>
GMLAB_INLINE void fold_sqrt2(Pack<K>& m, Pack<K>& e) {
    for (int k = 0; k < K; ++k) {
        const __m256d over = _mm256_cmp_pd(m.v[k], _mm256_set1_pd(1.4142135623730951), _CMP_GT_OQ);
        m.v[k] = _mm256_blendv_pd(m.v[k], _mm256_mul_pd(m.v[k], _mm256_set1_pd(0.5)), over);
        e.v[k] = _mm256_blendv_pd(e.v[k], _mm256_add_pd(e.v[k], _mm256_set1_pd(1.0)), over);
    }
}

template <int K>
GMLAB_INLINE Pack<K> round_nearest(const Pack<K>& x) {
    Pack<K> r;
    for (int k = 0; k < K; ++k)
        r.v[k] = _mm256_round_pd(x.v[k], _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    return r;
}

template <int K>
GMLAB_INLINE void rotate_quadrant(const Pack<K>& q, const Pack<K>& c, const Pack<K>& s, Pack<K>& c_out,
                            Pack<K>& s_out) {
    const __m256i one = _mm256_set1_epi64x(1);
    const __m256i two = _mm256_set1_epi64x(2);
    const __m256d sign = _mm256_set1_pd(-0.0);
    for (int k = 0; k < K; ++k) {
        const __m256i qi = _mm256_cvtepi32_epi64(_mm256_cvttpd_epi32(q.v[k]));
        const __m256d odd = _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(qi, one), one));
        const __m256d upper = _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(qi, two), two));
        const __m256d cs = _mm256_blendv_pd(c.v[k], s.v[k], odd);
        const __m256d sc = _mm256_blendv_pd(s.v[k], c.v[k], odd);
        c_out.v[k] = _mm256_xor_pd(cs, _mm256_and_pd(_mm256_xor_pd(odd, upper), sign));
        s_out.v[k] = _mm256_xor_pd(sc, _mm256_and_pd(upper, sign));
    }
}

}  // namespace gmlab::simd::detail

namespace gmlab::simd {

namespace {

constexpr int kPack = 4;
using Pack = detail::Pack<kPack>;

// kPack groups of four Philox blocks, one block per 64-bit lane, each word
// held in the low half. Rounds are interleaved across groups.
GMLAB_INLINE void philox_lanes(__m256i (&c)[kPack][4], Key key) {
    std::uint32_t k0 = key.w[0];
    std::uint32_t k1 = key.w[1];
    const __m256i mul0 = _mm256_set1_epi64x(0xD2511F53u);
    const __m256i mul1 = _mm256_set1_epi64x(0xCD9E8D57u);
    const __m256i low = _mm256_set1_epi64x(0xFFFFFFFFLL);
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        const __m256i kv0 = _mm256_set1_epi64x(k0);
        const __m256i kv1 = _mm256_set1_epi64x(k1);
        for (int g = 0; g < kPack; ++g) {
            const __m256i p0 = _mm256_mul_epu32(c[g][0], mul0);
            const __m256i p1 = _mm256_mul_epu32(c[g][2], mul1);
            const __m256i n0 = _mm256_xor_si256(_mm256_xor_si256(_mm256_srli_epi64(p1, 32), c[g][1]), kv0);
            const __m256i n2 = _mm256_xor_si256(_mm256_xor_si256(_mm256_srli_epi64(p0, 32), c[g][3]), kv1);
            c[g][0] = n0;
            c[g][1] = _mm256_and_si256(p1, low);
            c[g][2] = n2;
            c[g][3] = _mm256_and_si256(p0, low);
        }
    }
}

GMLAB_INLINE __m256d uniforms(__m256i lo, __m256i hi) {
    const __m256i bits = _mm256_or_si256(_mm256_slli_epi64(hi, 20), _mm256_srli_epi64(lo, 12));
    return _mm256_mul_pd(_mm256_add_pd(detail::exact_u52_to_double(bits), _mm256_set1_pd(0.5)),
                         _mm256_set1_pd(0x1p-52));
}

void philox_normals_avx2(Key key, std::uint32_t c1, std::uint64_t path,
                         std::uint32_t first_pair, std::size_t n_pairs, double* out) {
    const auto path_lo = static_cast<long long>(static_cast<std::uint32_t>(path));
    const auto path_hi = static_cast<long long>(static_cast<std::uint32_t>(path >> 32));
    constexpr std::size_t kStride = 4 * kPack;
    std::size_t p = 0;
    alignas(32) double z0[kStride];
    alignas(32) double z1[kStride];
    for (; p + kStride <= n_pairs; p += kStride) {
        Pack u1, u2;
        __m256i c[kPack][4];
        for (int k = 0; k < kPack; ++k) {
            const auto base = static_cast<std::uint32_t>(first_pair + p + 4 * k);
            c[k][0] = _mm256_set_epi64x(static_cast<std::uint32_t>(base + 3),
                                        static_cast<std::uint32_t>(base + 2),
                                        static_cast<std::uint32_t>(base + 1), base);
            c[k][1] = _mm256_set1_epi64x(c1);
            c[k][2] = _mm256_set1_epi64x(path_lo);
            c[k][3] = _mm256_set1_epi64x(path_hi);
        }
        philox_lanes(c, key);
        for (int k = 0; k < kPack; ++k) {
            u1.v[k] = uniforms(c[k][0], c[k][1]);
            u2.v[k] = uniforms(c[k][2], c[k][3]);
        }
        Pack a, b;
        detail::box_muller(u1, u2, a, b);
        for (int k = 0; k < kPack; ++k) {
            _mm256_store_pd(z0 + 4 * k, a.v[k]);
            _mm256_store_pd(z1 + 4 * k, b.v[k]);
        }
        for (std::size_t l = 0; l < kStride; ++l) {
            out[2 * (p + l)] = z0[l];
            out[2 * (p + l) + 1] = z1[l];
        }
    }
    if (p < n_pairs) {
        scalar_kernels().philox_normals(key, c1, path, first_pair + static_cast<std::uint32_t>(p),
                                        n_pairs - p, out + 2 * p);
    }
}

// Eight-wide accumulation into the shared tree; f(j) yields the __m256d of
// terms j..j+3 and tail(j) the scalar term.
template <class Vec, class Tail>
double reduce8(std::size_t n, Vec f, Tail tail) {
    __m256d acc_a = _mm256_setzero_pd();
    __m256d acc_b = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        acc_a = _mm256_add_pd(acc_a, f(j));
        acc_b = _mm256_add_pd(acc_b, f(j + 4));
    }
    detail::Lanes8 acc;
    _mm256_storeu_pd(acc.lane, acc_a);
    _mm256_storeu_pd(acc.lane + 4, acc_b);
    for (; j < n; ++j) acc.add(j, tail(j));
    return acc.total();
}

double sgn_dot_avx2(const double* m, const double* dm, double a, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    const __m256d sign = _mm256_set1_pd(-0.0);
    return reduce8(
        n,
        [&](std::size_t j) {
            const __m256d d = _mm256_loadu_pd(dm + j);
            const __m256d above = _mm256_cmp_pd(_mm256_loadu_pd(m + j), av, _CMP_GT_OQ);
            return _mm256_blendv_pd(_mm256_xor_pd(d, sign), d, above);
        },
        [&](std::size_t j) { return m[j] > a ? dm[j] : -dm[j]; });
}

double window_sum_avx2(const double* m, const double* w, double lo, double hi, std::size_t n) {
    const __m256d lov = _mm256_set1_pd(lo);
    const __m256d hiv = _mm256_set1_pd(hi);
    return reduce8(
        n,
        [&](std::size_t j) {
            const __m256d x = _mm256_loadu_pd(m + j);
            const __m256d in = _mm256_and_pd(_mm256_cmp_pd(x, lov, _CMP_GE_OQ),
                                             _mm256_cmp_pd(x, hiv, _CMP_LT_OQ));
            return _mm256_and_pd(in, _mm256_loadu_pd(w + j));
        },
        [&](std::size_t j) { return (m[j] >= lo && m[j] < hi) ? w[j] : 0.0; });
}

double crossing_sum_avx2(const double* m, double a, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    const __m256d sign = _mm256_set1_pd(-0.0);
    return reduce8(
        n,
        [&](std::size_t j) {
            const __m256d x0 = _mm256_loadu_pd(m + j);
            const __m256d x1 = _mm256_loadu_pd(m + j + 1);
            const __m256d flip = _mm256_xor_pd(_mm256_cmp_pd(x0, av, _CMP_GT_OQ),
                                               _mm256_cmp_pd(x1, av, _CMP_GT_OQ));
            const __m256d d = _mm256_sub_pd(x1, av);
            const __m256d mag = _mm256_andnot_pd(sign, _mm256_add_pd(d, d));
            return _mm256_and_pd(flip, mag);
        },
        [&](std::size_t j) {
            const double d = m[j + 1] - a;
            const double mag = d + d;
            return ((m[j] > a) != (m[j + 1] > a)) ? std::fabs(mag) : 0.0;
        });
}

double sum_squares_avx2(const double* x, std::size_t n) {
    return reduce8(
        n,
        [&](std::size_t j) {
            const __m256d v = _mm256_loadu_pd(x + j);
            return _mm256_mul_pd(v, v);
        },
        [&](std::size_t j) { return x[j] * x[j]; });
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    return reduce8(
        n,
        [&](std::size_t j) { return _mm256_mul_pd(_mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)); },
        [&](std::size_t j) { return x[j] * y[j]; });
}

}  // namespace

const KernelTable* avx2_kernels() {
    static const KernelTable table{"avx2",          philox_normals_avx2, sgn_dot_avx2,
                                   window_sum_avx2, crossing_sum_avx2,   sum_squares_avx2,
                                   dot_avx2};
    return __builtin_cpu_supports("avx2") ? &table : nullptr;
}

}  // namespace gmlab::simd

#else

namespace gmlab::simd {

const KernelTable* avx2_kernels() { return nullptr; }

}  // namespace gmlab::simd

#endif
