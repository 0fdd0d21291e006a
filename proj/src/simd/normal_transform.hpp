#pragma once

// Box-Muller transform written once over a lane type V. V = double gives the
// reference kernel; the AVX2 translation unit instantiates it with a 4-lane
// wrapper. Only +, -, *, /, sqrt and exact bit manipulation appear, each in
// the same order for every V, so all instantiations agree to the bit.
//
// A lane type provides: arithmetic operators, sqrt(V), broadcast from double,
// split_exponent(V, V& mantissa, V& exponent) with mantissa in [1, 2),
// fold_sqrt2(V& mantissa, V& exponent), round_nearest(V), and
// rotate_quadrant(V q, V c, V s, V& cos_out, V& sin_out).

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>

#define GMLAB_INLINE inline __attribute__((always_inline))

namespace gmlab::simd::detail {

// Lane primitives for V = double (declared ahead of the templates: built-in
// types get no argument-dependent lookup).
inline void split_exponent(double x, double& m, double& e) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    const std::uint64_t biased = bits >> 52;
    bits = (bits & 0x000FFFFFFFFFFFFFull) | 0x3FF0000000000000ull;
    std::memcpy(&m, &bits, sizeof m);
    e = static_cast<double>(biased) - 1023.0;
}

inline void fold_sqrt2(double& m, double& e) {
    if (m > 1.4142135623730951) {
        m = m * 0.5;
        e = e + 1.0;
    }
}

inline double round_nearest(double x) { return std::nearbyint(x); }

inline void rotate_quadrant(double q, double c, double s, double& c_out, double& s_out) {
    switch (static_cast<int>(q) & 3) {
        case 0: c_out = c; s_out = s; break;
        case 1: c_out = -s; s_out = c; break;
        case 2: c_out = -c; s_out = -s; break;
        default: c_out = s; s_out = -c; break;
    }
}

inline double sqrt(double x) { return std::sqrt(x); }

inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kTwoPi = 6.28318530717958647692;

// 1/(2k+1), k = 1..11: atanh series.
inline constexpr std::array<double, 11> kAtanh = {
    1.0 / 3,  1.0 / 5,  1.0 / 7,  1.0 / 9,  1.0 / 11, 1.0 / 13,
    1.0 / 15, 1.0 / 17, 1.0 / 19, 1.0 / 21, 1.0 / 23};

constexpr double inv_factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return 1.0 / f;
}

// Taylor coefficients, |x| <= pi/4.
inline constexpr std::array<double, 9> kSin = {
    -inv_factorial(3),  inv_factorial(5),  -inv_factorial(7),
    inv_factorial(9),   -inv_factorial(11), inv_factorial(13),
    -inv_factorial(15), inv_factorial(17),  -inv_factorial(19)};
inline constexpr std::array<double, 9> kCos = {
    -inv_factorial(2),  inv_factorial(4),  -inv_factorial(6),
    inv_factorial(8),   -inv_factorial(10), inv_factorial(12),
    -inv_factorial(14), inv_factorial(16),  -inv_factorial(18)};

template <class V, std::size_t K>
GMLAB_INLINE V horner(V x, const std::array<double, K>& c) {
    V acc = V(c[K - 1]);
    for (std::size_t k = K - 1; k-- > 0;) acc = acc * x + V(c[k]);
    return acc;
}

/// Natural log for finite positive normal inputs.
template <class V>
GMLAB_INLINE V log_positive(V x) {
    V m, e;
    split_exponent(x, m, e);
    fold_sqrt2(m, e);  // m in [sqrt(1/2), sqrt(2))
    const V s = (m - V(1.0)) / (m + V(1.0));
    const V s2 = s * s;
    const V tail = s2 * horner(s2, kAtanh);
    const V two_s = s + s;
    const V atanh2 = two_s + two_s * tail;
    return e * V(kLn2Hi) + (e * V(kLn2Lo) + atanh2);
}

/// cos and sin of 2*pi*u for u in (0, 1).
template <class V>
GMLAB_INLINE void sincos_turn(V u, V& c, V& s) {
    const V q = round_nearest(u * V(4.0));
    const V r = u - q * V(0.25);  // exact, |r| <= 1/8
    const V x = r * V(kTwoPi);
    const V x2 = x * x;
    const V sin_r = x + x * (x2 * horner(x2, kSin));
    const V cos_r = V(1.0) + x2 * horner(x2, kCos);
    rotate_quadrant(q, cos_r, sin_r, c, s);
}

/// Two independent standard normals from two independent uniforms in (0,1).
template <class V>
GMLAB_INLINE void box_muller(V u1, V u2, V& z0, V& z1) {
    const V r = sqrt(V(-2.0) * log_positive(u1));
    V c, s;
    sincos_turn(u2, c, s);
    z0 = r * c;
    z1 = r * s;
}

}  // namespace gmlab::simd::detail
