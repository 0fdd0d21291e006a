#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "doctest.h"
#include "gmlab/simd/kernels.hpp"

using namespace gmlab::simd;

TEST_CASE("philox4x32-10 known-answer vectors") {
    auto check = [](Counter c, Key k, Counter want) {
        const Counter got = philox4x32_10(c, k);
        for (int i = 0; i < 4; ++i) CHECK(got.w[i] == want.w[i]);
    };
    check({{0, 0, 0, 0}}, {{0, 0}}, {{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}});
    check({{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}}, {{0xffffffffu, 0xffffffffu}},
          {{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}});
    check({{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}}, {{0xa4093822u, 0x299f31d0u}},
          {{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}});
}

TEST_CASE("uniforms stay strictly inside the unit interval") {
    CHECK(uniform_from_words(0, 0) > 0.0);
    CHECK(uniform_from_words(0xffffffffu, 0xffffffffu) < 1.0);
}

TEST_CASE("scalar normals match libm Box-Muller closely") {
    const Key key{{42, 7}};
    std::vector<double> z(2 * 4096);
    scalar_kernels().philox_normals(key, 3, 99, 0, 4096, z.data());
    for (std::uint32_t p = 0; p < 4096; ++p) {
        const Counter r = philox4x32_10(Counter{{p, 3, 99, 0}}, key);
        const double u1 = uniform_from_words(r.w[0], r.w[1]);
        const double u2 = uniform_from_words(r.w[2], r.w[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        CHECK(z[2 * p] == doctest::Approx(rad * std::cos(2 * M_PI * u2)).epsilon(1e-13).scale(1.0));
        CHECK(z[2 * p + 1] == doctest::Approx(rad * std::sin(2 * M_PI * u2)).epsilon(1e-13).scale(1.0));
    }
}

TEST_CASE("normal moments") {
    const std::size_t pairs = 500000;
    std::vector<double> z(2 * pairs);
    active_kernels().philox_normals(Key{{1, 2}}, 0, 5, 0, pairs, z.data());
    double s1 = 0, s2 = 0, s4 = 0;
    for (double x : z) {
        s1 += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    const double n = static_cast<double>(z.size());
    CHECK(std::abs(s1 / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(s4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("avx2 kernels are bit-identical to the scalar reference") {
    const KernelTable* vec = avx2_kernels();
    if (vec == nullptr) {
        MESSAGE("AVX2 unavailable; equivalence test skipped");
        return;
    }
    const KernelTable& ref = scalar_kernels();
    std::mt19937_64 gen(2024);
    std::normal_distribution<double> nd;
    for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 9u, 15u, 16u, 17u, 1000u, 4099u}) {
        std::vector<double> a(2 * n + 2), b(2 * n + 2);
        ref.philox_normals(Key{{9, 8}}, 1, 0x123456789ull, 17, n, a.data());
        vec->philox_normals(Key{{9, 8}}, 1, 0x123456789ull, 17, n, b.data());
        for (std::size_t i = 0; i < 2 * n; ++i) REQUIRE(std::bit_cast<std::uint64_t>(a[i]) == std::bit_cast<std::uint64_t>(b[i]));

        std::vector<double> m(n + 1), dm(n + 1), w(n + 1);
        for (std::size_t j = 0; j <= n; ++j) {
            m[j] = nd(gen);
            dm[j] = nd(gen);
            w[j] = std::abs(nd(gen));
        }
        if (n > 4) m[3] = 0.25;  // exact hit of the level
        auto same = [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); };
        CHECK(same(ref.sgn_dot(m.data(), dm.data(), 0.25, n), vec->sgn_dot(m.data(), dm.data(), 0.25, n)));
        CHECK(same(ref.window_sum(m.data(), w.data(), -0.1, 0.25, n), vec->window_sum(m.data(), w.data(), -0.1, 0.25, n)));
        CHECK(same(ref.crossing_sum(m.data(), 0.25, n), vec->crossing_sum(m.data(), 0.25, n)));
        CHECK(same(ref.sum_squares(dm.data(), n), vec->sum_squares(dm.data(), n)));
        CHECK(same(ref.dot(m.data(), dm.data(), n), vec->dot(m.data(), dm.data(), n)));
    }
}

TEST_CASE("kernel throughput" * doctest::skip(std::getenv("GMLAB_BENCH") == nullptr)) {
    const std::size_t pairs = 1 << 22;
    std::vector<double> z(2 * pairs);
    for (const KernelTable* t : {&scalar_kernels(), avx2_kernels()}) {
        if (t == nullptr) continue;
        const auto t0 = std::chrono::steady_clock::now();
        t->philox_normals(Key{{1, 2}}, 0, 5, 0, pairs, z.data());
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s: %.2f ns/normal\n", std::string(t->isa).c_str(), 1e9 * s / (2.0 * pairs));
    }
}
