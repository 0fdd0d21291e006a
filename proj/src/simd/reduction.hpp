#pragma once

#include <cstddef>

namespace gmlab::simd::detail {

// Fixed reduction tree shared by every kernel variant: element j goes to
// partial sum j % 8; partials combine as ((p0+p4)+(p2+p6)) + ((p1+p5)+(p3+p7)).
struct Lanes8 {
    double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};

    void add(std::size_t j, double v) { lane[j & 7] += v; }

    double total() const {
        const double v0 = lane[0] + lane[4];
        const double v1 = lane[1] + lane[5];
        const double v2 = lane[2] + lane[6];
        const double v3 = lane[3] + lane[7];
        return (v0 + v2) + (v1 + v3);
    }
};

}  // namespace gmlab::simd::detail
