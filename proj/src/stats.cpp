#include "gmlab/stats.hpp"

#include <algorithm>
#include <cmath>

namespace gmlab {

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

SampleStats sample_stats(std::span<const double> values) {
    SampleStats s;
    s.n = values.size();
    if (s.n == 0) return s;
    const double n = static_cast<double>(s.n);
    s.mean = pairwise_sum(values) / n;
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; })) {
        s.mean = values[0];
        return s;
    }
    if (s.n < 2) return s;
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < s.n; ++i) {
        const double d = values[i] - s.mean;
        acc[i & 7] += d * d;
    }
    const double ss = pairwise_sum(acc);
    s.std_dev = std::sqrt(ss / (n - 1.0));
    s.std_error = s.std_dev / std::sqrt(n);
    return s;
}

}  // namespace gmlab
