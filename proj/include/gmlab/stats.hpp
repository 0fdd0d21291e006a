#pragma once

#include <cstddef>
#include <span>

namespace gmlab {

/// Pairwise sum with a fixed split, independent of how the values were
/// produced; the building block of every reproducible reduction.
double pairwise_sum(std::span<const double> values);

struct SampleStats {
    double mean = 0.0;
    double std_error = 0.0;
    double std_dev = 0.0;
    std::size_t n = 0;
};

SampleStats sample_stats(std::span<const double> values);

}  // namespace gmlab
