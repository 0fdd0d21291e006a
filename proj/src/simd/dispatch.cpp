#include <cstdlib>
#include <string_view>

#include "gmlab/simd/kernels.hpp"

namespace gmlab::simd {

const KernelTable& active_kernels() {
    static const KernelTable& table = [] () -> const KernelTable& {
        const char* forced = std::getenv("GMLAB_SIMD");
        if (forced != nullptr && std::string_view(forced) == "scalar") return scalar_kernels();
        if (const KernelTable* avx2 = avx2_kernels()) return *avx2;
        return scalar_kernels();
    }();
    return table;
}

}  // namespace gmlab::simd
