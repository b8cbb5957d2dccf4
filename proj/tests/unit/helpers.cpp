#include "helpers.hpp"

#include "fsl/ops.hpp"

namespace fsl::test {

template <typename T>
Var<T> project(Var<T> out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto w = out.tape->constant(random_tensor<T>(out.shape(), rng));
    return ad::sum(ad::mul(out, w));
}

template Var<double> project(Var<double>, std::uint64_t);
template Var<float> project(Var<float>, std::uint64_t);

}  // namespace fsl::test
