#pragma once

// Differentiable wrappers: each op computes its value with fsl::kernels and
// records the matching vector-Jacobian product on the tape.

#include <vector>

#include "fsl/autodiff.hpp"
#include "fsl/kernels.hpp"

namespace fsl::ad {

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> div(Var<T> a, Var<T> b);

/// scale * x + shift
template <typename T>
Var<T> affine(Var<T> x, T scale, T shift);
template <typename T>
Var<T> scale(Var<T> x, T s) {
    return affine(x, s, T(0));
}

template <typename T>
Var<T> unary(kernels::Unary op, Var<T> x);
template <typename T>
Var<T> abs(Var<T> x) {
    return unary(kernels::Unary::Abs, x);
}
template <typename T>
Var<T> exp_neg(Var<T> x) {
    return unary(kernels::Unary::ExpNeg, x);
}
template <typename T>
Var<T> silu(Var<T> x) {
    return unary(kernels::Unary::Silu, x);
}
template <typename T>
Var<T> sigmoid(Var<T> x) {
    return unary(kernels::Unary::Sigmoid, x);
}
template <typename T>
Var<T> reciprocal(Var<T> x) {
    return unary(kernels::Unary::Reciprocal, x);
}
template <typename T>
Var<T> square(Var<T> x) {
    return unary(kernels::Unary::Square, x);
}

template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi);

template <typename T>
Var<T> channel_linear(Var<T> x, Var<T> weight);
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, PadMode pad);
template <typename T>
Var<T> maxpool3s2(Var<T> x);
template <typename T>
Var<T> upsample2x(Var<T> x);
template <typename T>
Var<T> bilinear_sample(Var<T> x, Var<T> grid);
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b);
template <typename T>
Var<T> slice_channels(Var<T> x, int c0, int c1);
template <typename T>
Var<T> crop(Var<T> x, int y0, int x0, int h, int w);

template <typename T>
Var<T> sum(Var<T> x, unsigned axes = kernels::kAxesAll);
template <typename T>
Var<T> mean(Var<T> x, unsigned axes = kernels::kAxesAll);
template <typename T>
Var<T> min_over_set(const std::vector<Var<T>>& xs);

template <typename T>
Var<T> box_filter3(Var<T> x, PadMode pad);

/// Orthonormal rdft2 packed as (re | im) channels: (n,c,h,w) -> (n,2c,h,w/2+1).
template <typename T>
Var<T> rdft2_packed(Var<T> x);
/// Inverse of rdft2_packed: (n,2c,h,w/2+1) -> (n,c,h,target_w).
template <typename T>
Var<T> irdft2_packed(Var<T> f, int target_w);

/// Copy of the value with no gradient path.
template <typename T>
Var<T> stop_gradient(Var<T> x);

/// Running statistics of a batch-norm layer; updated only by training-mode forwards.
template <typename T>
struct BatchNormStats {
    Tensor4<T> running_mean;  // (1,c,1,1)
    Tensor4<T> running_var;   // (1,c,1,1)
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Per-channel normalization over (n,h,w). Training mode uses batch statistics
/// and updates `stats`; eval mode uses the running buffers.
template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>& stats, bool training);

}  // namespace fsl::ad
