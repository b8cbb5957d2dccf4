#pragma once

// Primitive tensor kernels and their vector-Jacobian products. These are the
// building blocks recorded by the tape in ops.hpp; they know nothing about
// graphs and are safe to call from any thread.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl {

enum class PadMode { Reflect, Zeros, Replicate };

PadMode parse_pad_mode(std::string_view s);
std::string_view to_string(PadMode m);

/// Source index for padded coordinate `i` on an axis of length `n`; -1 means a zero pad cell.
int pad_index(int i, int n, PadMode mode);

namespace kernels {

enum class Unary { Abs, ExpNeg, Silu, Sigmoid, Relu, Elu, Reciprocal, Square, Log };
enum class Binary { Add, Sub, Mul, Div };

// Axes bitmask for reductions.
inline constexpr unsigned kAxisN = 1u;
inline constexpr unsigned kAxisC = 2u;
inline constexpr unsigned kAxisH = 4u;
inline constexpr unsigned kAxisW = 8u;
inline constexpr unsigned kAxesAll = 15u;

template <typename T>
Tensor4<T> unary(Unary op, const Tensor4<T>& x);
/// d(op(x))/dx * g
template <typename T>
Tensor4<T> unary_vjp(Unary op, const Tensor4<T>& x, const Tensor4<T>& y, const Tensor4<T>& g);

template <typename T>
Tensor4<T> clamp(const Tensor4<T>& x, T lo, T hi);

/// True when `b` is the (1,c,1,1) per-channel broadcast of `a`.
bool is_channel_broadcast(const Shape& a, const Shape& b);

/// `b` may match `a` or be a (1,c,1,1) per-channel broadcast.
template <typename T>
Tensor4<T> binary(Binary op, const Tensor4<T>& a, const Tensor4<T>& b);
/// Sum a full-size gradient down to `target` (identity or per-channel broadcast).
template <typename T>
Tensor4<T> reduce_to(const Tensor4<T>& g, const Shape& target);

template <typename T>
Tensor4<T> affine(const Tensor4<T>& x, T scale, T shift);

/// out[n,o,y,x] = sum_i weight[o,i] * x[n,i,y,x]. `weight` is stored as (co,ci,1,1).
template <typename T>
Tensor4<T> channel_linear(const Tensor4<T>& x, const Tensor4<T>& weight);

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& kernel, PadMode pad);
template <typename T>
Tensor4<T> conv2d_grad_input(const Tensor4<T>& g, const Tensor4<T>& kernel, const Shape& x_shape,
                             PadMode pad);
template <typename T>
Tensor4<T> conv2d_grad_kernel(const Tensor4<T>& g, const Tensor4<T>& x, const Shape& k_shape,
                              PadMode pad);

/// Fixed 3x3/stride 2/pad 1 max pooling. `argmax` receives the flat input index per output.
template <typename T>
Tensor4<T> maxpool3s2(const Tensor4<T>& x, std::vector<std::size_t>* argmax = nullptr);
template <typename T>
Tensor4<T> maxpool3s2_vjp(const Tensor4<T>& g, const Shape& x_shape,
                          const std::vector<std::size_t>& argmax);

template <typename T>
Tensor4<T> upsample2x(const Tensor4<T>& x);
template <typename T>
Tensor4<T> upsample2x_vjp(const Tensor4<T>& g);

/// Bilinear lookup at continuous pixel coordinates. grid channel 0 = x, channel 1 = y.
/// Coordinates are clamped to [0, w-1] x [0, h-1].
template <typename T>
Tensor4<T> bilinear_sample(const Tensor4<T>& x, const Tensor4<T>& grid);
template <typename T>
void bilinear_sample_vjp(const Tensor4<T>& x, const Tensor4<T>& grid, const Tensor4<T>& g,
                         Tensor4<T>* gx, Tensor4<T>* ggrid);

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);
template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& x, int c0, int c1);
/// Spatial window [y0, y0+h) x [x0, x0+w).
template <typename T>
Tensor4<T> crop(const Tensor4<T>& x, int y0, int x0, int h, int w);
template <typename T>
Tensor4<T> crop_vjp(const Tensor4<T>& g, const Shape& x_shape, int y0, int x0);

template <typename T>
Tensor4<T> reduce_sum(const Tensor4<T>& x, unsigned axes);
template <typename T>
Tensor4<T> reduce_mean(const Tensor4<T>& x, unsigned axes);
/// Broadcast a reduced tensor back to `full` (inverse of the reduction shape).
template <typename T>
Tensor4<T> broadcast_to(const Tensor4<T>& g, const Shape& full);

/// Elementwise minimum across same-shaped tensors; `argmin` gets the winning list index.
template <typename T>
Tensor4<T> min_over_set(std::span<const Tensor4<T>* const> xs, std::vector<std::uint8_t>* argmin = nullptr);

/// 3x3 windowed mean with the given border extension.
template <typename T>
Tensor4<T> box_filter3(const Tensor4<T>& x, PadMode pad);
template <typename T>
Tensor4<T> box_filter3_vjp(const Tensor4<T>& g, PadMode pad);

/// Flat square structuring element, replicate border.
template <typename T>
Tensor4<T> erode(const Tensor4<T>& x, int k);
template <typename T>
Tensor4<T> dilate(const Tensor4<T>& x, int k);

}  // namespace kernels
}  // namespace fsl
