#pragma once

// Orthonormal real-input 2D DFT over the two spatial axes. Spectra keep the
// non-redundant floor(w/2)+1 columns of the last axis.

#include <complex>
#include <span>

#include "fsl/tensor.hpp"

namespace fsl::spectral {

/// In-place 1D DFT, unnormalized. sign = -1 forward, +1 inverse.
/// Radix-2 for power-of-two lengths, direct summation otherwise.
void dft1d(std::span<std::complex<double>> data, int sign);
/// Direct O(n^2) summation, used for non power-of-two lengths.
void dft1d_direct(std::span<std::complex<double>> data, int sign);
bool is_power_of_two(int n);

template <typename T>
ComplexTensor4<T> rdft2(const Tensor4<T>& x);

/// Inverse of rdft2 with hermitian completion of the dropped columns.
template <typename T>
Tensor4<T> irdft2(const ComplexTensor4<T>& spectrum, int target_w);

/// Adjoint of rdft2: maps a half-spectrum cotangent to a spatial cotangent.
template <typename T>
Tensor4<T> rdft2_adjoint(const ComplexTensor4<T>& cotangent, int target_w);

/// Adjoint of irdft2: maps a spatial cotangent to a half-spectrum cotangent.
template <typename T>
ComplexTensor4<T> irdft2_adjoint(const Tensor4<T>& cotangent);

/// Real parts in channels [0,c), imaginary parts in [c,2c).
template <typename T>
Tensor4<T> pack_freq(const ComplexTensor4<T>& f);

template <typename T>
ComplexTensor4<T> unpack_freq(const Tensor4<T>& x);

/// Number of retained spectrum columns for a real signal of width w.
inline int half_width(int w) { return w / 2 + 1; }

}  // namespace fsl::spectral
