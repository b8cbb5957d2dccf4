#include "fsl/spectral.hpp"

#include "fsl/kernels.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>
#include <vector>

namespace fsl::spectral {

using cd = std::complex<double>;

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

namespace {

// Twiddles exp(-2 pi i k / n) for k < n, and the bit-reversal permutation for
// power-of-two n. Cached per length and thread.
struct Plan {
    std::vector<cd> twiddle;
    std::vector<int> reversed;
};

const Plan& plan_for(int n) {
    thread_local std::unordered_map<int, Plan> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Plan p;
    p.twiddle.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double ang = -2.0 * std::numbers::pi * k / n;
        p.twiddle[static_cast<std::size_t>(k)] = cd(std::cos(ang), std::sin(ang));
    }
    if (is_power_of_two(n)) {
        p.reversed.resize(static_cast<std::size_t>(n));
        for (int i = 1, j = 0; i < n; ++i) {
            int bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            p.reversed[static_cast<std::size_t>(i)] = j;
        }
    }
    return cache.emplace(n, std::move(p)).first->second;
}

}  // namespace

void dft1d_direct(std::span<cd> data, int sign) {
    const std::size_t n = data.size();
    if (n <= 1) return;
    const auto& tw = plan_for(static_cast<int>(n)).twiddle;
    std::vector<cd> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cd acc = 0;
        // (j*k) mod n keeps the twiddle index exact.
        for (std::size_t j = 0; j < n; ++j) {
            const cd w = tw[(j * k) % n];
            acc += data[j] * (sign < 0 ? w : std::conj(w));
        }
        out[k] = acc;
    }
    std::copy(out.begin(), out.end(), data.begin());
}

void dft1d(std::span<cd> data, int sign) {
    const int n = static_cast<int>(data.size());
    if (n <= 1) return;
    if (!is_power_of_two(n)) {
        dft1d_direct(data, sign);
        return;
    }
    const Plan& p = plan_for(n);
    for (int i = 1; i < n; ++i) {
        const int j = p.reversed[static_cast<std::size_t>(i)];
        if (i < j) std::swap(data[i], data[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const int half = len / 2, stride = n / len;
        for (int i = 0; i < n; i += len) {
            for (int k = 0; k < half; ++k) {
                const cd t = p.twiddle[static_cast<std::size_t>(k * stride)];
                const cd wk = sign < 0 ? t : std::conj(t);
                const cd u = data[i + k];
                const cd v = data[i + k + half] * wk;
                data[i + k] = u + v;
                data[i + k + half] = u - v;
            }
        }
    }
}

namespace {

// Forward transform of one real plane into a (h, wh) complex buffer, unnormalized.
template <typename T>
void forward_plane(const T* src, int h, int w, std::vector<cd>& spec) {
    const int wh = half_width(w);
    spec.assign(static_cast<std::size_t>(h) * wh, cd(0));
    std::vector<cd> row(w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) row[x] = cd(static_cast<double>(src[y * w + x]), 0.0);
        dft1d(row, -1);
        for (int v = 0; v < wh; ++v) spec[y * wh + v] = row[v];
    }
    std::vector<cd> col(h);
    for (int v = 0; v < wh; ++v) {
        for (int y = 0; y < h; ++y) col[y] = spec[y * wh + v];
        dft1d(col, -1);
        for (int y = 0; y < h; ++y) spec[y * wh + v] = col[y];
    }
}

// Inverse of forward_plane under hermitian completion, unnormalized; writes real output.
template <typename T>
void inverse_plane(std::vector<cd>& spec, int h, int w, T* dst, double scale) {
    const int wh = half_width(w);
    std::vector<cd> col(h);
    for (int v = 0; v < wh; ++v) {
        for (int y = 0; y < h; ++y) col[y] = spec[y * wh + v];
        dft1d(col, +1);
        for (int y = 0; y < h; ++y) spec[y * wh + v] = col[y];
    }
    std::vector<cd> row(w);
    for (int y = 0; y < h; ++y) {
        std::fill(row.begin(), row.end(), cd(0));
        for (int v = 0; v < wh; ++v) row[v] = spec[y * wh + v];
        for (int v = 1; v < (w + 1) / 2; ++v) row[w - v] = std::conj(spec[y * wh + v]);
        dft1d(row, +1);
        for (int x = 0; x < w; ++x) dst[y * w + x] = static_cast<T>(row[x].real() * scale);
    }
}

// Multiplicity of a retained column in the full spectrum.
double column_weight(int v, int w) {
    if (v == 0) return 1.0;
    if (w % 2 == 0 && v == w / 2) return 1.0;
    return 2.0;
}

}  // namespace

template <typename T>
ComplexTensor4<T> rdft2(const Tensor4<T>& x) {
    const int h = x.h(), w = x.w(), wh = half_width(w);
    ComplexTensor4<T> out(Shape{x.n(), x.c(), h, wh});
    const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
    std::vector<cd> spec;
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c) {
            forward_plane(x.plane(b, c), h, w, spec);
            T* re = out.re.plane(b, c);
            T* im = out.im.plane(b, c);
            for (std::size_t i = 0; i < spec.size(); ++i) {
                re[i] = static_cast<T>(spec[i].real() * scale);
                im[i] = static_cast<T>(spec[i].imag() * scale);
            }
        }
    return out;
}

template <typename T>
Tensor4<T> irdft2(const ComplexTensor4<T>& f, int target_w) {
    const Shape& s = f.shape();
    if (target_w < 1 || s.w != half_width(target_w)) {
        throw ShapeError("irdft2: spectrum width " + std::to_string(s.w) + " does not match target width " +
                         std::to_string(target_w));
    }
    const int h = s.h;
    Tensor4<T> out(Shape{s.n, s.c, h, target_w});
    const double scale = 1.0 / std::sqrt(static_cast<double>(h) * target_w);
    std::vector<cd> spec(static_cast<std::size_t>(h) * s.w);
    for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c) {
            const T* re = f.re.plane(b, c);
            const T* im = f.im.plane(b, c);
            for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = cd(re[i], im[i]);
            inverse_plane(spec, h, target_w, out.plane(b, c), scale);
        }
    return out;
}

template <typename T>
Tensor4<T> rdft2_adjoint(const ComplexTensor4<T>& g, int target_w) {
    // adjoint(G) = irdft2(G / multiplicity); the multiplicity undoes hermitian doubling.
    const Shape& s = g.shape();
    ComplexTensor4<T> scaled = g;
    for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int v = 0; v < s.w; ++v) {
                    const T m = static_cast<T>(column_weight(v, target_w));
                    scaled.re(b, c, y, v) /= m;
                    scaled.im(b, c, y, v) /= m;
                }
    return irdft2(scaled, target_w);
}

template <typename T>
ComplexTensor4<T> irdft2_adjoint(const Tensor4<T>& g) {
    ComplexTensor4<T> f = rdft2(g);
    const Shape& s = f.shape();
    for (int b = 0; b < s.n; ++b)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int v = 0; v < s.w; ++v) {
                    const T m = static_cast<T>(column_weight(v, g.w()));
                    f.re(b, c, y, v) *= m;
                    f.im(b, c, y, v) *= m;
                }
    return f;
}

template <typename T>
Tensor4<T> pack_freq(const ComplexTensor4<T>& f) {
    return kernels::concat_channels(f.re, f.im);
}

template <typename T>
ComplexTensor4<T> unpack_freq(const Tensor4<T>& x) {
    if (x.c() % 2 != 0) {
        throw ShapeError("unpack_freq: channel count must be even, got " + x.shape().str());
    }
    const int c = x.c() / 2;
    return ComplexTensor4<T>(kernels::slice_channels(x, 0, c), kernels::slice_channels(x, c, 2 * c));
}

#define FSL_INSTANTIATE_SPECTRAL(T)                                         \
    template ComplexTensor4<T> rdft2(const Tensor4<T>&);                    \
    template Tensor4<T> irdft2(const ComplexTensor4<T>&, int);              \
    template Tensor4<T> rdft2_adjoint(const ComplexTensor4<T>&, int);       \
    template ComplexTensor4<T> irdft2_adjoint(const Tensor4<T>&);           \
    template Tensor4<T> pack_freq(const ComplexTensor4<T>&);                \
    template ComplexTensor4<T> unpack_freq(const Tensor4<T>&);

FSL_INSTANTIATE_SPECTRAL(float)
FSL_INSTANTIATE_SPECTRAL(double)

}  // namespace fsl::spectral
