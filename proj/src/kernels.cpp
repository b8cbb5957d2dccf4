#include "fsl/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace fsl {

PadMode parse_pad_mode(std::string_view s) {
    if (s == "reflect") return PadMode::Reflect;
    if (s == "zeros") return PadMode::Zeros;
    if (s == "replicate") return PadMode::Replicate;
    throw std::invalid_argument("unknown padding mode '" + std::string(s) + "'");
}

std::string_view to_string(PadMode m) {
    switch (m) {
        case PadMode::Reflect: return "reflect";
        case PadMode::Zeros: return "zeros";
        case PadMode::Replicate: return "replicate";
    }
    return "?";
}

int pad_index(int i, int n, PadMode mode) {
    if (i >= 0 && i < n) return i;
    switch (mode) {
        case PadMode::Zeros: return -1;
        case PadMode::Replicate: return i < 0 ? 0 : n - 1;
        case PadMode::Reflect:
            if (n == 1) return 0;
            while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
            return i;
    }
    return -1;
}

namespace kernels {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

template <typename T>
T sigmoid(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

void check_reflect_fits(const Shape& s, int pad, PadMode mode, const char* op) {
    if (mode == PadMode::Reflect && (s.h <= pad || s.w <= pad)) {
        throw ShapeError(std::string(op) + ": reflect padding " + std::to_string(pad) +
                         " needs spatial size > pad, got " + s.str());
    }
}

}  // namespace

template <typename T>
Tensor4<T> unary(Unary op, const Tensor4<T>& x) {
    Tensor4<T> y(x.shape());
    auto in = x.data();
    auto out = y.data();
    const std::size_t n = in.size();
    switch (op) {
        case Unary::Abs:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(in[i]);
            break;
        case Unary::ExpNeg:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(-in[i]);
            break;
        case Unary::Silu:
            for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * sigmoid(in[i]);
            break;
        case Unary::Sigmoid:
            for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid(in[i]);
            break;
        case Unary::Relu:
            for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0 ? in[i] : T(0);
            break;
        case Unary::Elu:
            for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0 ? in[i] : std::expm1(in[i]);
            break;
        case Unary::Reciprocal:
            for (std::size_t i = 0; i < n; ++i) out[i] = T(1) / in[i];
            break;
        case Unary::Square:
            for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * in[i];
            break;
        case Unary::Log:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::log(in[i]);
            break;
    }
    return y;
}

template <typename T>
Tensor4<T> unary_vjp(Unary op, const Tensor4<T>& x, const Tensor4<T>& y, const Tensor4<T>& g) {
    Tensor4<T> gx(x.shape());
    auto in = x.data();
    auto out = y.data();
    auto gi = g.data();
    auto go = gx.data();
    const std::size_t n = in.size();
    switch (op) {
        case Unary::Abs:
            for (std::size_t i = 0; i < n; ++i) go[i] = in[i] > 0 ? gi[i] : (in[i] < 0 ? -gi[i] : T(0));
            break;
        case Unary::ExpNeg:
            for (std::size_t i = 0; i < n; ++i) go[i] = -out[i] * gi[i];
            break;
        case Unary::Silu:
            for (std::size_t i = 0; i < n; ++i) {
                const T s = sigmoid(in[i]);
                go[i] = gi[i] * (s + in[i] * s * (T(1) - s));
            }
            break;
        case Unary::Sigmoid:
            for (std::size_t i = 0; i < n; ++i) go[i] = gi[i] * out[i] * (T(1) - out[i]);
            break;
        case Unary::Relu:
            for (std::size_t i = 0; i < n; ++i) go[i] = in[i] > 0 ? gi[i] : T(0);
            break;
        case Unary::Elu:
            for (std::size_t i = 0; i < n; ++i) go[i] = in[i] > 0 ? gi[i] : gi[i] * (out[i] + T(1));
            break;
        case Unary::Reciprocal:
            for (std::size_t i = 0; i < n; ++i) go[i] = -gi[i] * out[i] * out[i];
            break;
        case Unary::Square:
            for (std::size_t i = 0; i < n; ++i) go[i] = T(2) * in[i] * gi[i];
            break;
        case Unary::Log:
            for (std::size_t i = 0; i < n; ++i) go[i] = gi[i] / in[i];
            break;
    }
    return gx;
}

template <typename T>
Tensor4<T> clamp(const Tensor4<T>& x, T lo, T hi) {
    Tensor4<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::clamp(x[i], lo, hi);
    return y;
}

bool is_channel_broadcast(const Shape& a, const Shape& b) {
    return b.n == 1 && b.h == 1 && b.w == 1 && b.c == a.c && !(a == b);
}

template <typename T>
Tensor4<T> binary(Binary op, const Tensor4<T>& a, const Tensor4<T>& b) {
    const bool bcast = is_channel_broadcast(a.shape(), b.shape());
    if (!bcast) check_same_shape(a.shape(), b.shape(), "elementwise");
    Tensor4<T> out(a.shape());
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T bv = bcast ? b[(i / plane) % a.c()] : b[i];
        switch (op) {
            case Binary::Add: out[i] = a[i] + bv; break;
            case Binary::Sub: out[i] = a[i] - bv; break;
            case Binary::Mul: out[i] = a[i] * bv; break;
            case Binary::Div: out[i] = a[i] / bv; break;
        }
    }
    return out;
}

template <typename T>
Tensor4<T> reduce_to(const Tensor4<T>& g, const Shape& target) {
    if (g.shape() == target) return g;
    if (!is_channel_broadcast(g.shape(), target)) {
        throw ShapeError("reduce_to: cannot reduce " + g.shape().str() + " to " + target.str());
    }
    Tensor4<T> out(target);
    const std::size_t plane = static_cast<std::size_t>(g.h()) * g.w();
    for (int b = 0; b < g.n(); ++b)
        for (int c = 0; c < g.c(); ++c) {
            const T* p = g.plane(b, c);
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out[c] += acc;
        }
    return out;
}

template <typename T>
Tensor4<T> affine(const Tensor4<T>& x, T scale, T shift) {
    Tensor4<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = scale * x[i] + shift;
    return y;
}

template <typename T>
Tensor4<T> channel_linear(const Tensor4<T>& x, const Tensor4<T>& weight) {
    const int co = weight.n();
    const int ci = weight.c();
    if (weight.h() != 1 || weight.w() != 1 || ci != x.c()) {
        throw ShapeError("channel_linear: weight " + weight.shape().str() + " incompatible with input " +
                         x.shape().str());
    }
    Tensor4<T> out(Shape{x.n(), co, x.h(), x.w()});
    const int hw = x.h() * x.w();
    CMapR<T> wm(weight.ptr(), co, ci);
    for (int b = 0; b < x.n(); ++b) {
        CMapR<T> xm(x.plane(b, 0), ci, hw);
        MapR<T> om(out.plane(b, 0), co, hw);
        om.noalias() = wm * xm;
    }
    return out;
}

namespace {

// col is (ci*k*k, n*h*w): column index b*h*w + y*w + x.
template <typename T>
void im2col(const Tensor4<T>& x, int k, PadMode pad, MatR<T>& col) {
    const int n = x.n(), ci = x.c(), h = x.h(), w = x.w();
    const int p = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    col.resize(static_cast<Eigen::Index>(ci) * k * k, static_cast<Eigen::Index>(n * hw));
    std::vector<int> xmap(static_cast<std::size_t>(w) * k);
    for (int kx = 0; kx < k; ++kx)
        for (int xx = 0; xx < w; ++xx) xmap[kx * w + xx] = pad_index(xx + kx - p, w, pad);
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < ci; ++c) {
            const T* src = x.plane(b, c);
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    T* dst = col.data() + (static_cast<std::size_t>((c * k + ky) * k + kx)) * n * hw + b * hw;
                    const int* xm = xmap.data() + kx * w;
                    for (int yy = 0; yy < h; ++yy) {
                        const int sy = pad_index(yy + ky - p, h, pad);
                        T* d = dst + static_cast<std::size_t>(yy) * w;
                        if (sy < 0) {
                            std::fill(d, d + w, T(0));
                            continue;
                        }
                        const T* srow = src + static_cast<std::size_t>(sy) * w;
                        for (int xx = 0; xx < w; ++xx) {
                            const int sx = xm[xx];
                            d[xx] = sx < 0 ? T(0) : srow[sx];
                        }
                    }
                }
        }
}

template <typename T>
void col2im(const MatR<T>& col, int k, PadMode pad, Tensor4<T>& gx) {
    const int n = gx.n(), ci = gx.c(), h = gx.h(), w = gx.w();
    const int p = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<int> xmap(static_cast<std::size_t>(w) * k);
    for (int kx = 0; kx < k; ++kx)
        for (int xx = 0; xx < w; ++xx) xmap[kx * w + xx] = pad_index(xx + kx - p, w, pad);
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < ci; ++c) {
            T* dst = gx.plane(b, c);
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const T* src =
                        col.data() + (static_cast<std::size_t>((c * k + ky) * k + kx)) * n * hw + b * hw;
                    const int* xm = xmap.data() + kx * w;
                    for (int yy = 0; yy < h; ++yy) {
                        const int sy = pad_index(yy + ky - p, h, pad);
                        if (sy < 0) continue;
                        const T* s = src + static_cast<std::size_t>(yy) * w;
                        T* drow = dst + static_cast<std::size_t>(sy) * w;
                        for (int xx = 0; xx < w; ++xx) {
                            const int sx = xm[xx];
                            if (sx >= 0) drow[sx] += s[xx];
                        }
                    }
                }
        }
}

void check_conv_shapes(const Shape& x, const Shape& k, PadMode pad) {
    if (k.h != k.w || k.h % 2 == 0) {
        throw ShapeError("conv2d: kernel must be square with odd size, got " + k.str());
    }
    if (k.c != x.c) {
        throw ShapeError("conv2d: kernel " + k.str() + " expects " + std::to_string(k.c) +
                         " input channels, input is " + x.str());
    }
    check_reflect_fits(x, k.h / 2, pad, "conv2d");
}

}  // namespace

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& kernel, PadMode pad) {
    check_conv_shapes(x.shape(), kernel.shape(), pad);
    const int k = kernel.h();
    if (k == 1) return channel_linear(x, kernel);
    const int n = x.n(), co = kernel.n(), h = x.h(), w = x.w();
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    MatR<T> col;
    im2col(x, k, pad, col);
    CMapR<T> km(kernel.ptr(), co, static_cast<Eigen::Index>(kernel.c()) * k * k);
    MatR<T> res = km * col;
    Tensor4<T> out(Shape{n, co, h, w});
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < co; ++o)
            std::copy_n(res.data() + static_cast<std::size_t>(o) * n * hw + b * hw, hw, out.plane(b, o));
    return out;
}

template <typename T>
Tensor4<T> conv2d_grad_input(const Tensor4<T>& g, const Tensor4<T>& kernel, const Shape& x_shape,
                             PadMode pad) {
    const int k = kernel.h();
    const int n = x_shape.n, co = kernel.n(), ci = kernel.c();
    const std::size_t hw = static_cast<std::size_t>(x_shape.h) * x_shape.w;
    const Eigen::Index rows = static_cast<Eigen::Index>(ci) * k * k;
    CMapR<T> km(kernel.ptr(), co, rows);
    if (k == 1) {
        Tensor4<T> gx(x_shape);
        for (int b = 0; b < n; ++b) {
            CMapR<T> gm(g.plane(b, 0), co, static_cast<Eigen::Index>(hw));
            MapR<T> om(gx.plane(b, 0), ci, static_cast<Eigen::Index>(hw));
            om.noalias() = km.transpose() * gm;
        }
        return gx;
    }
    MatR<T> gm(co, static_cast<Eigen::Index>(n * hw));
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < co; ++o)
            std::copy_n(g.plane(b, o), hw, gm.data() + static_cast<std::size_t>(o) * n * hw + b * hw);
    MatR<T> gcol = km.transpose() * gm;
    Tensor4<T> gx(x_shape);
    col2im(gcol, k, pad, gx);
    return gx;
}

template <typename T>
Tensor4<T> conv2d_grad_kernel(const Tensor4<T>& g, const Tensor4<T>& x, const Shape& k_shape,
                              PadMode pad) {
    const int k = k_shape.h;
    const int n = x.n(), co = k_shape.n, ci = k_shape.c;
    const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
    const Eigen::Index rows = static_cast<Eigen::Index>(ci) * k * k;
    Tensor4<T> gk(k_shape);
    MapR<T> gkm(gk.ptr(), co, rows);
    if (k == 1) {
        for (int b = 0; b < n; ++b) {
            CMapR<T> gm(g.plane(b, 0), co, static_cast<Eigen::Index>(hw));
            CMapR<T> xm(x.plane(b, 0), ci, static_cast<Eigen::Index>(hw));
            gkm.noalias() += gm * xm.transpose();
        }
        return gk;
    }
    MatR<T> col;
    im2col(x, k, pad, col);
    MatR<T> gm(co, static_cast<Eigen::Index>(n * hw));
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < co; ++o)
            std::copy_n(g.plane(b, o), hw, gm.data() + static_cast<std::size_t>(o) * n * hw + b * hw);
    gkm.noalias() = gm * col.transpose();
    return gk;
}

template <typename T>
Tensor4<T> maxpool3s2(const Tensor4<T>& x, std::vector<std::size_t>* argmax) {
    if (x.h() < 2 || x.w() < 2) throw ShapeError("maxpool3s2: spatial size must be >= 2, got " + x.shape().str());
    const int ho = (x.h() + 1) / 2, wo = (x.w() + 1) / 2;
    Tensor4<T> out(Shape{x.n(), x.c(), ho, wo});
    if (argmax) argmax->assign(out.size(), 0);
    std::size_t oi = 0;
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox, ++oi) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_i = 0;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int y = 2 * oy + dy;
                        if (y < 0 || y >= x.h()) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = 2 * ox + dx;
                            if (xx < 0 || xx >= x.w()) continue;
                            const std::size_t idx = x.index(b, c, y, xx);
                            if (x[idx] > best) {
                                best = x[idx];
                                best_i = idx;
                            }
                        }
                    }
                    out[oi] = best;
                    if (argmax) (*argmax)[oi] = best_i;
                }
    return out;
}

template <typename T>
Tensor4<T> maxpool3s2_vjp(const Tensor4<T>& g, const Shape& x_shape, const std::vector<std::size_t>& argmax) {
    Tensor4<T> gx(x_shape);
    for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
    return gx;
}

template <typename T>
Tensor4<T> upsample2x(const Tensor4<T>& x) {
    Tensor4<T> out(Shape{x.n(), x.c(), 2 * x.h(), 2 * x.w()});
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < out.h(); ++y)
                for (int xx = 0; xx < out.w(); ++xx) out(b, c, y, xx) = x(b, c, y / 2, xx / 2);
    return out;
}

template <typename T>
Tensor4<T> upsample2x_vjp(const Tensor4<T>& g) {
    Tensor4<T> gx(Shape{g.n(), g.c(), g.h() / 2, g.w() / 2});
    for (int b = 0; b < g.n(); ++b)
        for (int c = 0; c < g.c(); ++c)
            for (int y = 0; y < g.h(); ++y)
                for (int xx = 0; xx < g.w(); ++xx) gx(b, c, y / 2, xx / 2) += g(b, c, y, xx);
    return gx;
}

namespace {

struct BilinearTap {
    int x0, x1, y0, y1;
    double wx, wy;
    bool clamped_x, clamped_y;
};

template <typename T>
BilinearTap bilinear_tap(T gx, T gy, int w, int h) {
    BilinearTap t{};
    const T xmax = static_cast<T>(w - 1), ymax = static_cast<T>(h - 1);
    t.clamped_x = !(gx > T(0) && gx < xmax);
    t.clamped_y = !(gy > T(0) && gy < ymax);
    const T xs = std::clamp(gx, T(0), xmax);
    const T ys = std::clamp(gy, T(0), ymax);
    t.x0 = std::min(static_cast<int>(std::floor(xs)), w - 1);
    t.y0 = std::min(static_cast<int>(std::floor(ys)), h - 1);
    t.x1 = std::min(t.x0 + 1, w - 1);
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.wx = static_cast<double>(xs - static_cast<T>(t.x0));
    t.wy = static_cast<double>(ys - static_cast<T>(t.y0));
    return t;
}

void check_grid(const Shape& x, const Shape& grid) {
    if (grid.c != 2 || grid.n != x.n) {
        throw ShapeError("bilinear_sample: grid " + grid.str() + " incompatible with input " + x.str());
    }
}

}  // namespace

template <typename T>
Tensor4<T> bilinear_sample(const Tensor4<T>& x, const Tensor4<T>& grid) {
    check_grid(x.shape(), grid.shape());
    const int ho = grid.h(), wo = grid.w();
    Tensor4<T> out(Shape{x.n(), x.c(), ho, wo});
    for (int b = 0; b < x.n(); ++b)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx) {
                const auto t = bilinear_tap(grid(b, 0, y, xx), grid(b, 1, y, xx), x.w(), x.h());
                const T wx = static_cast<T>(t.wx), wy = static_cast<T>(t.wy);
                for (int c = 0; c < x.c(); ++c) {
                    const T* p = x.plane(b, c);
                    const T top = (T(1) - wx) * p[t.y0 * x.w() + t.x0] + wx * p[t.y0 * x.w() + t.x1];
                    const T bot = (T(1) - wx) * p[t.y1 * x.w() + t.x0] + wx * p[t.y1 * x.w() + t.x1];
                    out(b, c, y, xx) = (T(1) - wy) * top + wy * bot;
                }
            }
    return out;
}

template <typename T>
void bilinear_sample_vjp(const Tensor4<T>& x, const Tensor4<T>& grid, const Tensor4<T>& g, Tensor4<T>* gx,
                         Tensor4<T>* ggrid) {
    if (gx) *gx = Tensor4<T>(x.shape());
    if (ggrid) *ggrid = Tensor4<T>(grid.shape());
    const int w = x.w();
    for (int b = 0; b < x.n(); ++b)
        for (int y = 0; y < grid.h(); ++y)
            for (int xx = 0; xx < grid.w(); ++xx) {
                const auto t = bilinear_tap(grid(b, 0, y, xx), grid(b, 1, y, xx), x.w(), x.h());
                const T wx = static_cast<T>(t.wx), wy = static_cast<T>(t.wy);
                T dgx = 0, dgy = 0;
                for (int c = 0; c < x.c(); ++c) {
                    const T go = g(b, c, y, xx);
                    if (go == T(0)) continue;
                    const T* p = x.plane(b, c);
                    const T i00 = p[t.y0 * w + t.x0], i01 = p[t.y0 * w + t.x1];
                    const T i10 = p[t.y1 * w + t.x0], i11 = p[t.y1 * w + t.x1];
                    if (gx) {
                        T* q = gx->plane(b, c);
                        q[t.y0 * w + t.x0] += go * (T(1) - wx) * (T(1) - wy);
                        q[t.y0 * w + t.x1] += go * wx * (T(1) - wy);
                        q[t.y1 * w + t.x0] += go * (T(1) - wx) * wy;
                        q[t.y1 * w + t.x1] += go * wx * wy;
                    }
                    dgx += go * ((T(1) - wy) * (i01 - i00) + wy * (i11 - i10));
                    dgy += go * ((T(1) - wx) * (i10 - i00) + wx * (i11 - i01));
                }
                if (ggrid) {
                    (*ggrid)(b, 0, y, xx) = t.clamped_x ? T(0) : dgx;
                    (*ggrid)(b, 1, y, xx) = t.clamped_y ? T(0) : dgy;
                }
            }
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
        throw ShapeError("concat_channels: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
    Tensor4<T> out(Shape{a.n(), a.c() + b.c(), a.h(), a.w()});
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    for (int n = 0; n < a.n(); ++n) {
        std::copy_n(a.plane(n, 0), plane * a.c(), out.plane(n, 0));
        std::copy_n(b.plane(n, 0), plane * b.c(), out.plane(n, a.c()));
    }
    return out;
}

template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& x, int c0, int c1) {
    if (c0 < 0 || c1 > x.c() || c0 >= c1) {
        throw ShapeError("slice_channels: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for " + x.shape().str());
    }
    Tensor4<T> out(Shape{x.n(), c1 - c0, x.h(), x.w()});
    const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n) std::copy_n(x.plane(n, c0), plane * (c1 - c0), out.plane(n, 0));
    return out;
}

template <typename T>
Tensor4<T> crop(const Tensor4<T>& x, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > x.h() || x0 + w > x.w()) {
        throw ShapeError("crop: window out of range for " + x.shape().str());
    }
    Tensor4<T> out(Shape{x.n(), x.c(), h, w});
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < h; ++y) std::copy_n(&x(b, c, y0 + y, x0), w, &out(b, c, y, 0));
    return out;
}

template <typename T>
Tensor4<T> crop_vjp(const Tensor4<T>& g, const Shape& x_shape, int y0, int x0) {
    Tensor4<T> gx(x_shape);
    for (int b = 0; b < g.n(); ++b)
        for (int c = 0; c < g.c(); ++c)
            for (int y = 0; y < g.h(); ++y) std::copy_n(&g(b, c, y, 0), g.w(), &gx(b, c, y0 + y, x0));
    return gx;
}

namespace {

Shape reduced_shape(const Shape& s, unsigned axes) {
    return Shape{(axes & kAxisN) ? 1 : s.n, (axes & kAxisC) ? 1 : s.c, (axes & kAxisH) ? 1 : s.h,
                 (axes & kAxisW) ? 1 : s.w};
}

}  // namespace

template <typename T>
Tensor4<T> reduce_sum(const Tensor4<T>& x, unsigned axes) {
    const Shape rs = reduced_shape(x.shape(), axes);
    Tensor4<T> out(rs);
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < x.h(); ++y)
                for (int xx = 0; xx < x.w(); ++xx) {
                    out(rs.n == 1 ? 0 : b, rs.c == 1 ? 0 : c, rs.h == 1 ? 0 : y, rs.w == 1 ? 0 : xx) +=
                        x(b, c, y, xx);
                }
    return out;
}

template <typename T>
Tensor4<T> reduce_mean(const Tensor4<T>& x, unsigned axes) {
    Tensor4<T> out = reduce_sum(x, axes);
    const double count = static_cast<double>(x.size()) / static_cast<double>(out.size());
    out *= static_cast<T>(1.0 / count);
    return out;
}

template <typename T>
Tensor4<T> broadcast_to(const Tensor4<T>& g, const Shape& full) {
    const Shape& rs = g.shape();
    if ((rs.n != 1 && rs.n != full.n) || (rs.c != 1 && rs.c != full.c) || (rs.h != 1 && rs.h != full.h) ||
        (rs.w != 1 && rs.w != full.w)) {
        throw ShapeError("broadcast_to: cannot broadcast " + rs.str() + " to " + full.str());
    }
    Tensor4<T> out(full);
    for (int b = 0; b < full.n; ++b)
        for (int c = 0; c < full.c; ++c)
            for (int y = 0; y < full.h; ++y)
                for (int xx = 0; xx < full.w; ++xx)
                    out(b, c, y, xx) =
                        g(rs.n == 1 ? 0 : b, rs.c == 1 ? 0 : c, rs.h == 1 ? 0 : y, rs.w == 1 ? 0 : xx);
    return out;
}

template <typename T>
Tensor4<T> min_over_set(std::span<const Tensor4<T>* const> xs, std::vector<std::uint8_t>* argmin) {
    if (xs.empty()) throw std::invalid_argument("min_over_set: empty tensor list");
    for (const auto* t : xs) check_same_shape(xs[0]->shape(), t->shape(), "min_over_set");
    Tensor4<T> out = *xs[0];
    if (argmin) argmin->assign(out.size(), 0);
    for (std::size_t k = 1; k < xs.size(); ++k) {
        const auto& t = *xs[k];
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (t[i] < out[i]) {
                out[i] = t[i];
                if (argmin) (*argmin)[i] = static_cast<std::uint8_t>(k);
            }
        }
    }
    return out;
}

template <typename T>
Tensor4<T> box_filter3(const Tensor4<T>& x, PadMode pad) {
    check_reflect_fits(x.shape(), 1, pad, "box_filter3");
    Tensor4<T> out(x.shape());
    const int h = x.h(), w = x.w();
    const T ninth = T(1) / T(9);
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c) {
            const T* p = x.plane(b, c);
            T* q = out.plane(b, c);
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    T acc = 0;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int sy = pad_index(y + dy, h, pad);
                        if (sy < 0) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int sx = pad_index(xx + dx, w, pad);
                            if (sx >= 0) acc += p[sy * w + sx];
                        }
                    }
                    q[y * w + xx] = acc * ninth;
                }
        }
    return out;
}

template <typename T>
Tensor4<T> box_filter3_vjp(const Tensor4<T>& g, PadMode pad) {
    Tensor4<T> gx(g.shape());
    const int h = g.h(), w = g.w();
    const T ninth = T(1) / T(9);
    for (int b = 0; b < g.n(); ++b)
        for (int c = 0; c < g.c(); ++c) {
            const T* p = g.plane(b, c);
            T* q = gx.plane(b, c);
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const T v = p[y * w + xx] * ninth;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int sy = pad_index(y + dy, h, pad);
                        if (sy < 0) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int sx = pad_index(xx + dx, w, pad);
                            if (sx >= 0) q[sy * w + sx] += v;
                        }
                    }
                }
        }
    return gx;
}

namespace {

// Separable flat-window min/max; replicate border means the window is clipped to the image.
template <typename T, typename Pick>
Tensor4<T> morph(const Tensor4<T>& x, int k, Pick pick) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("morphology: kernel size must be odd, got " + std::to_string(k));
    const int r = k / 2, h = x.h(), w = x.w();
    Tensor4<T> tmp(x.shape()), out(x.shape());
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c) {
            const T* p = x.plane(b, c);
            T* t = tmp.plane(b, c);
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    T v = p[y * w + xx];
                    for (int sx = std::max(0, xx - r); sx <= std::min(w - 1, xx + r); ++sx) v = pick(v, p[y * w + sx]);
                    t[y * w + xx] = v;
                }
            T* q = out.plane(b, c);
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    T v = t[y * w + xx];
                    for (int sy = std::max(0, y - r); sy <= std::min(h - 1, y + r); ++sy) v = pick(v, t[sy * w + xx]);
                    q[y * w + xx] = v;
                }
        }
    return out;
}

}  // namespace

template <typename T>
Tensor4<T> erode(const Tensor4<T>& x, int k) {
    return morph(x, k, [](T a, T b) { return std::min(a, b); });
}

template <typename T>
Tensor4<T> dilate(const Tensor4<T>& x, int k) {
    return morph(x, k, [](T a, T b) { return std::max(a, b); });
}

#define FSL_INSTANTIATE_KERNELS(T)                                                                        \
    template Tensor4<T> unary(Unary, const Tensor4<T>&);                                                  \
    template Tensor4<T> unary_vjp(Unary, const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&);        \
    template Tensor4<T> clamp(const Tensor4<T>&, T, T);                                                   \
    template Tensor4<T> binary(Binary, const Tensor4<T>&, const Tensor4<T>&);                             \
    template Tensor4<T> reduce_to(const Tensor4<T>&, const Shape&);                                       \
    template Tensor4<T> affine(const Tensor4<T>&, T, T);                                                  \
    template Tensor4<T> channel_linear(const Tensor4<T>&, const Tensor4<T>&);                             \
    template Tensor4<T> conv2d(const Tensor4<T>&, const Tensor4<T>&, PadMode);                            \
    template Tensor4<T> conv2d_grad_input(const Tensor4<T>&, const Tensor4<T>&, const Shape&, PadMode);   \
    template Tensor4<T> conv2d_grad_kernel(const Tensor4<T>&, const Tensor4<T>&, const Shape&, PadMode);  \
    template Tensor4<T> maxpool3s2(const Tensor4<T>&, std::vector<std::size_t>*);                         \
    template Tensor4<T> maxpool3s2_vjp(const Tensor4<T>&, const Shape&, const std::vector<std::size_t>&); \
    template Tensor4<T> upsample2x(const Tensor4<T>&);                                                    \
    template Tensor4<T> upsample2x_vjp(const Tensor4<T>&);                                                \
    template Tensor4<T> bilinear_sample(const Tensor4<T>&, const Tensor4<T>&);                            \
    template void bilinear_sample_vjp(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&,            \
                                      Tensor4<T>*, Tensor4<T>*);                                          \
    template Tensor4<T> concat_channels(const Tensor4<T>&, const Tensor4<T>&);                            \
    template Tensor4<T> slice_channels(const Tensor4<T>&, int, int);                                      \
    template Tensor4<T> crop(const Tensor4<T>&, int, int, int, int);                                      \
    template Tensor4<T> crop_vjp(const Tensor4<T>&, const Shape&, int, int);                              \
    template Tensor4<T> reduce_sum(const Tensor4<T>&, unsigned);                                          \
    template Tensor4<T> reduce_mean(const Tensor4<T>&, unsigned);                                         \
    template Tensor4<T> broadcast_to(const Tensor4<T>&, const Shape&);                                    \
    template Tensor4<T> min_over_set(std::span<const Tensor4<T>* const>, std::vector<std::uint8_t>*);     \
    template Tensor4<T> box_filter3(const Tensor4<T>&, PadMode);                                          \
    template Tensor4<T> box_filter3_vjp(const Tensor4<T>&, PadMode);                                      \
    template Tensor4<T> erode(const Tensor4<T>&, int);                                                    \
    template Tensor4<T> dilate(const Tensor4<T>&, int);

FSL_INSTANTIATE_KERNELS(float)
FSL_INSTANTIATE_KERNELS(double)

}  // namespace kernels
}  // namespace fsl
