#include "fsl/ops.hpp"

#include <cmath>
#include <memory>

#include "fsl/spectral.hpp"

namespace fsl::ad {

namespace k = kernels;

namespace {

template <typename T>
Var<T> binary_op(k::Binary op, const char* name, Var<T> a, Var<T> b) {
    Tape<T>& tape = *a.tape;
    Tensor4<T> out = k::binary(op, a.value(), b.value());
    const int ia = a.id, ib = b.id;
    return tape.record(name, std::move(out), {ia, ib}, [op, ia, ib](Tape<T>& t, const Tensor4<T>& g) {
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        const Shape bs = bv.shape();
        switch (op) {
            case k::Binary::Add:
                t.accumulate(ia, g);
                if (t.requires_grad(ib)) t.accumulate(ib, k::reduce_to(g, bs));
                break;
            case k::Binary::Sub:
                t.accumulate(ia, g);
                if (t.requires_grad(ib)) t.accumulate(ib, k::reduce_to(k::affine(g, T(-1), T(0)), bs));
                break;
            case k::Binary::Mul:
                if (t.requires_grad(ia)) t.accumulate(ia, k::binary(k::Binary::Mul, g, bv));
                if (t.requires_grad(ib)) t.accumulate(ib, k::reduce_to(k::binary(k::Binary::Mul, g, av), bs));
                break;
            case k::Binary::Div: {
                if (t.requires_grad(ia)) t.accumulate(ia, k::binary(k::Binary::Div, g, bv));
                if (t.requires_grad(ib)) {
                    // d(a/b)/db = -a/b^2
                    Tensor4<T> q = k::binary(k::Binary::Div, av, bv);
                    q = k::binary(k::Binary::Div, q, bv);
                    q = k::binary(k::Binary::Mul, g, q);
                    t.accumulate(ib, k::reduce_to(k::affine(q, T(-1), T(0)), bs));
                }
                break;
            }
        }
    });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    return binary_op(k::Binary::Add, "add", a, b);
}
template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    return binary_op(k::Binary::Sub, "sub", a, b);
}
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    return binary_op(k::Binary::Mul, "mul", a, b);
}
template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
    return binary_op(k::Binary::Div, "div", a, b);
}

template <typename T>
Var<T> affine(Var<T> x, T scale, T shift) {
    const int ix = x.id;
    return x.tape->record("affine", k::affine(x.value(), scale, shift), {ix},
                          [ix, scale](Tape<T>& t, const Tensor4<T>& g) { t.accumulate(ix, k::affine(g, scale, T(0))); });
}

template <typename T>
Var<T> unary(k::Unary op, Var<T> x) {
    Tape<T>& tape = *x.tape;
    const int ix = x.id;
    const int iy = static_cast<int>(tape.size());
    return tape.record("unary", k::unary(op, x.value()), {ix}, [op, ix, iy](Tape<T>& t, const Tensor4<T>& g) {
        t.accumulate(ix, k::unary_vjp(op, t.value(ix), t.value(iy), g));
    });
}

template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
    const int ix = x.id;
    return x.tape->record("clamp", k::clamp(x.value(), lo, hi), {ix}, [ix, lo, hi](Tape<T>& t, const Tensor4<T>& g) {
        const auto& xv = t.value(ix);
        Tensor4<T> gx(xv.shape());
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] = (xv[i] > lo && xv[i] < hi) ? g[i] : T(0);
        t.accumulate(ix, gx);
    });
}

template <typename T>
Var<T> channel_linear(Var<T> x, Var<T> weight) {
    const int ix = x.id, iw = weight.id;
    return x.tape->record("channel_linear", k::channel_linear(x.value(), weight.value()), {ix, iw},
                          [ix, iw](Tape<T>& t, const Tensor4<T>& g) {
                              const auto& xv = t.value(ix);
                              const auto& wv = t.value(iw);
                              if (t.requires_grad(ix))
                                  t.accumulate(ix, k::conv2d_grad_input(g, wv, xv.shape(), PadMode::Zeros));
                              if (t.requires_grad(iw))
                                  t.accumulate(iw, k::conv2d_grad_kernel(g, xv, wv.shape(), PadMode::Zeros));
                          });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, PadMode pad) {
    const int ix = x.id, ik = kernel.id;
    return x.tape->record("conv2d", k::conv2d(x.value(), kernel.value(), pad), {ix, ik},
                          [ix, ik, pad](Tape<T>& t, const Tensor4<T>& g) {
                              const auto& xv = t.value(ix);
                              const auto& kv = t.value(ik);
                              if (t.requires_grad(ix)) t.accumulate(ix, k::conv2d_grad_input(g, kv, xv.shape(), pad));
                              if (t.requires_grad(ik)) t.accumulate(ik, k::conv2d_grad_kernel(g, xv, kv.shape(), pad));
                          });
}

template <typename T>
Var<T> maxpool3s2(Var<T> x) {
    auto argmax = std::make_shared<std::vector<std::size_t>>();
    const int ix = x.id;
    const Shape xs = x.shape();
    return x.tape->record("maxpool3s2", k::maxpool3s2(x.value(), argmax.get()), {ix},
                          [ix, xs, argmax](Tape<T>& t, const Tensor4<T>& g) {
                              t.accumulate(ix, k::maxpool3s2_vjp(g, xs, *argmax));
                          });
}

template <typename T>
Var<T> upsample2x(Var<T> x) {
    const int ix = x.id;
    return x.tape->record("upsample2x", k::upsample2x(x.value()), {ix},
                          [ix](Tape<T>& t, const Tensor4<T>& g) { t.accumulate(ix, k::upsample2x_vjp(g)); });
}

template <typename T>
Var<T> bilinear_sample(Var<T> x, Var<T> grid) {
    const int ix = x.id, ig = grid.id;
    return x.tape->record("bilinear_sample", k::bilinear_sample(x.value(), grid.value()), {ix, ig},
                          [ix, ig](Tape<T>& t, const Tensor4<T>& g) {
                              Tensor4<T> gx, gg;
                              const bool wx = t.requires_grad(ix), wg = t.requires_grad(ig);
                              k::bilinear_sample_vjp(t.value(ix), t.value(ig), g, wx ? &gx : nullptr,
                                                     wg ? &gg : nullptr);
                              if (wx) t.accumulate(ix, gx);
                              if (wg) t.accumulate(ig, gg);
                          });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
    const int ia = a.id, ib = b.id;
    const int ca = a.shape().c, cb = b.shape().c;
    return a.tape->record("concat_channels", k::concat_channels(a.value(), b.value()), {ia, ib},
                          [ia, ib, ca, cb](Tape<T>& t, const Tensor4<T>& g) {
                              if (t.requires_grad(ia)) t.accumulate(ia, k::slice_channels(g, 0, ca));
                              if (t.requires_grad(ib)) t.accumulate(ib, k::slice_channels(g, ca, ca + cb));
                          });
}

template <typename T>
Var<T> slice_channels(Var<T> x, int c0, int c1) {
    const int ix = x.id;
    const Shape xs = x.shape();
    return x.tape->record("slice_channels", k::slice_channels(x.value(), c0, c1), {ix},
                          [ix, xs, c0](Tape<T>& t, const Tensor4<T>& g) {
                              Tensor4<T> gx(xs);
                              const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
                              for (int b = 0; b < xs.n; ++b)
                                  std::copy_n(g.plane(b, 0), plane * g.c(), gx.plane(b, c0));
                              t.accumulate(ix, gx);
                          });
}

template <typename T>
Var<T> crop(Var<T> x, int y0, int x0, int h, int w) {
    const int ix = x.id;
    const Shape xs = x.shape();
    return x.tape->record("crop", k::crop(x.value(), y0, x0, h, w), {ix},
                          [ix, xs, y0, x0](Tape<T>& t, const Tensor4<T>& g) {
                              t.accumulate(ix, k::crop_vjp(g, xs, y0, x0));
                          });
}

template <typename T>
Var<T> sum(Var<T> x, unsigned axes) {
    const int ix = x.id;
    const Shape xs = x.shape();
    return x.tape->record("sum", k::reduce_sum(x.value(), axes), {ix},
                          [ix, xs](Tape<T>& t, const Tensor4<T>& g) { t.accumulate(ix, k::broadcast_to(g, xs)); });
}

template <typename T>
Var<T> mean(Var<T> x, unsigned axes) {
    const int ix = x.id;
    const Shape xs = x.shape();
    Tensor4<T> out = k::reduce_mean(x.value(), axes);
    const T inv = static_cast<T>(static_cast<double>(out.size()) / static_cast<double>(xs.numel()));
    return x.tape->record("mean", std::move(out), {ix}, [ix, xs, inv](Tape<T>& t, const Tensor4<T>& g) {
        Tensor4<T> gx = k::broadcast_to(g, xs);
        gx *= inv;
        t.accumulate(ix, gx);
    });
}

template <typename T>
Var<T> min_over_set(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("min_over_set: empty tensor list");
    std::vector<const Tensor4<T>*> ptrs;
    std::vector<int> ids;
    for (const auto& v : xs) {
        ptrs.push_back(&v.value());
        ids.push_back(v.id);
    }
    auto argmin = std::make_shared<std::vector<std::uint8_t>>();
    Tensor4<T> out = k::min_over_set<T>(ptrs, argmin.get());
    return xs[0].tape->record("min_over_set", std::move(out), ids, [ids, argmin](Tape<T>& t, const Tensor4<T>& g) {
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (!t.requires_grad(ids[j])) continue;
            Tensor4<T> gj(g.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                if ((*argmin)[i] == j) gj[i] = g[i];
            }
            t.accumulate(ids[j], gj);
        }
    });
}

template <typename T>
Var<T> box_filter3(Var<T> x, PadMode pad) {
    const int ix = x.id;
    return x.tape->record("box_filter3", k::box_filter3(x.value(), pad), {ix},
                          [ix, pad](Tape<T>& t, const Tensor4<T>& g) { t.accumulate(ix, k::box_filter3_vjp(g, pad)); });
}

template <typename T>
Var<T> rdft2_packed(Var<T> x) {
    const int ix = x.id;
    const int w = x.shape().w;
    return x.tape->record("rdft2", spectral::pack_freq(spectral::rdft2(x.value())), {ix},
                          [ix, w](Tape<T>& t, const Tensor4<T>& g) {
                              t.accumulate(ix, spectral::rdft2_adjoint(spectral::unpack_freq(g), w));
                          });
}

template <typename T>
Var<T> irdft2_packed(Var<T> f, int target_w) {
    const int iff = f.id;
    return f.tape->record("irdft2", spectral::irdft2(spectral::unpack_freq(f.value()), target_w), {iff},
                          [iff](Tape<T>& t, const Tensor4<T>& g) {
                              t.accumulate(iff, spectral::pack_freq(spectral::irdft2_adjoint(g)));
                          });
}

template <typename T>
Var<T> stop_gradient(Var<T> x) {
    return x.tape->constant(x.value());
}

template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormStats<T>& stats, bool training) {
    const Tensor4<T>& xv = x.value();
    const int n = xv.n(), c = xv.c();
    if (gamma.shape().c != c || stats.running_mean.c() != c) {
        throw ShapeError("batchnorm: input " + xv.shape().str() + " does not match " + std::to_string(gamma.shape().c) +
                         " channels");
    }
    const std::size_t plane = static_cast<std::size_t>(xv.h()) * xv.w();
    const double count = static_cast<double>(n) * static_cast<double>(plane);

    // Per-channel (mean, inv_std) used to produce x_hat.
    auto mu = std::make_shared<std::vector<double>>(c);
    auto inv_std = std::make_shared<std::vector<double>>(c);
    for (int ch = 0; ch < c; ++ch) {
        if (training) {
            double s = 0.0;
            for (int b = 0; b < n; ++b) {
                const T* p = xv.plane(b, ch);
                for (std::size_t i = 0; i < plane; ++i) s += p[i];
            }
            const double m = s / count;
            double v = 0.0;
            for (int b = 0; b < n; ++b) {
                const T* p = xv.plane(b, ch);
                for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
            }
            v /= count;
            (*mu)[ch] = m;
            (*inv_std)[ch] = 1.0 / std::sqrt(v + stats.eps);
            const double unbiased = count > 1 ? v * count / (count - 1) : v;
            stats.running_mean[ch] =
                static_cast<T>((1.0 - stats.momentum) * stats.running_mean[ch] + stats.momentum * m);
            stats.running_var[ch] =
                static_cast<T>((1.0 - stats.momentum) * stats.running_var[ch] + stats.momentum * unbiased);
        } else {
            (*mu)[ch] = stats.running_mean[ch];
            (*inv_std)[ch] = 1.0 / std::sqrt(static_cast<double>(stats.running_var[ch]) + stats.eps);
        }
    }

    Tensor4<T> out(xv.shape());
    const Tensor4<T>& gv = gamma.value();
    const Tensor4<T>& bv = beta.value();
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const T* p = xv.plane(b, ch);
            T* q = out.plane(b, ch);
            const T m = static_cast<T>((*mu)[ch]), is = static_cast<T>((*inv_std)[ch]);
            for (std::size_t i = 0; i < plane; ++i) q[i] = gv[ch] * (p[i] - m) * is + bv[ch];
        }

    const int ix = x.id, ig = gamma.id, ib = beta.id;
    return x.tape->record(
        "batchnorm", std::move(out), {ix, ig, ib},
        [ix, ig, ib, mu, inv_std, training, count, plane](Tape<T>& t, const Tensor4<T>& g) {
            const auto& xv = t.value(ix);
            const auto& gv = t.value(ig);
            const int n = xv.n(), c = xv.c();
            Tensor4<T> dgamma(gv.shape()), dbeta(gv.shape());
            Tensor4<T> dx(xv.shape());
            for (int ch = 0; ch < c; ++ch) {
                const double m = (*mu)[ch], is = (*inv_std)[ch];
                double sum_g = 0.0, sum_gx = 0.0;
                for (int b = 0; b < n; ++b) {
                    const T* p = xv.plane(b, ch);
                    const T* q = g.plane(b, ch);
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_g += q[i];
                        sum_gx += q[i] * (p[i] - m) * is;
                    }
                }
                dgamma[ch] = static_cast<T>(sum_gx);
                dbeta[ch] = static_cast<T>(sum_g);
                const double gam = gv[ch];
                for (int b = 0; b < n; ++b) {
                    const T* p = xv.plane(b, ch);
                    const T* q = g.plane(b, ch);
                    T* d = dx.plane(b, ch);
                    for (std::size_t i = 0; i < plane; ++i) {
                        if (training) {
                            const double xhat = (p[i] - m) * is;
                            d[i] = static_cast<T>(gam * is * (q[i] - sum_g / count - xhat * sum_gx / count));
                        } else {
                            d[i] = static_cast<T>(gam * is * q[i]);
                        }
                    }
                }
            }
            if (t.requires_grad(ix)) t.accumulate(ix, dx);
            if (t.requires_grad(ig)) t.accumulate(ig, dgamma);
            if (t.requires_grad(ib)) t.accumulate(ib, dbeta);
        });
}

#define FSL_INSTANTIATE_OPS(T)                                                                  \
    template Var<T> add(Var<T>, Var<T>);                                                        \
    template Var<T> sub(Var<T>, Var<T>);                                                        \
    template Var<T> mul(Var<T>, Var<T>);                                                        \
    template Var<T> div(Var<T>, Var<T>);                                                        \
    template Var<T> affine(Var<T>, T, T);                                                       \
    template Var<T> unary(k::Unary, Var<T>);                                                    \
    template Var<T> clamp(Var<T>, T, T);                                                        \
    template Var<T> channel_linear(Var<T>, Var<T>);                                             \
    template Var<T> conv2d(Var<T>, Var<T>, PadMode);                                            \
    template Var<T> maxpool3s2(Var<T>);                                                         \
    template Var<T> upsample2x(Var<T>);                                                         \
    template Var<T> bilinear_sample(Var<T>, Var<T>);                                            \
    template Var<T> concat_channels(Var<T>, Var<T>);                                            \
    template Var<T> slice_channels(Var<T>, int, int);                                           \
    template Var<T> crop(Var<T>, int, int, int, int);                                           \
    template Var<T> sum(Var<T>, unsigned);                                                      \
    template Var<T> mean(Var<T>, unsigned);                                                     \
    template Var<T> min_over_set(const std::vector<Var<T>>&);                                   \
    template Var<T> box_filter3(Var<T>, PadMode);                                               \
    template Var<T> rdft2_packed(Var<T>);                                                       \
    template Var<T> irdft2_packed(Var<T>, int);                                                 \
    template Var<T> stop_gradient(Var<T>);                                                      \
    template Var<T> batchnorm(Var<T>, Var<T>, Var<T>, BatchNormStats<T>&, bool);

FSL_INSTANTIATE_OPS(float)
FSL_INSTANTIATE_OPS(double)

}  // namespace fsl::ad
