#include "fsl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fsl/fslnet.hpp"

namespace fsl::loss {

namespace k = fsl::kernels;

template <typename T>
Var<T> ssim_map(Var<T> x, Var<T> y) {
    const Shape s = x.shape();
    if (y.shape() != s) throw ShapeError("ssim_map: shapes " + s.str() + " and " + y.shape().str() + " differ");
    if (s.h < 2 || s.w < 2) throw ShapeError("ssim_map: need h, w >= 2, got " + s.str());
    const PadMode pad = PadMode::Reflect;
    const Var<T> mx = ad::box_filter3(x, pad), my = ad::box_filter3(y, pad);
    const Var<T> mxx = ad::square(mx), myy = ad::square(my), mxy = ad::mul(mx, my);
    const Var<T> sxx = ad::sub(ad::box_filter3(ad::square(x), pad), mxx);
    const Var<T> syy = ad::sub(ad::box_filter3(ad::square(y), pad), myy);
    const Var<T> sxy = ad::sub(ad::box_filter3(ad::mul(x, y), pad), mxy);
    const T c1 = static_cast<T>(kSsimC1), c2 = static_cast<T>(kSsimC2);
    const Var<T> num = ad::mul(ad::affine(mxy, T(2), c1), ad::affine(sxy, T(2), c2));
    const Var<T> den = ad::mul(ad::affine(ad::add(mxx, myy), T(1), c1), ad::affine(ad::add(sxx, syy), T(1), c2));
    return ad::div(num, den);
}

template <typename T>
Var<T> pairwise_photometric(Var<T> x, Var<T> y, double ssim_weight) {
    const Var<T> l1 = ad::mean(ad::abs(ad::sub(x, y)), k::kAxisC);
    const Var<T> ds = ad::mean(ad::affine(ssim_map(x, y), T(-0.5), T(0.5)), k::kAxisC);
    return ad::add(ad::scale(l1, static_cast<T>(1.0 - ssim_weight)), ad::scale(ds, static_cast<T>(ssim_weight)));
}

template <typename T>
ReconstructionTerms<T> reconstruction_loss(Var<T> target, const std::vector<Var<T>>& references,
                                           const std::vector<Var<T>>& warped, const std::vector<Tensor4<T>>& valid) {
    if (references.empty() || references.size() != warped.size()) {
        throw std::invalid_argument("reconstruction_loss: need one warped image per reference");
    }
    if (!valid.empty() && valid.size() != warped.size()) {
        throw std::invalid_argument("reconstruction_loss: validity masks do not match references");
    }
    Tape<T>& tape = *target.tape;
    ReconstructionTerms<T> r;
    std::vector<Var<T>> masked;
    double kept = 0.0, ok = 0.0, total = 0.0;
    for (std::size_t i = 0; i < warped.size(); ++i) {
        const Var<T> li = pairwise_photometric(warped[i], target);
        const Tensor4<T> lio = pairwise_photometric(references[i], target).value();
        Tensor4<T> mu(li.shape());
        const auto lv = li.value().data();
        const auto ov = lio.data();
        auto md = mu.data();
        for (std::size_t j = 0; j < md.size(); ++j) {
            const bool v = valid.empty() || valid[i].data()[j] > T(0);
            md[j] = (lv[j] < ov[j] && v) ? T(1) : T(0);
            kept += md[j];
            ok += v ? 1.0 : 0.0;
        }
        total += static_cast<double>(md.size());
        masked.push_back(ad::mul(li, tape.constant(std::move(mu))));
    }
    const Var<T> best = masked.size() == 1 ? masked[0] : ad::min_over_set(masked);
    r.loss = ad::mean(best);
    r.mask_fraction = kept / total;
    r.valid_fraction = ok / total;
    return r;
}

namespace {

// exp(-mean_c |I(p+step) - I(p)|) along x (dx=1) or y.
template <typename T>
Tensor4<T> edge_weight(const Tensor4<T>& img, bool along_x) {
    const int n = img.n(), c = img.c(), h = img.h(), w = img.w();
    const int oh = along_x ? h : h - 1, ow = along_x ? w - 1 : w;
    Tensor4<T> out({n, 1, oh, ow});
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double g = 0.0;
                for (int ch = 0; ch < c; ++ch) {
                    const double a = img(b, ch, y, x);
                    const double q = along_x ? img(b, ch, y, x + 1) : img(b, ch, y + 1, x);
                    g += std::abs(q - a);
                }
                out(b, 0, y, x) = static_cast<T>(std::exp(-g / c));
            }
    return out;
}

}  // namespace

template <typename T>
Var<T> geometric_smoothness(Var<T> disparity, const Tensor4<T>& image, const geom::CameraIntrinsics& K,
                            double min_depth, double max_depth) {
    const Shape ds = disparity.shape();
    if (ds.c != 1 || image.n() != ds.n || image.h() != ds.h || image.w() != ds.w) {
        throw ShapeError("geometric_smoothness: disparity " + ds.str() + " does not match image " +
                         image.shape().str());
    }
    if (ds.h < 2 || ds.w < 2) throw ShapeError("geometric_smoothness: need h, w >= 2, got " + ds.str());
    Tape<T>& tape = *disparity.tape;
    const int h = ds.h, w = ds.w;
    const Var<T> wx = tape.constant(edge_weight(image, true));
    const Var<T> wy = tape.constant(edge_weight(image, false));

    const Var<T> normals = geom::surface_normals(geom::backproject(disparity_to_depth(disparity, min_depth, max_depth), K));
    const Var<T> sx = geom::sine_distance(ad::crop(normals, 0, 0, h, w - 1), ad::crop(normals, 0, 1, h, w - 1));
    const Var<T> sy = geom::sine_distance(ad::crop(normals, 0, 0, h - 1, w), ad::crop(normals, 1, 0, h - 1, w));
    const Var<T> gx = ad::abs(ad::sub(ad::crop(disparity, 0, 1, h, w - 1), ad::crop(disparity, 0, 0, h, w - 1)));
    const Var<T> gy = ad::abs(ad::sub(ad::crop(disparity, 1, 0, h - 1, w), ad::crop(disparity, 0, 0, h - 1, w)));

    Var<T> total = ad::mean(ad::mul(sx, wx));
    total = ad::add(total, ad::mean(ad::mul(sy, wy)));
    total = ad::add(total, ad::mean(ad::mul(gx, wx)));
    return ad::add(total, ad::mean(ad::mul(gy, wy)));
}

template <typename T>
Tensor4<T> gray_opening(const Tensor4<T>& x, int kernel) {
    return k::dilate(k::erode(x, kernel), kernel);
}

template <typename T>
ContrastTargets<T> contrast_targets(const Tensor4<T>& disparity, int kernel, double ratio) {
    const Shape s = disparity.shape();
    ContrastTargets<T> out{gray_opening(disparity, kernel), Tensor4<T>(s)};
    const std::size_t per = static_cast<std::size_t>(s.c) * s.h * s.w;
    std::vector<double> diff(per);
    for (int b = 0; b < s.n; ++b) {
        const T* d = disparity.plane(b, 0);
        const T* o = out.opened.plane(b, 0);
        const auto [lo, hi] = std::minmax_element(d, d + per);
        const double eps = ratio * (static_cast<double>(*hi) - *lo);
        std::size_t count = 0;
        for (std::size_t j = 0; j < per; ++j) {
            diff[j] = std::abs(static_cast<double>(d[j]) - o[j]);
            count += diff[j] > eps ? 1 : 0;
        }
        if (count == 0) continue;
        const T inv = static_cast<T>(1.0 / static_cast<double>(count));
        T* wt = out.weight.plane(b, 0);
        for (std::size_t j = 0; j < per; ++j) wt[j] = diff[j] > eps ? inv : T(0);
    }
    return out;
}

template <typename T>
Var<T> self_contrast(Var<T> disparity, const ContrastTargets<T>& targets) {
    const Shape s = disparity.shape();
    if (targets.opened.shape() != s || targets.weight.shape() != s) {
        throw ShapeError("self_contrast: targets do not match disparity " + s.str());
    }
    Tape<T>& tape = *disparity.tape;
    const Var<T> diff = ad::abs(ad::sub(disparity, tape.constant(targets.opened)));
    return ad::scale(ad::sum(ad::mul(diff, tape.constant(targets.weight))), static_cast<T>(1.0 / s.n));
}

template <typename T>
Var<T> self_contrast(Var<T> disparity, int kernel, double ratio) {
    return self_contrast(disparity, contrast_targets(disparity.value(), kernel, ratio));
}

namespace {

template <typename T>
double scalar(const Var<T>& v) {
    return static_cast<double>(v.value().data()[0]);
}

}  // namespace

template <typename T>
DepthLossTerms<T> depth_objective(Var<T> disparity, Var<T> target, const std::vector<Var<T>>& references,
                                  const std::vector<Var<T>>& warped, const std::vector<Tensor4<T>>& valid,
                                  const geom::CameraIntrinsics& K, double min_depth, double max_depth,
                                  const DepthLossWeights& w) {
    DepthLossTerms<T> out;
    const auto rec = reconstruction_loss(target, references, warped, valid);
    const Var<T> smooth = geometric_smoothness(disparity, target.value(), K, min_depth, max_depth);
    const Var<T> contrast = self_contrast(disparity);
    out.total = ad::add(ad::add(rec.loss, ad::scale(smooth, static_cast<T>(w.alpha))),
                        ad::scale(contrast, static_cast<T>(w.beta)));
    out.reconstruction = scalar(rec.loss);
    out.smoothness = scalar(smooth);
    out.contrast = scalar(contrast);
    out.mask_fraction = rec.mask_fraction;
    return out;
}

template <typename T>
CrossEntropyResult<T> cross_entropy(Var<T> logits, const Tensor4<T>& labels, int ignore) {
    const Shape s = logits.shape();
    if (labels.shape() != Shape{s.n, 1, s.h, s.w}) {
        throw ShapeError("cross_entropy: labels " + labels.shape().str() + " do not match logits " + s.str());
    }
    const auto& lv = logits.value();
    double total = 0.0;
    int counted = 0;
    for (int b = 0; b < s.n; ++b)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                const int lab = static_cast<int>(std::lround(labels(b, 0, y, x)));
                if (lab == ignore) continue;
                if (lab < 0 || lab >= s.c) {
                    throw std::invalid_argument("cross_entropy: label " + std::to_string(lab) + " outside [0, " +
                                                std::to_string(s.c) + ")");
                }
                double m = lv(b, 0, y, x);
                for (int c = 1; c < s.c; ++c) m = std::max(m, static_cast<double>(lv(b, c, y, x)));
                double z = 0.0;
                for (int c = 0; c < s.c; ++c) z += std::exp(lv(b, c, y, x) - m);
                total += m + std::log(z) - lv(b, lab, y, x);
                ++counted;
            }
    CrossEntropyResult<T> r;
    r.counted = counted;
    const double inv = counted > 0 ? 1.0 / counted : 0.0;
    const int il = logits.id;
    r.loss = logits.tape->record(
        "cross_entropy", Tensor4<T>({1, 1, 1, 1}, static_cast<T>(total * inv)), {il},
        [il, s, labels, ignore, inv](Tape<T>& t, const Tensor4<T>& g) {
            if (inv == 0.0) return;
            const auto& lv = t.value(il);
            const double scale = g.data()[0] * inv;
            Tensor4<T> gl(s);
            for (int b = 0; b < s.n; ++b)
                for (int y = 0; y < s.h; ++y)
                    for (int x = 0; x < s.w; ++x) {
                        const int lab = static_cast<int>(std::lround(labels(b, 0, y, x)));
                        if (lab == ignore) continue;
                        double m = lv(b, 0, y, x);
                        for (int c = 1; c < s.c; ++c) m = std::max(m, static_cast<double>(lv(b, c, y, x)));
                        double z = 0.0;
                        for (int c = 0; c < s.c; ++c) z += std::exp(lv(b, c, y, x) - m);
                        for (int c = 0; c < s.c; ++c) {
                            const double p = std::exp(lv(b, c, y, x) - m) / z;
                            gl(b, c, y, x) = static_cast<T>(scale * (p - (c == lab ? 1.0 : 0.0)));
                        }
                    }
            t.accumulate(il, gl);
        });
    return r;
}

#define FSL_INSTANTIATE_LOSSES(T)                                                                                 \
    template Var<T> ssim_map(Var<T>, Var<T>);                                                                     \
    template Var<T> pairwise_photometric(Var<T>, Var<T>, double);                                                 \
    template ReconstructionTerms<T> reconstruction_loss(Var<T>, const std::vector<Var<T>>&,                       \
                                                        const std::vector<Var<T>>&, const std::vector<Tensor4<T>>&); \
    template Var<T> geometric_smoothness(Var<T>, const Tensor4<T>&, const geom::CameraIntrinsics&, double,        \
                                         double);                                                                 \
    template Tensor4<T> gray_opening(const Tensor4<T>&, int);                                                     \
    template Var<T> self_contrast(Var<T>, int, double);                                                           \
    template ContrastTargets<T> contrast_targets(const Tensor4<T>&, int, double);                                 \
    template Var<T> self_contrast(Var<T>, const ContrastTargets<T>&);                                             \
    template DepthLossTerms<T> depth_objective(Var<T>, Var<T>, const std::vector<Var<T>>&,                        \
                                               const std::vector<Var<T>>&, const std::vector<Tensor4<T>>&,        \
                                               const geom::CameraIntrinsics&, double, double,                     \
                                               const DepthLossWeights&);                                          \
    template CrossEntropyResult<T> cross_entropy(Var<T>, const Tensor4<T>&, int);

FSL_INSTANTIATE_LOSSES(float)
FSL_INSTANTIATE_LOSSES(double)

}  // namespace fsl::loss
