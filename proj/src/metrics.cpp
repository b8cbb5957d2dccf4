#include "fsl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fsl::metrics {

namespace {

double median(std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

// Adds raw sums (not yet averaged) for one image into `acc`.
void accumulate(const Tensor4<double>& pred, const Tensor4<double>& gt, int b, bool median_scale,
                const Tensor4<double>* mask, DepthErrors& acc) {
    std::vector<double> p, g;
    const std::size_t plane = static_cast<std::size_t>(gt.h()) * gt.w();
    const double* pp = pred.plane(b, 0);
    const double* gp = gt.plane(b, 0);
    const double* mp = mask ? mask->plane(b, 0) : nullptr;
    for (std::size_t i = 0; i < plane; ++i) {
        if (!(gp[i] > 0.0) || (mp && !(mp[i] > 0.0))) continue;
        if (!(pp[i] > 0.0)) throw std::invalid_argument("depth_errors: predictions must be positive");
        p.push_back(pp[i]);
        g.push_back(gp[i]);
    }
    if (p.empty()) return;
    const double s = median_scale ? median(g) / median(p) : 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] * s, t = g[i];
        const double ratio = std::max(d / t, t / d);
        acc.abs_rel += std::abs(d - t) / t;
        acc.sq_rel += (d - t) * (d - t) / t;
        acc.rms += (d - t) * (d - t);
        acc.rms_log += (std::log(d) - std::log(t)) * (std::log(d) - std::log(t));
        acc.a1 += ratio < 1.25 ? 1.0 : 0.0;
        acc.a2 += ratio < 1.25 * 1.25 ? 1.0 : 0.0;
        acc.a3 += ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0;
    }
    acc.pixels += p.size();
}

DepthErrors finish(DepthErrors s) {
    if (s.pixels == 0) throw std::invalid_argument("depth_errors: no valid ground-truth pixels");
    const double n = static_cast<double>(s.pixels);
    s.abs_rel /= n;
    s.sq_rel /= n;
    s.rms = std::sqrt(s.rms / n);
    s.rms_log = std::sqrt(s.rms_log / n);
    s.a1 /= n;
    s.a2 /= n;
    s.a3 /= n;
    return s;
}

void check_depth_shapes(const Tensor4<double>& pred, const Tensor4<double>& gt) {
    if (pred.shape() != gt.shape() || gt.c() != 1) {
        throw ShapeError("depth_errors: prediction " + pred.shape().str() + " vs ground truth " + gt.shape().str());
    }
}

}  // namespace

DepthErrors depth_errors(const Tensor4<double>& pred, const Tensor4<double>& gt, bool median_scale,
                         const Tensor4<double>* mask) {
    check_depth_shapes(pred, gt);
    if (mask && mask->shape() != gt.shape()) throw ShapeError("depth_errors: mask shape " + mask->shape().str());
    DepthErrors acc;
    for (int b = 0; b < gt.n(); ++b) accumulate(pred, gt, b, median_scale, mask, acc);
    return finish(acc);
}

void DepthAccumulator::add(const Tensor4<double>& pred, const Tensor4<double>& gt, bool median_scale) {
    check_depth_shapes(pred, gt);
    for (int b = 0; b < gt.n(); ++b) accumulate(pred, gt, b, median_scale, nullptr, sum_);
}

DepthErrors DepthAccumulator::result() const {
    return finish(sum_);
}

IoUAccumulator::IoUAccumulator(int num_classes, int ignore)
    : classes_(num_classes), ignore_(ignore), inter_(num_classes), pred_(num_classes), gt_(num_classes) {
    if (num_classes < 1) throw std::invalid_argument("iou: need at least one class");
}

void IoUAccumulator::add(const Tensor4<double>& pred, const Tensor4<double>& gt) {
    if (pred.shape() != gt.shape()) throw ShapeError("iou: " + pred.shape().str() + " vs " + gt.shape().str());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const int g = static_cast<int>(std::lround(gt[i]));
        if (g == ignore_) continue;
        const int p = static_cast<int>(std::lround(pred[i]));
        if (g < 0 || g >= classes_ || p < 0 || p >= classes_) throw std::invalid_argument("iou: label out of range");
        ++gt_[g];
        ++pred_[p];
        if (p == g) {
            ++inter_[g];
            ++correct_;
        }
        ++total_;
    }
}

IoUResult IoUAccumulator::result() const {
    IoUResult r;
    r.per_class.assign(classes_, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < classes_; ++c) {
        const std::size_t uni = gt_[c] + pred_[c] - inter_[c];
        if (uni == 0) continue;
        r.per_class[c] = static_cast<double>(inter_[c]) / static_cast<double>(uni);
        sum += r.per_class[c];
        ++present;
    }
    r.mean = present > 0 ? sum / present : 0.0;
    r.pixel_accuracy = total_ > 0 ? static_cast<double>(correct_) / static_cast<double>(total_) : 0.0;
    return r;
}

IoUResult iou(const Tensor4<double>& pred, const Tensor4<double>& gt, int num_classes, int ignore) {
    IoUAccumulator acc(num_classes, ignore);
    acc.add(pred, gt);
    return acc.result();
}

AteResult ate(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& gt) {
    if (pred.size() != gt.size() || pred.empty()) throw std::invalid_argument("ate: snippet counts differ or are zero");
    std::vector<double> errs;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        const auto& p = pred[s];
        const auto& g = gt[s];
        if (p.size() != g.size() || p.empty()) throw std::invalid_argument("ate: snippet lengths differ");
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            for (int k = 0; k < 3; ++k) {
                num += p[i][k] * g[i][k];
                den += p[i][k] * p[i][k];
            }
        const double scale = den > 0.0 ? num / den : 1.0;
        double e = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double d2 = 0.0;
            for (int k = 0; k < 3; ++k) d2 += (scale * p[i][k] - g[i][k]) * (scale * p[i][k] - g[i][k]);
            e += std::sqrt(d2);
        }
        errs.push_back(e / static_cast<double>(p.size()));
    }
    AteResult r;
    for (double e : errs) r.mean += e;
    r.mean /= static_cast<double>(errs.size());
    for (double e : errs) r.stddev += (e - r.mean) * (e - r.mean);
    r.stddev = std::sqrt(r.stddev / static_cast<double>(errs.size()));
    return r;
}

}  // namespace fsl::metrics
