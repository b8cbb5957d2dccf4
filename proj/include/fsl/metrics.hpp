#pragma once

// Evaluation metrics: depth errors, segmentation IoU and short-snippet trajectory error.

#include <array>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl::metrics {

struct DepthErrors {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rms = 0.0;
    double rms_log = 0.0;
    double a1 = 0.0;  // fraction with max(p/g, g/p) < 1.25
    double a2 = 0.0;  // < 1.25^2
    double a3 = 0.0;  // < 1.25^3
    std::size_t pixels = 0;
};

/// Errors over pixels where gt > 0 (and mask > 0 if given). With median scaling
/// each image's prediction is multiplied by median(gt)/median(pred) first.
/// Throws std::invalid_argument when no pixel is valid.
DepthErrors depth_errors(const Tensor4<double>& pred, const Tensor4<double>& gt, bool median_scale = true,
                         const Tensor4<double>* mask = nullptr);

/// Running accumulation so several batches can be scored as one set.
class DepthAccumulator {
public:
    void add(const Tensor4<double>& pred, const Tensor4<double>& gt, bool median_scale = true);
    [[nodiscard]] DepthErrors result() const;

private:
    DepthErrors sum_;
};

struct IoUResult {
    std::vector<double> per_class;  // NaN for classes absent from both
    double mean = 0.0;
    double pixel_accuracy = 0.0;
};

class IoUAccumulator {
public:
    IoUAccumulator(int num_classes, int ignore);
    /// Labels are integer-valued tensors of equal shape.
    void add(const Tensor4<double>& pred, const Tensor4<double>& gt);
    [[nodiscard]] IoUResult result() const;

private:
    int classes_;
    int ignore_;
    std::vector<std::size_t> inter_, pred_, gt_;
    std::size_t correct_ = 0, total_ = 0;
};

IoUResult iou(const Tensor4<double>& pred, const Tensor4<double>& gt, int num_classes, int ignore = 255);

/// Camera positions of a snippet, one xyz per frame.
using Trajectory = std::vector<std::array<double, 3>>;

struct AteResult {
    double mean = 0.0;
    double stddev = 0.0;
};

/// Per snippet: scale the prediction by the least-squares factor onto the ground
/// truth, then average the per-frame translation error; mean and std over snippets.
AteResult ate(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& gt);

}  // namespace fsl::metrics
