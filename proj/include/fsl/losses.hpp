#pragma once

// Self-supervised depth objectives (photometric reconstruction, normal-based
// geometric smoothness, morphological self-contrast) and segmentation cross-entropy.

#include <vector>

#include "fsl/geometry.hpp"
#include "fsl/ops.hpp"

namespace fsl::loss {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kSsimWeight = 0.85;

/// Per-channel SSIM with 3x3 mean windows and reflect padding. Needs h, w >= 2.
template <typename T>
Var<T> ssim_map(Var<T> x, Var<T> y);

/// (1-w) * mean_c |x - y| + w * mean_c (1 - SSIM) / 2, shape (n,1,h,w).
template <typename T>
Var<T> pairwise_photometric(Var<T> x, Var<T> y, double ssim_weight = kSsimWeight);

template <typename T>
struct ReconstructionTerms {
    Var<T> loss;
    double mask_fraction = 0.0;  // pixels where warping beat the raw reference, averaged over references
    double valid_fraction = 1.0;
};

/// min_i mu_i * L(warped_i, target) averaged over batch and pixels, where
/// mu_i = [L(warped_i, target) < L(reference_i, target)] and projection-valid.
template <typename T>
ReconstructionTerms<T> reconstruction_loss(Var<T> target, const std::vector<Var<T>>& references,
                                           const std::vector<Var<T>>& warped,
                                           const std::vector<Tensor4<T>>& valid = {});

/// Smoothness of surface normals and disparity, weighted by exp(-|image gradient|).
/// `disparity` in (0,1) maps to depth within [min_depth, max_depth] for the normals.
template <typename T>
Var<T> geometric_smoothness(Var<T> disparity, const Tensor4<T>& image, const geom::CameraIntrinsics& K,
                            double min_depth, double max_depth);

/// Grey-scale opening (erosion then dilation) with a k x k square window.
template <typename T>
Tensor4<T> gray_opening(const Tensor4<T>& x, int k);

inline constexpr int kOpeningKernel = 31;
inline constexpr double kContrastThreshold = 0.3;

/// Mean over samples of the average |d - open(d)| on pixels where it exceeds
/// ratio * (max d - min d) of that sample; samples without such pixels contribute 0.
template <typename T>
Var<T> self_contrast(Var<T> disparity, int k = kOpeningKernel, double ratio = kContrastThreshold);

/// Constant parts of the self-contrast term: the opened map and per-pixel
/// weights 1/N_ep on the selected pixels (0 elsewhere).
template <typename T>
struct ContrastTargets {
    Tensor4<T> opened;
    Tensor4<T> weight;
};

template <typename T>
ContrastTargets<T> contrast_targets(const Tensor4<T>& disparity, int k = kOpeningKernel,
                                    double ratio = kContrastThreshold);

/// Self-contrast with the opened map and pixel selection held fixed.
template <typename T>
Var<T> self_contrast(Var<T> disparity, const ContrastTargets<T>& targets);

struct DepthLossWeights {
    double alpha = 1e-3;  // geometric smoothness
    double beta = 1e-3;   // self-contrast
};

template <typename T>
struct DepthLossTerms {
    Var<T> total;
    double reconstruction = 0.0;
    double smoothness = 0.0;
    double contrast = 0.0;
    double mask_fraction = 0.0;
};

/// Full self-supervised objective for one target frame and its warped references.
template <typename T>
DepthLossTerms<T> depth_objective(Var<T> disparity, Var<T> target, const std::vector<Var<T>>& references,
                                  const std::vector<Var<T>>& warped, const std::vector<Tensor4<T>>& valid,
                                  const geom::CameraIntrinsics& K, double min_depth, double max_depth,
                                  const DepthLossWeights& w = {});

inline constexpr int kIgnoreLabel = 255;

template <typename T>
struct CrossEntropyResult {
    Var<T> loss;
    int counted = 0;  // labelled pixels; 0 means the loss is a constant 0
};

/// Mean softmax cross-entropy over pixels whose label is not `ignore`.
/// labels are (n,1,h,w) integers stored as T.
template <typename T>
CrossEntropyResult<T> cross_entropy(Var<T> logits, const Tensor4<T>& labels, int ignore = kIgnoreLabel);

}  // namespace fsl::loss
