#pragma once

// Pinhole camera geometry for view synthesis: Rodrigues rotations, back-projection,
// reprojection into a reference view, surface normals and the sine distance.

#include <array>

#include "fsl/autodiff.hpp"

namespace fsl::geom {

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    /// Throws std::invalid_argument unless fx, fy > 0.
    void validate() const;
    /// Intrinsics for an image resized by (sx, sy).
    [[nodiscard]] CameraIntrinsics scaled(double sx, double sy) const;
};

/// Row-major 4x4 rigid transform from (rx, ry, rz, tx, ty, tz), rotation as axis-angle.
std::array<double, 16> pose_to_matrix(const std::array<double, 6>& pose);

/// Axis-angle (n,6,1,1) -> (n,12,1,1) holding row-major R (9) then t (3).
template <typename T>
Var<T> pose_to_transform(Var<T> pose);

/// P = depth * K^-1 (u, v, 1). depth (n,1,h,w) -> points (n,3,h,w). Throws on non-positive depth.
template <typename T>
Var<T> backproject(Var<T> depth, const CameraIntrinsics& K);

/// Smallest camera-space depth accepted by the projection.
inline constexpr double kMinProjectedZ = 1e-6;

/// Pixel coordinates in the reference view of every target pixel, (n,2,h,w) with
/// channel 0 = x. `transform` is (n,12,1,1) target->reference. Points with z below
/// kMinProjectedZ are clamped and marked 0 in `valid` (n,1,h,w) when given.
template <typename T>
Var<T> project_coords(Var<T> depth, Var<T> transform, const CameraIntrinsics& K, Tensor4<T>* valid = nullptr);

/// Reference image resampled into the target view.
template <typename T>
Var<T> warp(Var<T> reference, Var<T> depth, Var<T> transform, const CameraIntrinsics& K,
            Tensor4<T>* valid = nullptr);

/// Mean of the 8 cross products (P_i - P_t) x (P_j - P_t) around the 3x3 ring,
/// ordered clockwise from the top-left neighbour; border points are replicated.
template <typename T>
Var<T> surface_normals(Var<T> points);

/// 1 - cos^2 between per-pixel 3-vectors (n,3,h,w) -> (n,1,h,w); squared norms floored at 1e-24.
template <typename T>
Var<T> sine_distance(Var<T> a, Var<T> b);

}  // namespace fsl::geom
