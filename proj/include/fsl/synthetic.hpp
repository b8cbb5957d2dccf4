#pragma once

// Ray-cast synthetic scenes with analytic depth, class masks and camera motion,
// plus the input augmentation used for training.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "fsl/geometry.hpp"
#include "fsl/tensor.hpp"

namespace fsl::synth {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

/// Camera-to-world transform: X_world = R * X_cam + t. Camera axes: x right, y down, z forward.
struct Rigid {
    Mat3 R{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Vec3 t{0, 0, 0};
};

enum SurfaceClass : int { kGround = 0, kWall = 1, kBox = 2, kCeiling = 3 };
inline constexpr int kNumClasses = 4;

/// Smooth procedural colouring in surface coordinates.
struct Texture {
    Vec3 color{0.5, 0.5, 0.5};
    std::array<double, 4> freq{1, 1, 1, 1};
    std::array<double, 4> phase{0, 0, 0, 0};
    double contrast = 0.5;
};

/// Points X with dot(normal, X) = offset.
struct Plane {
    Vec3 normal{0, 0, 1};
    double offset = 0.0;
    int cls = kWall;
    Texture tex;
};

struct Box {
    Vec3 lo{0, 0, 0};
    Vec3 hi{1, 1, 1};
    int cls = kBox;
    Texture tex;
};

struct Frame {
    Tensor4<double> image;   // (1,3,h,w) in [0,1]
    Tensor4<double> depth;   // (1,1,h,w) camera-space z at pixel centres
    Tensor4<double> labels;  // (1,1,h,w) surface class at pixel centres
};

struct Scene {
    std::vector<Plane> planes;
    std::vector<Box> boxes;
    geom::CameraIntrinsics K;
    int width = 64;
    int height = 32;

    /// Renders image (supersample x supersample rays per pixel), depth and labels.
    /// Throws std::runtime_error if a pixel-centre ray escapes the scene.
    [[nodiscard]] Frame render(const Rigid& camera, int supersample = 4) const;

    /// Corridor with floor, ceiling, side and end walls, and a few boxes on the floor.
    static Scene random(std::mt19937_64& rng, int width, int height);
};

/// Forward motion with lateral drift, sway and yaw.
struct Trajectory {
    double speed = 0.35;  // forward units per frame
    double sway = 0.2;    // lateral amplitude
    double drift = 0.0;   // lateral units per frame
    double yaw = 0.04;    // yaw amplitude (radians)
    double omega = 0.7;   // radians per frame
    double phase = 0.0;

    [[nodiscard]] Rigid at(double frame) const;
    static Trajectory random(std::mt19937_64& rng);
    static Trajectory stationary();
};

/// Axis-angle rotation and translation mapping target-camera points into a reference camera.
using PoseVector = std::array<double, 6>;

PoseVector relative_pose(const Rigid& target, const Rigid& reference);

struct DepthSnippet {
    std::array<Tensor4<double>, 3> frames;  // previous, target, next
    Tensor4<double> depth;                  // target depth
    std::array<PoseVector, 2> poses;        // target->previous, target->next
    geom::CameraIntrinsics K;
};

DepthSnippet gen_depth_sequence(const Scene& scene, const Trajectory& traj, double frame);
/// Fresh scene and trajectory from `rng`.
DepthSnippet random_depth_snippet(std::mt19937_64& rng, int width, int height);

struct SegSample {
    Tensor4<double> image;
    Tensor4<double> labels;
};

/// Deterministic labelled image set rendered from independent random scenes.
std::vector<SegSample> seg_dataset(std::uint64_t seed, int count, int width, int height);

struct AugmentOptions {
    bool flip = true;
    bool color = true;
    double probability = 0.5;  // chance of each of flip and colour jitter
    double brightness = 0.2;
    double contrast = 0.2;
    double saturation = 0.2;
    double hue = 0.1;
};

/// Colour jitter parameters for one sample; zeros mean identity.
struct Jitter {
    double brightness = 0.0;
    double contrast = 0.0;
    double saturation = 0.0;
    double hue = 0.0;
};

/// Applies additive brightness, contrast about the grey mean, saturation about
/// per-pixel grey and a hue rotation (fraction of a turn), clamping to [0,1].
Tensor4<double> color_jitter(const Tensor4<double>& image, const Jitter& j);

/// Horizontal mirror of every plane.
Tensor4<double> flip_horizontal(const Tensor4<double>& x);
geom::CameraIntrinsics flip_intrinsics(const geom::CameraIntrinsics& K, int width);
PoseVector flip_pose(const PoseVector& p);

struct AugmentedSnippet {
    DepthSnippet clean;                     // loss targets (flipped if the sample was flipped)
    std::array<Tensor4<double>, 3> inputs;  // jittered network inputs
};

AugmentedSnippet augment(const DepthSnippet& s, const AugmentOptions& opts, std::mt19937_64& rng);

struct AugmentedSeg {
    SegSample clean;
    Tensor4<double> input;
};

AugmentedSeg augment(const SegSample& s, const AugmentOptions& opts, std::mt19937_64& rng);

}  // namespace fsl::synth
