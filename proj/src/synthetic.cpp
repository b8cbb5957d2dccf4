#include "fsl/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace fsl::synth {

namespace {
constexpr double kHitEps = 1e-9;

struct Hit {
    double s = std::numeric_limits<double>::infinity();
    int cls = -1;
    const Texture* tex = nullptr;
    int axis = 2;  // dominant normal axis, picks the texture coordinates
};

Vec3 mat_vec(const Mat3& R, const Vec3& v) {
    return {R[0] * v[0] + R[1] * v[1] + R[2] * v[2], R[3] * v[0] + R[4] * v[1] + R[5] * v[2],
            R[6] * v[0] + R[7] * v[1] + R[8] * v[2]};
}

Vec3 mat_t_vec(const Mat3& R, const Vec3& v) {
    return {R[0] * v[0] + R[3] * v[1] + R[6] * v[2], R[1] * v[0] + R[4] * v[1] + R[7] * v[2],
            R[2] * v[0] + R[5] * v[1] + R[8] * v[2]};
}

Mat3 mat_t_mat(const Mat3& A, const Mat3& B) {
    Mat3 o{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) o[i * 3 + j] += A[k * 3 + i] * B[k * 3 + j];
    return o;
}

int dominant_axis(const Vec3& n) {
    const double ax = std::abs(n[0]), ay = std::abs(n[1]), az = std::abs(n[2]);
    if (ax >= ay && ax >= az) return 0;
    return ay >= az ? 1 : 2;
}

Hit cast(const Scene& sc, const Vec3& o, const Vec3& d) {
    Hit best;
    for (const auto& p : sc.planes) {
        const double nd = p.normal[0] * d[0] + p.normal[1] * d[1] + p.normal[2] * d[2];
        if (std::abs(nd) < 1e-15) continue;
        const double no = p.normal[0] * o[0] + p.normal[1] * o[1] + p.normal[2] * o[2];
        const double s = (p.offset - no) / nd;
        if (s > kHitEps && s < best.s) best = {s, p.cls, &p.tex, dominant_axis(p.normal)};
    }
    for (const auto& b : sc.boxes) {
        double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
        int axis = 0;
        bool miss = false;
        for (int k = 0; k < 3 && !miss; ++k) {
            if (std::abs(d[k]) < 1e-15) {
                miss = o[k] < b.lo[k] || o[k] > b.hi[k];
                continue;
            }
            double t0 = (b.lo[k] - o[k]) / d[k], t1 = (b.hi[k] - o[k]) / d[k];
            if (t0 > t1) std::swap(t0, t1);
            if (t0 > lo) {
                lo = t0;
                axis = k;
            }
            hi = std::min(hi, t1);
        }
        if (miss || lo > hi || lo <= kHitEps) continue;
        if (lo < best.s) best = {lo, b.cls, &b.tex, axis};
    }
    return best;
}

Vec3 shade(const Hit& h, const Vec3& X) {
    const int a0 = h.axis == 0 ? 1 : 0, a1 = h.axis == 2 ? 1 : 2;
    const double u = X[a0], v = X[a1];
    const Texture& t = *h.tex;
    const double pat = std::sin(t.freq[0] * u + t.phase[0]) * std::sin(t.freq[1] * v + t.phase[1]) +
                       0.5 * std::sin(t.freq[2] * u + t.freq[3] * v + t.phase[2]);
    const double val = 0.5 + 0.5 * t.contrast * pat / 1.5;
    return {t.color[0] * (0.15 + 0.85 * val), t.color[1] * (0.15 + 0.85 * val), t.color[2] * (0.15 + 0.85 * val)};
}

Texture random_texture(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> col(0.2, 1.0), low(0.6, 1.8), mid(2.0, 5.0),
        ph(0.0, 2.0 * std::numbers::pi), con(0.6, 0.95);
    Texture t;
    for (auto& c : t.color) c = col(rng);
    // coarse product term plus a finer diagonal band
    t.freq = {low(rng), low(rng), mid(rng), mid(rng)};
    for (auto& p : t.phase) p = ph(rng);
    t.contrast = con(rng);
    return t;
}

}  // namespace

Frame Scene::render(const Rigid& camera, int supersample) const {
    if (supersample < 1) throw std::invalid_argument("render: supersample must be >= 1");
    Frame f{Tensor4<double>(Shape{1, 3, height, width}), Tensor4<double>(Shape{1, 1, height, width}),
            Tensor4<double>(Shape{1, 1, height, width})};
    const double step = 1.0 / supersample;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const Vec3 dc{(x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0};
            const Hit centre = cast(*this, camera.t, mat_vec(camera.R, dc));
            if (centre.cls < 0) throw std::runtime_error("render: ray escaped the scene");
            f.depth(0, 0, y, x) = centre.s;
            f.labels(0, 0, y, x) = centre.cls;
            Vec3 acc{0, 0, 0};
            int hits = 0;
            for (int sy = 0; sy < supersample; ++sy)
                for (int sx = 0; sx < supersample; ++sx) {
                    const double px = x - 0.5 + (sx + 0.5) * step, py = y - 0.5 + (sy + 0.5) * step;
                    const Vec3 d = mat_vec(camera.R, {(px - K.cx) / K.fx, (py - K.cy) / K.fy, 1.0});
                    const Hit h = cast(*this, camera.t, d);
                    if (h.cls < 0) continue;
                    const Vec3 X{camera.t[0] + h.s * d[0], camera.t[1] + h.s * d[1], camera.t[2] + h.s * d[2]};
                    const Vec3 c = shade(h, X);
                    for (int k = 0; k < 3; ++k) acc[k] += c[k];
                    ++hits;
                }
            for (int k = 0; k < 3; ++k) f.image(0, k, y, x) = std::clamp(acc[k] / std::max(hits, 1), 0.0, 1.0);
        }
    return f;
}

Scene Scene::random(std::mt19937_64& rng, int width, int height) {
    auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    Scene s;
    s.width = width;
    s.height = height;
    const double f = 0.625 * width;
    s.K = {f, f, 0.5 * (width - 1), 0.5 * (height - 1)};
    const double ground = U(1.0, 1.5), ceiling = U(1.5, 2.5), left = U(1.8, 3.2), right = U(1.8, 3.2);
    const double end = U(14.0, 22.0);
    s.planes.push_back({{0, 1, 0}, ground, kGround, random_texture(rng)});
    s.planes.push_back({{0, 1, 0}, -ceiling, kCeiling, random_texture(rng)});
    s.planes.push_back({{1, 0, 0}, -left, kWall, random_texture(rng)});
    s.planes.push_back({{1, 0, 0}, right, kWall, random_texture(rng)});
    s.planes.push_back({{0, 0, 1}, end, kWall, random_texture(rng)});
    s.planes.push_back({{0, 0, 1}, -10.0, kWall, random_texture(rng)});
    const int nbox = std::uniform_int_distribution<int>(2, 4)(rng);
    for (int i = 0; i < nbox; ++i) {
        const double bw = U(0.4, 1.2), bh = U(0.4, 1.4), bd = U(0.4, 1.2);
        const double cx = U(-left + 0.5 * bw, right - 0.5 * bw), cz = U(4.0, std::min(12.0, end - 2.0));
        Box b;
        b.lo = {cx - 0.5 * bw, ground - bh, cz - 0.5 * bd};
        b.hi = {cx + 0.5 * bw, ground, cz + 0.5 * bd};
        b.tex = random_texture(rng);
        s.boxes.push_back(b);
    }
    return s;
}

Rigid Trajectory::at(double frame) const {
    const double a = omega * frame + phase;
    const double psi = yaw * std::sin(a);
    Rigid r;
    r.R = {std::cos(psi), 0, std::sin(psi), 0, 1, 0, -std::sin(psi), 0, std::cos(psi)};
    r.t = {sway * std::sin(a + 1.0) + drift * frame, 0.0, speed * frame};
    return r;
}

Trajectory Trajectory::random(std::mt19937_64& rng) {
    auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    Trajectory t;
    t.speed = U(0.05, 0.15);
    t.sway = U(0.05, 0.3);
    t.drift = 0.3;
    t.yaw = U(0.0, 0.05);
    t.omega = U(0.3, 1.0);
    t.phase = U(0.0, 2.0 * std::numbers::pi);
    return t;
}

Trajectory Trajectory::stationary() {
    Trajectory t;
    t.speed = 0.0;
    t.sway = 0.0;
    t.drift = 0.0;
    t.yaw = 0.0;
    return t;
}

PoseVector relative_pose(const Rigid& target, const Rigid& reference) {
    const Mat3 R = mat_t_mat(reference.R, target.R);
    const Vec3 t = mat_t_vec(reference.R, {target.t[0] - reference.t[0], target.t[1] - reference.t[1],
                                           target.t[2] - reference.t[2]});
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = R[i * 3 + j];
    const Eigen::AngleAxisd aa(m);
    const Eigen::Vector3d r = aa.axis() * aa.angle();
    return {r[0], r[1], r[2], t[0], t[1], t[2]};
}

DepthSnippet gen_depth_sequence(const Scene& scene, const Trajectory& traj, double frame) {
    DepthSnippet s;
    s.K = scene.K;
    const Rigid cams[3] = {traj.at(frame - 1.0), traj.at(frame), traj.at(frame + 1.0)};
    for (int i = 0; i < 3; ++i) {
        Frame f = scene.render(cams[i]);
        if (i == 1) s.depth = std::move(f.depth);
        s.frames[i] = std::move(f.image);
    }
    s.poses = {relative_pose(cams[1], cams[0]), relative_pose(cams[1], cams[2])};
    return s;
}

DepthSnippet random_depth_snippet(std::mt19937_64& rng, int width, int height) {
    const Scene scene = Scene::random(rng, width, height);
    const Trajectory traj = Trajectory::random(rng);
    const double frame = std::uniform_real_distribution<double>(1.0, 3.0)(rng);
    return gen_depth_sequence(scene, traj, frame);
}

std::vector<SegSample> seg_dataset(std::uint64_t seed, int count, int width, int height) {
    std::mt19937_64 rng(seed);
    std::vector<SegSample> out;
    for (int i = 0; i < count; ++i) {
        const Scene scene = Scene::random(rng, width, height);
        const Trajectory traj = Trajectory::random(rng);
        Frame f = scene.render(traj.at(std::uniform_real_distribution<double>(0.0, 3.0)(rng)));
        out.push_back({std::move(f.image), std::move(f.labels)});
    }
    return out;
}

Tensor4<double> color_jitter(const Tensor4<double>& image, const Jitter& j) {
    if (image.c() != 3) throw ShapeError("color_jitter: expected 3 channels, got " + image.shape().str());
    Tensor4<double> out = image;
    const int h = image.h(), w = image.w();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    for (int b = 0; b < image.n(); ++b) {
        double* r = out.plane(b, 0);
        double* g = out.plane(b, 1);
        double* bl = out.plane(b, 2);
        auto gray = [&](std::size_t i) { return 0.299 * r[i] + 0.587 * g[i] + 0.114 * bl[i]; };
        if (j.brightness != 0.0) {
            for (std::size_t i = 0; i < plane; ++i) {
                r[i] = clamp01(r[i] + j.brightness);
                g[i] = clamp01(g[i] + j.brightness);
                bl[i] = clamp01(bl[i] + j.brightness);
            }
        }
        if (j.contrast != 0.0) {
            double mean = 0.0;
            for (std::size_t i = 0; i < plane; ++i) mean += gray(i);
            mean /= static_cast<double>(plane);
            const double k = 1.0 + j.contrast;
            for (std::size_t i = 0; i < plane; ++i) {
                r[i] = clamp01(mean + k * (r[i] - mean));
                g[i] = clamp01(mean + k * (g[i] - mean));
                bl[i] = clamp01(mean + k * (bl[i] - mean));
            }
        }
        if (j.saturation != 0.0) {
            const double k = 1.0 + j.saturation;
            for (std::size_t i = 0; i < plane; ++i) {
                const double y = gray(i);
                r[i] = clamp01(y + k * (r[i] - y));
                g[i] = clamp01(y + k * (g[i] - y));
                bl[i] = clamp01(y + k * (bl[i] - y));
            }
        }
        if (j.hue != 0.0) {
            const double th = 2.0 * std::numbers::pi * j.hue, c = std::cos(th), s = std::sin(th);
            for (std::size_t i = 0; i < plane; ++i) {
                const double y = 0.299 * r[i] + 0.587 * g[i] + 0.114 * bl[i];
                const double ii = 0.596 * r[i] - 0.274 * g[i] - 0.322 * bl[i];
                const double q = 0.211 * r[i] - 0.523 * g[i] + 0.312 * bl[i];
                const double i2 = c * ii - s * q, q2 = s * ii + c * q;
                r[i] = clamp01(y + 0.956 * i2 + 0.621 * q2);
                g[i] = clamp01(y - 0.272 * i2 - 0.647 * q2);
                bl[i] = clamp01(y - 1.106 * i2 + 1.703 * q2);
            }
        }
    }
    return out;
}

Tensor4<double> flip_horizontal(const Tensor4<double>& x) {
    Tensor4<double> out(x.shape());
    const int w = x.w();
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int y = 0; y < x.h(); ++y)
                for (int q = 0; q < w; ++q) out(b, c, y, q) = x(b, c, y, w - 1 - q);
    return out;
}

geom::CameraIntrinsics flip_intrinsics(const geom::CameraIntrinsics& K, int width) {
    return {K.fx, K.fy, width - 1 - K.cx, K.cy};
}

PoseVector flip_pose(const PoseVector& p) {
    return {p[0], -p[1], -p[2], -p[3], p[4], p[5]};
}

namespace {

bool coin(std::mt19937_64& rng, double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

Jitter draw_jitter(const AugmentOptions& o, std::mt19937_64& rng) {
    auto U = [&](double a) { return std::uniform_real_distribution<double>(-a, a)(rng); };
    Jitter j;
    j.brightness = U(o.brightness);
    j.contrast = U(o.contrast);
    j.saturation = U(o.saturation);
    j.hue = U(o.hue);
    return j;
}

}  // namespace

AugmentedSnippet augment(const DepthSnippet& s, const AugmentOptions& opts, std::mt19937_64& rng) {
    AugmentedSnippet out{s, {}};
    if (opts.flip && coin(rng, opts.probability)) {
        const int w = s.depth.w();
        for (auto& f : out.clean.frames) f = flip_horizontal(f);
        out.clean.depth = flip_horizontal(out.clean.depth);
        out.clean.K = flip_intrinsics(s.K, w);
        for (auto& p : out.clean.poses) p = flip_pose(p);
    }
    const bool jitter = opts.color && coin(rng, opts.probability);
    const Jitter j = jitter ? draw_jitter(opts, rng) : Jitter{};
    for (int i = 0; i < 3; ++i) out.inputs[i] = jitter ? color_jitter(out.clean.frames[i], j) : out.clean.frames[i];
    return out;
}

AugmentedSeg augment(const SegSample& s, const AugmentOptions& opts, std::mt19937_64& rng) {
    AugmentedSeg out{s, {}};
    if (opts.flip && coin(rng, opts.probability)) {
        out.clean.image = flip_horizontal(s.image);
        out.clean.labels = flip_horizontal(s.labels);
    }
    const bool jitter = opts.color && coin(rng, opts.probability);
    out.input = jitter ? color_jitter(out.clean.image, draw_jitter(opts, rng)) : out.clean.image;
    return out;
}

}  // namespace fsl::synth
