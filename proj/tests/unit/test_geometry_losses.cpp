#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fsl/fslnet.hpp"
#include "fsl/geometry.hpp"
#include "fsl/losses.hpp"
#include "helpers.hpp"

using namespace fsl;
using geom::CameraIntrinsics;

namespace {

Tensor4<double> pose_tensor(const std::vector<std::array<double, 6>>& poses) {
    Tensor4<double> t(Shape{static_cast<int>(poses.size()), 6, 1, 1});
    for (std::size_t b = 0; b < poses.size(); ++b)
        for (int i = 0; i < 6; ++i) t(static_cast<int>(b), i, 0, 0) = poses[b][i];
    return t;
}

int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

// Scalar SSIM at one pixel of one channel.
double ssim_at(const Tensor4<double>& x, const Tensor4<double>& y, int b, int c, int r, int q) {
    double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const int sy = reflect(r + dy, x.h()), sx = reflect(q + dx, x.w());
            const double a = x(b, c, sy, sx), v = y(b, c, sy, sx);
            mx += a / 9;
            my += v / 9;
            xx += a * a / 9;
            yy += v * v / 9;
            xy += a * v / 9;
        }
    const double c1 = 1e-4, c2 = 9e-4;
    const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
    return (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

double pairwise_at(const Tensor4<double>& x, const Tensor4<double>& y, int b, int r, int q) {
    double l1 = 0, ds = 0;
    for (int c = 0; c < x.c(); ++c) {
        l1 += std::abs(x(b, c, r, q) - y(b, c, r, q));
        ds += (1 - ssim_at(x, y, b, c, r, q)) / 2;
    }
    return (0.15 * l1 + 0.85 * ds) / x.c();
}

// Ring-ordered neighbour cross products; `clockwise=false` walks the ring backwards.
Tensor4<double> normals_oracle(const Tensor4<double>& P, bool clockwise) {
    static const int cw[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}};
    Tensor4<double> out(P.shape());
    for (int b = 0; b < P.n(); ++b)
        for (int y = 0; y < P.h(); ++y)
            for (int x = 0; x < P.w(); ++x) {
                Eigen::Vector3d t(P(b, 0, y, x), P(b, 1, y, x), P(b, 2, y, x)), n = Eigen::Vector3d::Zero();
                auto at = [&](int i) -> Eigen::Vector3d {
                    const int r = clockwise ? i % 8 : (8 - i % 8) % 8;
                    const int yy = std::clamp(y + cw[r][0], 0, P.h() - 1), xx = std::clamp(x + cw[r][1], 0, P.w() - 1);
                    return Eigen::Vector3d(P(b, 0, yy, xx), P(b, 1, yy, xx), P(b, 2, yy, xx)) - t;
                };
                for (int i = 0; i < 8; ++i) n += at(i).cross(at(i + 1));
                for (int c = 0; c < 3; ++c) out(b, c, y, x) = n[c] / 8;
            }
    return out;
}

Tensor4<double> brute_opening(const Tensor4<double>& x, int k) {
    const int r = k / 2, h = x.h(), w = x.w();
    auto pass = [&](const Tensor4<double>& in, bool take_min) {
        Tensor4<double> o(in.shape());
        for (int y = 0; y < h; ++y)
            for (int q = 0; q < w; ++q) {
                double v = in(0, 0, y, q);
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const double s = in(0, 0, std::clamp(y + dy, 0, h - 1), std::clamp(q + dx, 0, w - 1));
                        v = take_min ? std::min(v, s) : std::max(v, s);
                    }
                o(0, 0, y, q) = v;
            }
        return o;
    };
    return pass(pass(x, true), false);
}

double scalar(Var<double> v) {
    return v.value()[0];
}

// Full-objective FD check for a scalar-valued function of one tensor.
template <typename Fn>
double loss_grad_error(Fn fn, Tensor4<double> x0, double eps = 1e-4) {
    Parameter<double> p("x", std::move(x0));
    Objective<double> f = [&](Tape<double>& t) { return fn(t.param(p)); };
    GradCheckOptions opts;
    opts.coords_per_param = 400;
    opts.order = 4;
    opts.eps = eps;
    return finite_diff_check<double>(f, {&p}, opts).max_rel_error();
}

}  // namespace

TEST_CASE("pose_to_matrix") {
    const auto I = geom::pose_to_matrix({0, 0, 0, 0, 0, 0});
    for (int i = 0; i < 16; ++i) CHECK(I[i] == (i % 5 == 0 ? 1.0 : 0.0));

    const auto q = geom::pose_to_matrix({0, 0, std::numbers::pi / 2, 0, 0, 0});
    CHECK(q[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(q[4] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(q[8]) < 1e-15);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::array<double, 6> p{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
        const auto m = geom::pose_to_matrix(p);
        Eigen::Matrix3d R;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) R(i, j) = m[i * 4 + j];
        CHECK((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
        const Eigen::Vector3d axis(p[0], p[1], p[2]);
        const Eigen::Matrix3d ref = Eigen::AngleAxisd(axis.norm(), axis.normalized()).toRotationMatrix();
        CHECK((R - ref).cwiseAbs().maxCoeff() < 1e-12);
        for (int i = 0; i < 3; ++i) CHECK(m[i * 4 + 3] == p[3 + i]);
    }
    // Small angles take the series branch.
    const auto s = geom::pose_to_matrix({1e-3, -2e-3, 5e-4, 0, 0, 0});
    const Eigen::Vector3d axis(1e-3, -2e-3, 5e-4);
    const Eigen::Matrix3d ref = Eigen::AngleAxisd(axis.norm(), axis.normalized()).toRotationMatrix();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(std::abs(s[i * 4 + j] - ref(i, j)) < 1e-15);
}

TEST_CASE("pose_to_transform gradient") {
    auto poses = pose_tensor({{0.3, -0.7, 1.1, 0.1, 0.2, -0.3}, {1e-3, 2e-3, -4e-3, 0.5, 0, 0}, {0, 0, 0, 0, 0, 0}});
    CHECK(test::grad_error([](Var<double> v) { return geom::pose_to_transform(v); }, poses, 5, 1e-4) < 1e-8);
    Tape<double> t;
    CHECK_THROWS_AS(geom::pose_to_transform(t.constant(Tensor4<double>(Shape{1, 3, 1, 1}))), ShapeError);
}

TEST_CASE("backproject") {
    const CameraIntrinsics K{40, 30, 7.0, 5.0};
    Tape<double> t;
    Tensor4<double> d(Shape{1, 1, 11, 15}, 2.5);
    auto P = geom::backproject(t.constant(d), K).value();
    CHECK(P(0, 0, 5, 7) == 0.0);
    CHECK(P(0, 1, 5, 7) == 0.0);
    CHECK(P(0, 2, 5, 7) == 2.5);

    Tensor4<double> d2 = d;
    d2 *= 2.0;
    auto P2 = geom::backproject(t.constant(d2), K).value();
    for (std::size_t i = 0; i < P.size(); ++i) CHECK(P2[i] == doctest::Approx(2 * P[i]).epsilon(1e-15));

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.5, 4.0);
    for (int trial = 0; trial < 20; ++trial) {
        const CameraIntrinsics R{u(rng) * 20, u(rng) * 20, u(rng) * 3, u(rng) * 3};
        auto depth = test::random_tensor<double>(Shape{1, 1, 6, 9}, rng, 0.5, 5.0);
        auto pts = geom::backproject(t.constant(depth), R).value();
        Eigen::Matrix3d Km;
        Km << R.fx, 0, R.cx, 0, R.fy, R.cy, 0, 0, 1;
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 9; ++x) {
                const Eigen::Vector3d ref = depth(0, 0, y, x) * Km.partialPivLu().solve(Eigen::Vector3d(x, y, 1));
                for (int c = 0; c < 3; ++c) CHECK(std::abs(pts(0, c, y, x) - ref[c]) < 1e-12);
            }
    }
    Tensor4<double> bad(Shape{1, 1, 2, 2}, 1.0);
    bad(0, 0, 1, 1) = 0.0;
    CHECK_THROWS_AS(geom::backproject(t.constant(bad), K), std::domain_error);
    CHECK_THROWS_AS(geom::backproject(t.constant(d), CameraIntrinsics{0, 1, 0, 0}), std::invalid_argument);
    CHECK(test::grad_error([&](Var<double> v) { return geom::backproject(v, K); },
                           test::random_tensor<double>(Shape{2, 1, 4, 5}, rng, 1, 3), 2) < 1e-9);
}

TEST_CASE("identity warp is exact") {
    std::mt19937_64 rng(4);
    const CameraIntrinsics K{52.3, 47.9, 31.7, 15.2};
    auto check = [&](auto zero) {
        using T = decltype(zero);
        Tape<T> t;
        auto ref = test::random_tensor<T>(Shape{2, 3, 32, 64}, rng, 0, 1);
        auto depth = test::random_tensor<T>(Shape{2, 1, 32, 64}, rng, 0.1, 100);
        auto tr = geom::pose_to_transform(t.constant(Tensor4<T>(Shape{2, 6, 1, 1})));
        Tensor4<T> valid;
        auto out = geom::warp(t.constant(ref), t.constant(depth), tr, K, &valid).value();
        for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(out[i] == ref[i]);
        for (auto v : valid.data()) CHECK(v == T(1));
    };
    check(0.0);
    check(0.0f);
}

TEST_CASE("x translation shifts by fx*t/d") {
    const CameraIntrinsics K{50, 50, 15.5, 7.5};
    const int h = 16, w = 32;
    Tensor4<double> ref(Shape{1, 1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) ref(0, 0, y, x) = 0.5 + 0.4 * std::sin(0.7 * x);
    for (double shift : {2.0, 1.37}) {
        const double d = 5.0, tx = shift * d / K.fx;
        Tape<double> t;
        auto tr = geom::pose_to_transform(t.constant(pose_tensor({{0, 0, 0, tx, 0, 0}})));
        auto out = geom::warp(t.constant(ref), t.constant(Tensor4<double>(Shape{1, 1, h, w}, d)), tr, K).value();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x + 3 < w; ++x) {
                const double s = x + shift;
                const int x0 = static_cast<int>(std::floor(s));
                const double f = s - x0;
                const double expect = (1 - f) * ref(0, 0, y, x0) + f * ref(0, 0, y, x0 + 1);
                CHECK(out(0, 0, y, x) == doctest::Approx(expect).epsilon(1e-12));
            }
    }
}

TEST_CASE("projection behind the camera is flagged") {
    const CameraIntrinsics K{10, 10, 2, 2};
    Tape<double> t;
    auto tr = geom::pose_to_transform(t.constant(pose_tensor({{0, 0, 0, 0, 0, -3}})));
    Tensor4<double> depth(Shape{1, 1, 5, 5}, 2.0);
    depth(0, 0, 0, 0) = 4.0;
    Tensor4<double> valid;
    auto grid = geom::project_coords(t.constant(depth), tr, K, &valid).value();
    CHECK(valid(0, 0, 0, 0) == 1.0);
    CHECK(valid(0, 0, 2, 2) == 0.0);
    for (auto g : grid.data()) CHECK(std::isfinite(g));
}

TEST_CASE("warp gradients") {
    std::mt19937_64 rng(21);
    const CameraIntrinsics K{8, 7, 3.5, 2.5};
    const Shape is{2, 3, 6, 8}, ds{2, 1, 6, 8};
    auto ref = test::random_tensor<double>(is, rng, 0, 1);
    auto depth = test::random_tensor<double>(ds, rng, 2, 4);
    auto pose = pose_tensor({{0.03, -0.02, 0.05, 0.1, -0.05, 0.08}, {-0.04, 0.01, 0.02, -0.12, 0.06, -0.1}});
    const double tol = 1e-5;
    for (int s = 1; s <= 3; ++s) {
        CAPTURE(s);
        CHECK(test::grad_error(
                  [&](Var<double> v) {
                      auto& t = *v.tape;
                      return geom::warp(t.constant(ref), v, geom::pose_to_transform(t.constant(pose)), K);
                  },
                  depth, s, 1e-4) < tol);
        CHECK(test::grad_error(
                  [&](Var<double> v) {
                      auto& t = *v.tape;
                      return geom::warp(t.constant(ref), t.constant(depth), geom::pose_to_transform(v), K);
                  },
                  pose, s, 1e-4) < tol);
        CHECK(test::grad_error(
                  [&](Var<double> v) {
                      auto& t = *v.tape;
                      return geom::warp(v, t.constant(depth), geom::pose_to_transform(t.constant(pose)), K);
                  },
                  ref, s) < tol);
        CHECK(test::grad_error(
                  [&](Var<double> v) {
                      auto& t = *v.tape;
                      return geom::project_coords(v, geom::pose_to_transform(t.constant(pose)), K);
                  },
                  depth, s, 1e-4) < tol);
    }
}

TEST_CASE("ssim") {
    std::mt19937_64 rng(2);
    Tape<double> t;
    auto x = test::random_tensor<double>(Shape{2, 3, 7, 9}, rng, 0, 1);
    auto y = test::random_tensor<double>(Shape{2, 3, 7, 9}, rng, 0, 1);
    auto same = loss::ssim_map(t.constant(x), t.constant(x)).value();
    for (auto v : same.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    auto s = loss::ssim_map(t.constant(x), t.constant(y)).value();
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c)
            for (int r = 0; r < 7; ++r)
                for (int q = 0; q < 9; ++q) {
                    CHECK(s(b, c, r, q) == doctest::Approx(ssim_at(x, y, b, c, r, q)).epsilon(1e-10));
                    const double l = (1 - s(b, c, r, q)) / 2;
                    CHECK(l >= 0.0);
                    CHECK(l <= 1.0);
                }

    Tensor4<double> board(Shape{1, 1, 8, 8}), inv(Shape{1, 1, 8, 8});
    for (int r = 0; r < 8; ++r)
        for (int q = 0; q < 8; ++q) {
            board(0, 0, r, q) = (r + q) % 2;
            inv(0, 0, r, q) = 1 - board(0, 0, r, q);
        }
    for (auto v : loss::ssim_map(t.constant(board), t.constant(inv)).value().data()) CHECK(v < 0.0);
    CHECK(test::grad_error([&](Var<double> v) { return loss::ssim_map(v, v.tape->constant(y)); }, x, 3) < 1e-6);
}

TEST_CASE("pairwise photometric") {
    std::mt19937_64 rng(8);
    Tape<double> t;
    auto x = test::random_tensor<double>(Shape{2, 3, 6, 5}, rng, 0, 1);
    auto y = test::random_tensor<double>(Shape{2, 3, 6, 5}, rng, 0, 1);
    for (auto v : loss::pairwise_photometric(t.constant(x), t.constant(x)).value().data())
        CHECK(std::abs(v) < 1e-14);
    auto l = loss::pairwise_photometric(t.constant(x), t.constant(y)).value();
    CHECK(l.shape() == Shape{2, 1, 6, 5});
    for (int b = 0; b < 2; ++b)
        for (int r = 0; r < 6; ++r)
            for (int q = 0; q < 5; ++q) {
                CHECK(l(b, 0, r, q) == doctest::Approx(pairwise_at(x, y, b, r, q)).epsilon(1e-10));
                CHECK(l(b, 0, r, q) <= 1.0);
            }
}

TEST_CASE("reconstruction loss") {
    std::mt19937_64 rng(12);
    const CameraIntrinsics K{50, 50, 15.5, 7.5};
    const int h = 16, w = 32;
    auto target = test::random_tensor<double>(Shape{1, 3, h, w}, rng, 0, 1);

    SUBCASE("static scene gives exactly zero") {
        Tape<double> t;
        auto tr = geom::pose_to_transform(t.constant(Tensor4<double>(Shape{1, 6, 1, 1})));
        auto depth = t.constant(test::random_tensor<double>(Shape{1, 1, h, w}, rng, 1, 10));
        auto tv = t.constant(target);
        std::vector<Var<double>> refs{tv, tv}, warped{geom::warp(tv, depth, tr, K), geom::warp(tv, depth, tr, K)};
        auto r = loss::reconstruction_loss(tv, refs, warped);
        CHECK(scalar(r.loss) == 0.0);
        CHECK(r.mask_fraction == 0.0);
    }

    SUBCASE("min picks the warpable reference") {
        // ref_good(x) = target(x - 2): warping with shift +2 recovers the target.
        Tensor4<double> good(target.shape());
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) good(0, c, y, x) = target(0, c, y, std::max(0, x - 2));
        auto bad = test::random_tensor<double>(target.shape(), rng, 0, 1);
        Tape<double> t;
        const double d = 5.0;
        auto depth = t.constant(Tensor4<double>(Shape{1, 1, h, w}, d));
        auto shift = geom::pose_to_transform(t.constant(pose_tensor({{0, 0, 0, 2 * d / K.fx, 0, 0}})));
        auto tv = t.constant(target), gv = t.constant(good), bv = t.constant(bad);
        auto wg = geom::warp(gv, depth, shift, K), wb = geom::warp(bv, depth, shift, K);
        auto r = loss::reconstruction_loss(tv, {gv, bv}, {wg, wb});

        // Oracle: literal per-pixel min of masked pairwise terms.
        double sum = 0.0;
        const auto& wgv = wg.value();
        const auto& wbv = wb.value();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double lg = pairwise_at(wgv, target, 0, y, x), lgo = pairwise_at(good, target, 0, y, x);
                const double lb = pairwise_at(wbv, target, 0, y, x), lbo = pairwise_at(bad, target, 0, y, x);
                const double mg = lg < lgo ? lg : 0.0, mb = lb < lbo ? lb : 0.0;
                sum += std::min(mg, mb);
                if (x >= 1 && x + 4 < w) {
                    CHECK(lg < 1e-12);
                }
            }
        CHECK(scalar(r.loss) == doctest::Approx(sum / (h * w)).epsilon(1e-12));
        CHECK(scalar(r.loss) >= 0.0);
        auto only_bad = loss::reconstruction_loss(tv, {bv}, {wb});
        CHECK(scalar(r.loss) <= scalar(only_bad.loss));
    }

    SUBCASE("gradient with masks held") {
        auto ref = test::random_tensor<double>(target.shape(), rng, 0, 1);
        auto pose = pose_tensor({{0.01, 0.02, -0.01, 0.05, 0.02, 0.03}});
        auto depth = test::random_tensor<double>(Shape{1, 1, h, w}, rng, 2, 4);
        auto fn = [&](Var<double> v) {
            auto& t = *v.tape;
            auto tv = t.constant(target), rv = t.constant(ref);
            auto wr = geom::warp(rv, v, geom::pose_to_transform(t.constant(pose)), K);
            return loss::reconstruction_loss(tv, {rv, rv}, {wr, wr}).loss;
        };
        CHECK(loss_grad_error(fn, depth) < 1e-5);
    }
}

TEST_CASE("surface normals") {
    const CameraIntrinsics K{20, 20, 7.5, 5.5};
    Tape<double> t;
    const int h = 12, w = 16;
    SUBCASE("fronto-parallel plane") {
        auto P = geom::backproject(t.constant(Tensor4<double>(Shape{1, 1, h, w}, 3.0)), K);
        auto n = geom::surface_normals(P).value();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                CHECK(n(0, 0, y, x) == 0.0);
                CHECK(n(0, 1, y, x) == 0.0);
                CHECK(n(0, 2, y, x) > 0.0);
            }
    }
    SUBCASE("tilted plane") {
        const double a = 0.3, b = -0.2, c = 4.0;
        Tensor4<double> depth(Shape{1, 1, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double rx = (x - K.cx) / K.fx, ry = (y - K.cy) / K.fy;
                depth(0, 0, y, x) = c / (1 - a * rx - b * ry);
            }
        auto n = geom::surface_normals(geom::backproject(t.constant(depth), K)).value();
        const Eigen::Vector3d ref = Eigen::Vector3d(-a, -b, 1).normalized();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const Eigen::Vector3d v(n(0, 0, y, x), n(0, 1, y, x), n(0, 2, y, x));
                CHECK(v.normalized().dot(ref) >= 0.999);
            }
    }
    SUBCASE("matches ring oracle, reversal flips sign") {
        std::mt19937_64 rng(5);
        auto pts = test::random_tensor<double>(Shape{2, 3, 5, 6}, rng);
        auto n = geom::surface_normals(t.constant(pts)).value();
        auto cw = normals_oracle(pts, true), ccw = normals_oracle(pts, false);
        CHECK(test::max_abs_diff(n, cw) < 1e-14);
        Tensor4<double> neg = ccw;
        neg *= -1.0;
        CHECK(test::max_abs_diff(n, neg) < 1e-14);
        auto s1 = geom::sine_distance(t.constant(n), t.constant(cw)).value();
        for (auto v : s1.data()) CHECK(std::abs(v) < 1e-12);
        auto other = test::random_tensor<double>(pts.shape(), rng);
        auto sa = geom::sine_distance(t.constant(n), t.constant(other)).value();
        auto sb = geom::sine_distance(t.constant(ccw), t.constant(other)).value();
        CHECK(test::max_abs_diff(sa, sb) < 1e-14);
        CHECK(test::grad_error([](Var<double> v) { return geom::surface_normals(v); }, pts, 4) < 1e-9);
    }
}

TEST_CASE("sine distance") {
    Tape<double> t;
    Tensor4<double> a(Shape{1, 3, 1, 4}), b(Shape{1, 3, 1, 4});
    // parallel, orthogonal, 45 degrees, antiparallel
    const double av[4][3] = {{1, 2, 3}, {1, 0, 0}, {1, 0, 0}, {0, 0, 2}};
    const double bv[4][3] = {{2, 4, 6}, {0, 5, 0}, {1, 1, 0}, {0, 0, -7}};
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c) {
            a(0, c, 0, i) = av[i][c];
            b(0, c, 0, i) = bv[i][c];
        }
    auto s = geom::sine_distance(t.constant(a), t.constant(b)).value();
    CHECK(std::abs(s[0]) < 1e-15);
    CHECK(s[1] == 1.0);
    CHECK(s[2] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(std::abs(s[3]) < 1e-15);

    std::mt19937_64 rng(6);
    auto x = test::random_tensor<double>(Shape{2, 3, 4, 5}, rng);
    auto y = test::random_tensor<double>(Shape{2, 3, 4, 5}, rng);
    auto base = geom::sine_distance(t.constant(x), t.constant(y)).value();
    Tensor4<double> xs = x, ys = y;
    xs *= -3.5;
    ys *= 0.25;
    auto scaled = geom::sine_distance(t.constant(xs), t.constant(ys)).value();
    CHECK(test::max_abs_diff(base, scaled) < 1e-13);
    auto sym = geom::sine_distance(t.constant(y), t.constant(x)).value();
    CHECK(test::max_abs_diff(base, sym) < 1e-15);
    for (auto v : base.data()) {
        CHECK(v >= -1e-15);
        CHECK(v <= 1.0 + 1e-15);
    }
    CHECK(test::grad_error([&](Var<double> v) { return geom::sine_distance(v, v.tape->constant(y)); }, x, 7) < 1e-6);
    CHECK(test::grad_error([&](Var<double> v) { return geom::sine_distance(v.tape->constant(x), v); }, y, 8) < 1e-6);
}

TEST_CASE("geometric smoothness") {
    const CameraIntrinsics K{20, 20, 7.5, 5.5};
    const int h = 12, w = 16;
    Tape<double> t;
    Tensor4<double> img(Shape{1, 3, h, w}, 0.4);
    auto flat = loss::geometric_smoothness(t.constant(Tensor4<double>(Shape{1, 1, h, w}, 0.37)), img, K, 0.1, 100);
    CHECK(std::abs(scalar(flat)) <= 1e-8);

    std::mt19937_64 rng(14);
    auto disp = test::random_tensor<double>(Shape{2, 1, h, w}, rng, 0.05, 0.5);
    auto tex = test::random_tensor<double>(Shape{2, 3, h, w}, rng, 0, 1);
    // A hard vertical image edge switches off the horizontal terms across it.
    Tensor4<double> edge(Shape{2, 3, h, w}, 0.0);
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = w / 2; x < w; ++x) edge(b, c, y, x) = 1e3;
    Tensor4<double> step(Shape{2, 1, h, w}, 0.2);
    for (int b = 0; b < 2; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = w / 2; x < w; ++x) step(b, 0, y, x) = 0.6;
    const double with_edge = scalar(loss::geometric_smoothness(t.constant(step), edge, K, 0.1, 100));
    const double without = scalar(loss::geometric_smoothness(t.constant(step), Tensor4<double>(edge.shape()), K, 0.1, 100));
    // The disparity jump sits on the image edge, so its |dx d| term (0.4 per row) vanishes.
    CHECK(without - with_edge > 0.99 * 0.4 / (w - 1));

    CHECK(loss_grad_error([&](Var<double> v) { return loss::geometric_smoothness(v, tex, K, 0.1, 100); }, disp) <
          1e-5);
}

TEST_CASE("gray opening") {
    Tensor4<double> c(Shape{1, 1, 20, 20}, 0.3);
    CHECK(test::max_abs_diff(loss::gray_opening(c, 31), c) == 0.0);
    Tensor4<double> spike = c;
    spike(0, 0, 9, 11) = 0.9;
    CHECK(test::max_abs_diff(loss::gray_opening(spike, 31), c) == 0.0);
    CHECK_THROWS_AS(loss::gray_opening(c, 4), std::invalid_argument);

    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 * (trial % 5) + 1;
        auto x = test::random_tensor<double>(Shape{1, 1, 9 + trial % 7, 11 + trial % 5}, rng);
        auto o = loss::gray_opening(x, k);
        REQUIRE(test::max_abs_diff(o, brute_opening(x, k)) == 0.0);
        REQUIRE(test::max_abs_diff(loss::gray_opening(o, k), o) == 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(o[i] <= x[i]);
    }
}

TEST_CASE("self contrast") {
    Tape<double> t;
    std::mt19937_64 rng(16);
    auto x = test::random_tensor<double>(Shape{2, 1, 40, 40}, rng, 0, 1);
    auto opened = loss::gray_opening(x, 31);
    CHECK(scalar(loss::self_contrast(t.constant(opened))) == 0.0);
    CHECK(scalar(loss::self_contrast(t.constant(Tensor4<double>(Shape{1, 1, 8, 8}, 0.5)))) == 0.0);

    // One spike of height 0.7 over a flat 0.2 map, next to a flat sample.
    Tensor4<double> d(Shape{2, 1, 40, 40}, 0.2);
    d(0, 0, 17, 23) = 0.9;
    CHECK(scalar(loss::self_contrast(t.constant(d))) == doctest::Approx(0.7 / 2).epsilon(1e-14));
    CHECK(scalar(loss::self_contrast(t.constant(x))) >= 0.0);

    auto small = test::random_tensor<double>(Shape{2, 1, 10, 12}, rng, 0, 1);
    const auto held = loss::contrast_targets(small, 5);
    CHECK(scalar(loss::self_contrast(t.constant(small), held)) == scalar(loss::self_contrast(t.constant(small), 5)));
    CHECK(loss_grad_error([&](Var<double> v) { return loss::self_contrast(v, held); }, small) < 1e-5);
}

TEST_CASE("depth objective combines terms") {
    std::mt19937_64 rng(17);
    const CameraIntrinsics K{12, 12, 7.5, 3.5};
    const int h = 8, w = 16;
    auto target = test::random_tensor<double>(Shape{1, 3, h, w}, rng, 0, 1);
    auto ref = test::random_tensor<double>(Shape{1, 3, h, w}, rng, 0, 1);
    auto disp = test::random_tensor<double>(Shape{1, 1, h, w}, rng, 0.1, 0.9);
    auto pose = pose_tensor({{0.01, 0.02, 0, 0.1, 0, 0}});
    auto run = [&](loss::DepthLossWeights wts) {
        Tape<double> t;
        auto dv = t.constant(disp);
        auto depth = disparity_to_depth(dv, 0.1, 100.0);
        auto rv = t.constant(ref);
        std::vector<Tensor4<double>> valid(1);
        auto wr = geom::warp(rv, depth, geom::pose_to_transform(t.constant(pose)), K, &valid[0]);
        auto terms = loss::depth_objective(dv, t.constant(target), {rv}, {wr}, valid, K, 0.1, 100.0, wts);
        return std::pair{scalar(terms.total), terms};
    };
    loss::DepthLossWeights def;
    CHECK(def.alpha == 1e-3);
    CHECK(def.beta == 1e-3);
    const auto [total, terms] = run(def);
    CHECK(total == doctest::Approx(terms.reconstruction + 1e-3 * terms.smoothness + 1e-3 * terms.contrast)
                       .epsilon(1e-14));
    const auto [plain, pterms] = run({0.0, 0.0});
    CHECK(plain == pterms.reconstruction);
}

TEST_CASE("cross entropy") {
    Tape<double> t;
    Tensor4<double> labels(Shape{1, 1, 2, 3}, 1.0);
    auto uniform = loss::cross_entropy(t.constant(Tensor4<double>(Shape{1, 4, 2, 3}, 0.7)), labels);
    CHECK(scalar(uniform.loss) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(uniform.counted == 6);

    double prev = 1e9;
    for (double margin : {1.0, 5.0, 20.0, 60.0}) {
        Tensor4<double> z(Shape{1, 4, 2, 3});
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 3; ++x) z(0, 1, y, x) = margin;
        const double l = scalar(loss::cross_entropy(t.constant(z), labels).loss);
        CHECK(l < prev);
        prev = l;
    }
    CHECK(prev < 1e-20);

    std::mt19937_64 rng(18);
    auto z = test::random_tensor<double>(Shape{2, 5, 3, 4}, rng, -3, 3);
    Tensor4<double> lab(Shape{2, 1, 3, 4});
    std::uniform_int_distribution<int> cls(0, 5);
    double sum = 0.0;
    int count = 0;
    for (int b = 0; b < 2; ++b)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 4; ++x) {
                const int c = cls(rng);
                lab(b, 0, y, x) = c == 5 ? loss::kIgnoreLabel : c;
                if (c == 5) continue;
                double zsum = 0.0;
                for (int k = 0; k < 5; ++k) zsum += std::exp(z(b, k, y, x));
                sum += -std::log(std::exp(z(b, c, y, x)) / zsum);
                ++count;
            }
    auto r = loss::cross_entropy(t.constant(z), lab);
    CHECK(r.counted == count);
    CHECK(scalar(r.loss) == doctest::Approx(sum / count).epsilon(1e-12));
    CHECK(loss_grad_error([&](Var<double> v) { return loss::cross_entropy(v, lab).loss; }, z, 1e-3) < 1e-8);

    Tensor4<double> none(Shape{1, 1, 2, 3}, loss::kIgnoreLabel);
    auto ignored = loss::cross_entropy(t.constant(Tensor4<double>(Shape{1, 4, 2, 3})), none);
    CHECK(ignored.counted == 0);
    CHECK(scalar(ignored.loss) == 0.0);
    Tensor4<double> bad(Shape{1, 1, 2, 3}, 4.0);
    CHECK_THROWS_AS(loss::cross_entropy(t.constant(Tensor4<double>(Shape{1, 4, 2, 3})), bad), std::invalid_argument);
}
