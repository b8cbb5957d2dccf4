#include "fsl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fsl/ops.hpp"

namespace fsl::geom {

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0 && fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy)) {
        throw std::invalid_argument("camera intrinsics need positive finite focal lengths");
    }
}

CameraIntrinsics CameraIntrinsics::scaled(double sx, double sy) const {
    return {fx * sx, fy * sy, cx * sx, cy * sy};
}

namespace {

using Mat3 = std::array<double, 9>;
using Vec3 = std::array<double, 3>;

// R = I + A K + B K^2 with K = [r]x, A = sin(t)/t, B = (1 - cos t)/t^2 and the
// derivatives dA/ds, dB/ds with s = t^2. Small angles use the Taylor series.
struct RodriguesCoeffs {
    double a, b, da, db;
};

RodriguesCoeffs rodrigues_coeffs(double s) {
    if (s < 1e-4) {
        return {1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0,
                0.5 - s / 24.0 + s * s / 720.0 - s * s * s / 40320.0,
                -1.0 / 6.0 + s / 60.0 - s * s / 1680.0 + s * s * s / 90720.0,
                -1.0 / 24.0 + s / 360.0 - s * s / 13440.0 + s * s * s / 907200.0};
    }
    const double t = std::sqrt(s), sn = std::sin(t), cs = std::cos(t);
    const double one_minus_cos = 2.0 * std::sin(0.5 * t) * std::sin(0.5 * t);
    return {sn / t, one_minus_cos / s, (t * cs - sn) / (2.0 * s * t), (t * sn - 2.0 * one_minus_cos) / (2.0 * s * s)};
}

Mat3 skew(const Vec3& r) {
    return {0.0, -r[2], r[1], r[2], 0.0, -r[0], -r[1], r[0], 0.0};
}

Mat3 matmul(const Mat3& x, const Mat3& y) {
    Mat3 o{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) o[i * 3 + j] += x[i * 3 + k] * y[k * 3 + j];
    return o;
}

Mat3 rotation(const Vec3& r) {
    const auto c = rodrigues_coeffs(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    const Mat3 K = skew(r), K2 = matmul(K, K);
    Mat3 R{};
    for (int i = 0; i < 9; ++i) R[i] = c.a * K[i] + c.b * K2[i];
    R[0] += 1.0;
    R[4] += 1.0;
    R[8] += 1.0;
    return R;
}

// Gradient of <G, R(r)> with respect to r.
Vec3 rotation_vjp(const Vec3& r, const Mat3& G) {
    const auto c = rodrigues_coeffs(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    const Mat3 K = skew(r), K2 = matmul(K, K);
    double gk = 0.0, gk2 = 0.0;
    for (int i = 0; i < 9; ++i) {
        gk += G[i] * K[i];
        gk2 += G[i] * K2[i];
    }
    Vec3 out{};
    for (int k = 0; k < 3; ++k) {
        Vec3 e{};
        e[k] = 1.0;
        const Mat3 dK = skew(e), KdK = matmul(K, dK), dKK = matmul(dK, K);
        double v = 2.0 * r[k] * (c.da * gk + c.db * gk2);
        for (int i = 0; i < 9; ++i) v += G[i] * (c.a * dK[i] + c.b * (KdK[i] + dKK[i]));
        out[k] = v;
    }
    return out;
}

template <typename T>
double snap(double u) {
    const double r = std::nearbyint(u);
    const double tol = 64.0 * std::numeric_limits<T>::epsilon() * std::max(1.0, std::abs(u));
    return std::abs(u - r) <= tol ? r : u;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace

std::array<double, 16> pose_to_matrix(const std::array<double, 6>& pose) {
    const Mat3 R = rotation({pose[0], pose[1], pose[2]});
    std::array<double, 16> m{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) m[i * 4 + j] = R[i * 3 + j];
        m[i * 4 + 3] = pose[3 + i];
    }
    m[15] = 1.0;
    return m;
}

template <typename T>
Var<T> pose_to_transform(Var<T> pose) {
    const Shape ps = pose.shape();
    require(ps.c == 6 && ps.h == 1 && ps.w == 1, "pose_to_transform: expected (n,6,1,1), got " + ps.str());
    Tensor4<T> out({ps.n, 12, 1, 1});
    const auto& pv = pose.value();
    for (int b = 0; b < ps.n; ++b) {
        const Mat3 R = rotation({pv(b, 0, 0, 0), pv(b, 1, 0, 0), pv(b, 2, 0, 0)});
        for (int i = 0; i < 9; ++i) out(b, i, 0, 0) = static_cast<T>(R[i]);
        for (int i = 0; i < 3; ++i) out(b, 9 + i, 0, 0) = pv(b, 3 + i, 0, 0);
    }
    const int ip = pose.id;
    return pose.tape->record("pose_to_transform", std::move(out), {ip}, [ip, ps](Tape<T>& t, const Tensor4<T>& g) {
        const auto& pv = t.value(ip);
        Tensor4<T> gp(ps);
        for (int b = 0; b < ps.n; ++b) {
            Mat3 G{};
            for (int i = 0; i < 9; ++i) G[i] = g(b, i, 0, 0);
            const Vec3 gr = rotation_vjp({pv(b, 0, 0, 0), pv(b, 1, 0, 0), pv(b, 2, 0, 0)}, G);
            for (int i = 0; i < 3; ++i) {
                gp(b, i, 0, 0) = static_cast<T>(gr[i]);
                gp(b, 3 + i, 0, 0) = g(b, 9 + i, 0, 0);
            }
        }
        t.accumulate(ip, gp);
    });
}

template <typename T>
Var<T> backproject(Var<T> depth, const CameraIntrinsics& K) {
    K.validate();
    const Shape ds = depth.shape();
    require(ds.c == 1, "backproject: depth must have one channel, got " + ds.str());
    const auto& dv = depth.value();
    for (T d : dv.data()) {
        if (!(d > T(0))) throw std::domain_error("backproject: depth must be positive");
    }
    Tensor4<T> out({ds.n, 3, ds.h, ds.w});
    for (int b = 0; b < ds.n; ++b)
        for (int y = 0; y < ds.h; ++y)
            for (int x = 0; x < ds.w; ++x) {
                const double d = dv(b, 0, y, x);
                out(b, 0, y, x) = static_cast<T>(d * (x - K.cx) / K.fx);
                out(b, 1, y, x) = static_cast<T>(d * (y - K.cy) / K.fy);
                out(b, 2, y, x) = static_cast<T>(d);
            }
    const int id = depth.id;
    return depth.tape->record("backproject", std::move(out), {id}, [id, ds, K](Tape<T>& t, const Tensor4<T>& g) {
        Tensor4<T> gd(ds);
        for (int b = 0; b < ds.n; ++b)
            for (int y = 0; y < ds.h; ++y)
                for (int x = 0; x < ds.w; ++x) {
                    gd(b, 0, y, x) = static_cast<T>(g(b, 0, y, x) * (x - K.cx) / K.fx +
                                                    g(b, 1, y, x) * (y - K.cy) / K.fy + g(b, 2, y, x));
                }
        t.accumulate(id, gd);
    });
}

template <typename T>
Var<T> project_coords(Var<T> depth, Var<T> transform, const CameraIntrinsics& K, Tensor4<T>* valid) {
    K.validate();
    const Shape ds = depth.shape(), ts = transform.shape();
    require(ds.c == 1, "project_coords: depth must have one channel, got " + ds.str());
    require(ts == Shape{ds.n, 12, 1, 1}, "project_coords: transform must be (n,12,1,1), got " + ts.str());
    const auto& dv = depth.value();
    const auto& tv = transform.value();
    Tensor4<T> out({ds.n, 2, ds.h, ds.w});
    if (valid) *valid = Tensor4<T>({ds.n, 1, ds.h, ds.w}, T(1));
    for (int b = 0; b < ds.n; ++b) {
        double R[12];
        for (int i = 0; i < 12; ++i) R[i] = tv(b, i, 0, 0);
        for (int y = 0; y < ds.h; ++y)
            for (int x = 0; x < ds.w; ++x) {
                const double d = dv(b, 0, y, x);
                const double P[3] = {d * (x - K.cx) / K.fx, d * (y - K.cy) / K.fy, d};
                double Q[3];
                for (int i = 0; i < 3; ++i) Q[i] = R[i * 3] * P[0] + R[i * 3 + 1] * P[1] + R[i * 3 + 2] * P[2] + R[9 + i];
                double z = Q[2];
                if (!(z > kMinProjectedZ)) {
                    z = kMinProjectedZ;
                    if (valid) (*valid)(b, 0, y, x) = T(0);
                }
                out(b, 0, y, x) = static_cast<T>(snap<T>(K.fx * Q[0] / z + K.cx));
                out(b, 1, y, x) = static_cast<T>(snap<T>(K.fy * Q[1] / z + K.cy));
            }
    }
    const int id = depth.id, it = transform.id;
    return depth.tape->record(
        "project_coords", std::move(out), {id, it}, [id, it, ds, K](Tape<T>& t, const Tensor4<T>& g) {
            const auto& dv = t.value(id);
            const auto& tv = t.value(it);
            const bool wd = t.requires_grad(id), wt = t.requires_grad(it);
            Tensor4<T> gd(ds), gt({ds.n, 12, 1, 1});
            for (int b = 0; b < ds.n; ++b) {
                double R[12], gR[12] = {};
                for (int i = 0; i < 12; ++i) R[i] = tv(b, i, 0, 0);
                for (int y = 0; y < ds.h; ++y)
                    for (int x = 0; x < ds.w; ++x) {
                        const double ray[3] = {(x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0};
                        const double d = dv(b, 0, y, x);
                        const double P[3] = {d * ray[0], d * ray[1], d};
                        double Q[3];
                        for (int i = 0; i < 3; ++i)
                            Q[i] = R[i * 3] * P[0] + R[i * 3 + 1] * P[1] + R[i * 3 + 2] * P[2] + R[9 + i];
                        const bool ok = Q[2] > kMinProjectedZ;
                        const double z = ok ? Q[2] : kMinProjectedZ;
                        const double gu = g(b, 0, y, x), gv = g(b, 1, y, x);
                        const double dQ[3] = {gu * K.fx / z, gv * K.fy / z,
                                              ok ? -(gu * K.fx * Q[0] + gv * K.fy * Q[1]) / (z * z) : 0.0};
                        if (wd) {
                            double gdep = 0.0;
                            for (int j = 0; j < 3; ++j) {
                                const double dPj = R[j] * dQ[0] + R[3 + j] * dQ[1] + R[6 + j] * dQ[2];
                                gdep += dPj * ray[j];
                            }
                            gd(b, 0, y, x) = static_cast<T>(gdep);
                        }
                        if (wt) {
                            for (int i = 0; i < 3; ++i) {
                                for (int j = 0; j < 3; ++j) gR[i * 3 + j] += dQ[i] * P[j];
                                gR[9 + i] += dQ[i];
                            }
                        }
                    }
                for (int i = 0; i < 12; ++i) gt(b, i, 0, 0) = static_cast<T>(gR[i]);
            }
            if (wd) t.accumulate(id, gd);
            if (wt) t.accumulate(it, gt);
        });
}

template <typename T>
Var<T> warp(Var<T> reference, Var<T> depth, Var<T> transform, const CameraIntrinsics& K, Tensor4<T>* valid) {
    const Shape rs = reference.shape(), ds = depth.shape();
    require(rs.n == ds.n && rs.h == ds.h && rs.w == ds.w,
            "warp: reference " + rs.str() + " does not match depth " + ds.str());
    return ad::bilinear_sample(reference, project_coords(depth, transform, K, valid));
}

namespace {

// Ring offsets (dy, dx) clockwise from the top-left neighbour.
constexpr double kSquaredNormFloor = 1e-24;

constexpr int kRing[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}};

}  // namespace

template <typename T>
Var<T> surface_normals(Var<T> points) {
    const Shape s = points.shape();
    require(s.c == 3, "surface_normals: expected 3 channels, got " + s.str());
    const auto& pv = points.value();
    auto cl = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    Tensor4<T> out(s);
    for (int b = 0; b < s.n; ++b)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                double v[8][3];
                for (int r = 0; r < 8; ++r) {
                    const int yy = cl(y + kRing[r][0], s.h), xx = cl(x + kRing[r][1], s.w);
                    for (int c = 0; c < 3; ++c) v[r][c] = static_cast<double>(pv(b, c, yy, xx)) - pv(b, c, y, x);
                }
                double n[3] = {};
                for (int r = 0; r < 8; ++r) {
                    const double* a = v[r];
                    const double* q = v[(r + 1) % 8];
                    n[0] += a[1] * q[2] - a[2] * q[1];
                    n[1] += a[2] * q[0] - a[0] * q[2];
                    n[2] += a[0] * q[1] - a[1] * q[0];
                }
                for (int c = 0; c < 3; ++c) out(b, c, y, x) = static_cast<T>(n[c] / 8.0);
            }
    const int ip = points.id;
    return points.tape->record("surface_normals", std::move(out), {ip}, [ip, s, cl](Tape<T>& t, const Tensor4<T>& g) {
        const auto& pv = t.value(ip);
        Tensor4<T> gp(s);
        for (int b = 0; b < s.n; ++b)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    const double gn[3] = {g(b, 0, y, x) / 8.0, g(b, 1, y, x) / 8.0, g(b, 2, y, x) / 8.0};
                    double v[8][3], gv[8][3] = {};
                    int yy[8], xx[8];
                    for (int r = 0; r < 8; ++r) {
                        yy[r] = cl(y + kRing[r][0], s.h);
                        xx[r] = cl(x + kRing[r][1], s.w);
                        for (int c = 0; c < 3; ++c)
                            v[r][c] = static_cast<double>(pv(b, c, yy[r], xx[r])) - pv(b, c, y, x);
                    }
                    for (int r = 0; r < 8; ++r) {
                        const double* a = v[r];
                        const double* q = v[(r + 1) % 8];
                        // d<gn, a x q>/da = q x gn, d/dq = gn x a
                        gv[r][0] += q[1] * gn[2] - q[2] * gn[1];
                        gv[r][1] += q[2] * gn[0] - q[0] * gn[2];
                        gv[r][2] += q[0] * gn[1] - q[1] * gn[0];
                        double* gq = gv[(r + 1) % 8];
                        gq[0] += gn[1] * a[2] - gn[2] * a[1];
                        gq[1] += gn[2] * a[0] - gn[0] * a[2];
                        gq[2] += gn[0] * a[1] - gn[1] * a[0];
                    }
                    for (int r = 0; r < 8; ++r)
                        for (int c = 0; c < 3; ++c) {
                            gp(b, c, yy[r], xx[r]) += static_cast<T>(gv[r][c]);
                            gp(b, c, y, x) -= static_cast<T>(gv[r][c]);
                        }
                }
        t.accumulate(ip, gp);
    });
}

template <typename T>
Var<T> sine_distance(Var<T> a, Var<T> b) {
    const Shape s = a.shape();
    require(s.c == 3 && b.shape() == s, "sine_distance: expected matching (n,3,h,w), got " + s.str() + " and " +
                                            b.shape().str());
    auto terms = [](const Tensor4<T>& av, const Tensor4<T>& bv, int n, int y, int x, double* p, double* q) {
        double d = 0.0, pp = 0.0, qq = 0.0;
        for (int c = 0; c < 3; ++c) {
            p[c] = av(n, c, y, x);
            q[c] = bv(n, c, y, x);
            d += p[c] * q[c];
            pp += p[c] * p[c];
            qq += q[c] * q[c];
        }
        return std::array<double, 3>{d, pp, qq};
    };
    Tensor4<T> out({s.n, 1, s.h, s.w});
    for (int n = 0; n < s.n; ++n)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                double p[3], q[3];
                const auto [d, pp, qq] = terms(a.value(), b.value(), n, y, x, p, q);
                out(n, 0, y, x) = static_cast<T>(1.0 - d * d / (std::max(pp, kSquaredNormFloor) * std::max(qq, kSquaredNormFloor)));
            }
    const int ia = a.id, ib = b.id;
    return a.tape->record("sine_distance", std::move(out), {ia, ib}, [ia, ib, s, terms](Tape<T>& t, const Tensor4<T>& g) {
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        Tensor4<T> ga(s), gb(s);
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double p[3], q[3];
                    const auto [d, pp, qq] = terms(av, bv, n, y, x, p, q);
                    const bool fp = pp > kSquaredNormFloor, fq = qq > kSquaredNormFloor;
                    const double P = std::max(pp, kSquaredNormFloor), Q = std::max(qq, kSquaredNormFloor);
                    const double go = g(n, 0, y, x);
                    const double k = -2.0 * d / (P * Q) * go;
                    const double c2 = d * d / (P * Q);
                    for (int c = 0; c < 3; ++c) {
                        ga(n, c, y, x) = static_cast<T>(k * q[c] + (fp ? 2.0 * c2 / P * p[c] * go : 0.0));
                        gb(n, c, y, x) = static_cast<T>(k * p[c] + (fq ? 2.0 * c2 / Q * q[c] * go : 0.0));
                    }
                }
        if (t.requires_grad(ia)) t.accumulate(ia, ga);
        if (t.requires_grad(ib)) t.accumulate(ib, gb);
    });
}

#define FSL_INSTANTIATE_GEOM(T)                                                                          \
    template Var<T> pose_to_transform(Var<T>);                                                           \
    template Var<T> backproject(Var<T>, const CameraIntrinsics&);                                        \
    template Var<T> project_coords(Var<T>, Var<T>, const CameraIntrinsics&, Tensor4<T>*);                \
    template Var<T> warp(Var<T>, Var<T>, Var<T>, const CameraIntrinsics&, Tensor4<T>*);                  \
    template Var<T> surface_normals(Var<T>);                                                             \
    template Var<T> sine_distance(Var<T>, Var<T>);

FSL_INSTANTIATE_GEOM(float)
FSL_INSTANTIATE_GEOM(double)

}  // namespace fsl::geom
