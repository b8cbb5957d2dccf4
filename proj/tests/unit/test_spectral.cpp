#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fsl/ops.hpp"
#include "fsl/spectral.hpp"
#include "helpers.hpp"

using namespace fsl;
using cd = std::complex<double>;

namespace {

cd brute_bin(const Tensor4<double>& x, int b, int c, int u, int v) {
    const int h = x.h(), w = x.w();
    cd s = 0.0;
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            const double ang = -2.0 * std::numbers::pi * (double(u) * y / h + double(v) * xx / w);
            s += x(b, c, y, xx) * cd(std::cos(ang), std::sin(ang));
        }
    return s / std::sqrt(double(h * w));
}

}  // namespace

TEST_CASE("rdft2 simple spectra") {
    auto f = spectral::rdft2(Tensor4<double>(Shape{1, 1, 4, 4}, 2.0));
    CHECK(f.re.shape() == Shape{1, 1, 4, 3});
    CHECK(f.re[0] == doctest::Approx(8.0));
    for (std::size_t i = 1; i < f.re.size(); ++i) {
        CHECK(std::abs(f.re[i]) < 1e-14);
        CHECK(std::abs(f.im[i]) < 1e-14);
    }
    Tensor4<double> imp(Shape{1, 1, 4, 4});
    imp[0] = 1.0;
    auto fi = spectral::rdft2(imp);
    for (std::size_t i = 0; i < fi.re.size(); ++i) {
        CHECK(fi.re[i] == doctest::Approx(0.25));
        CHECK(std::abs(fi.im[i]) < 1e-15);
    }
}

TEST_CASE("rdft2 matches brute-force sums") {
    std::mt19937_64 rng(21);
    for (Shape s : {Shape{1, 1, 4, 4}, Shape{2, 2, 8, 4}, Shape{1, 1, 3, 5}, Shape{1, 2, 6, 7}, Shape{1, 1, 1, 1}}) {
        auto x = test::random_tensor<double>(s, rng);
        auto f = spectral::rdft2(x);
        CHECK(f.re.w() == s.w / 2 + 1);
        for (int b = 0; b < s.n; ++b)
            for (int c = 0; c < s.c; ++c)
                for (int u = 0; u < s.h; ++u)
                    for (int v = 0; v < f.re.w(); ++v) {
                        const cd ref = brute_bin(x, b, c, u, v);
                        CHECK(std::abs(f.re(b, c, u, v) - ref.real()) < 1e-10);
                        CHECK(std::abs(f.im(b, c, u, v) - ref.imag()) < 1e-10);
                    }
        auto back = spectral::irdft2(f, s.w);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-10);
    }
}

TEST_CASE("fast and direct 1D transforms agree") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> d;
    std::vector<cd> a(16);
    for (auto& z : a) z = cd(d(rng), d(rng));
    auto b = a;
    spectral::dft1d(a, -1);
    spectral::dft1d_direct(b, -1);
    for (int i = 0; i < 16; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("irdft2 simple spectra and errors") {
    ComplexTensor4<double> f{Tensor4<double>(Shape{1, 1, 4, 3}), Tensor4<double>(Shape{1, 1, 4, 3})};
    f.re[0] = 4.0 * 1.5;
    auto x = spectral::irdft2(f, 4);
    for (double v : x.data()) CHECK(v == doctest::Approx(1.5));
    f.re[0] = 0.0;
    auto zero = spectral::irdft2(f, 4);
    for (double v : zero.data()) CHECK(v == 0.0);
    CHECK_THROWS_AS(spectral::irdft2(f, 6), ShapeError);
}

TEST_CASE("Parseval, linearity, adjoint") {
    std::mt19937_64 rng(8);
    for (Shape s : {Shape{1, 1, 4, 4}, Shape{1, 2, 8, 6}, Shape{1, 1, 5, 7}}) {
        auto x = test::random_tensor<double>(s, rng);
        auto f = spectral::rdft2(x);
        double ex = 0.0, ef = 0.0;
        for (double v : x.data()) ex += v * v;
        for (int c = 0; c < s.c; ++c)
            for (int u = 0; u < s.h; ++u)
                for (int v = 0; v < s.w; ++v) {
                    // Explicit hermitian completion of the dropped columns.
                    cd z;
                    if (v < f.re.w()) {
                        z = cd(f.re(0, c, u, v), f.im(0, c, u, v));
                    } else {
                        const int uu = (s.h - u) % s.h, vv = s.w - v;
                        z = std::conj(cd(f.re(0, c, uu, vv), f.im(0, c, uu, vv)));
                    }
                    ef += std::norm(z);
                }
        CHECK(std::abs(ef - ex) / ex < 1e-8);

        auto y = test::random_tensor<double>(s, rng);
        Tensor4<double> mix(s);
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.3 * x[i] - 1.7 * y[i];
        auto fm = spectral::rdft2(mix), fy = spectral::rdft2(y);
        for (std::size_t i = 0; i < fm.re.size(); ++i) {
            CHECK(std::abs(fm.re[i] - (0.3 * f.re[i] - 1.7 * fy.re[i])) < 1e-10);
            CHECK(std::abs(fm.im[i] - (0.3 * f.im[i] - 1.7 * fy.im[i])) < 1e-10);
        }

        auto Y = test::random_tensor<double>(Shape{s.n, 2 * s.c, s.h, s.w / 2 + 1}, rng);
        auto packed = spectral::pack_freq(f);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < Y.size(); ++i) lhs += packed[i] * Y[i];
        auto adj = spectral::rdft2_adjoint(spectral::unpack_freq(Y), s.w);
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * adj[i];
        CHECK(std::abs(lhs - rhs) < 1e-8 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("pack and unpack") {
    ComplexTensor4<double> f{Tensor4<double>::scalar(2.0), Tensor4<double>::scalar(3.0)};
    auto p = spectral::pack_freq(f);
    CHECK(p.shape() == Shape{1, 2, 1, 1});
    CHECK(p[0] == 2.0);
    CHECK(p[1] == 3.0);
    Tensor4<double> four(Shape{1, 4, 1, 1}, {1, 2, 3, 4});
    auto u = spectral::unpack_freq(four);
    CHECK(u.re[0] == 1.0);
    CHECK(u.re[1] == 2.0);
    CHECK(u.im[0] == 3.0);
    CHECK(u.im[1] == 4.0);
    auto rt = spectral::pack_freq(u);
    for (int i = 0; i < 4; ++i) CHECK(rt[i] == four[i]);
    CHECK_THROWS_AS(spectral::unpack_freq(Tensor4<double>(Shape{1, 3, 1, 1})), ShapeError);
    ComplexTensor4<double> real{Tensor4<double>(Shape{1, 2, 2, 2}, 1.0), Tensor4<double>(Shape{1, 2, 2, 2})};
    auto pr = spectral::pack_freq(real);
    for (int i = 8; i < 16; ++i) CHECK(pr[i] == 0.0);
}

TEST_CASE("spectral op gradients") {
    std::mt19937_64 rng(31);
    for (Shape s : {Shape{1, 2, 4, 4}, Shape{2, 1, 4, 6}, Shape{1, 1, 3, 5}}) {
        Parameter<double> p("x", test::random_tensor<double>(s, rng));
        const auto offset = test::random_tensor<double>(s, rng);
        Objective<double> f = [&](Tape<double>& t) {
            auto v = t.param(p);
            auto sp = ad::rdft2_packed(v);
            auto back = ad::irdft2_packed(ad::mul(sp, sp), s.w);
            return test::project(ad::add(back, sp.tape->constant(offset)), 77);
        };
        CHECK(finite_diff_check(f, {&p}).max_rel_error() < 1e-6);
        Objective<double> g = [&](Tape<double>& t) {
            return test::project(ad::irdft2_packed(ad::rdft2_packed(t.param(p)), s.w), 78);
        };
        CHECK(finite_diff_check(g, {&p}).max_rel_error() < 1e-6);
    }
}
