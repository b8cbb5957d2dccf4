#include <cmath>
#include <random>

#include "doctest.h"
#include "fsl/fslnet.hpp"
#include "fsl/geometry.hpp"
#include "fsl/nn.hpp"
#include "fsl/spectral.hpp"
#include "helpers.hpp"

using namespace fsl;

namespace {

ad::BatchNormStats<double> unit_stats(int c) {
    ad::BatchNormStats<double> s;
    s.running_mean = Tensor4<double>(Shape{1, c, 1, 1}, 0.0);
    s.running_var = Tensor4<double>(Shape{1, c, 1, 1}, 1.0);
    return s;
}

// Gradient of one output coordinate with respect to the input.
template <typename Fwd>
Tensor4<double> one_hot_input_grad(Fwd fwd, const Tensor4<double>& x, int c, int y, int xx) {
    Tape<double> t;
    Var<double> in = t.leaf(x);
    Var<double> out = fwd(t, in);
    Tensor4<double> seed(out.shape());
    seed(0, c, y, xx) = 1.0;
    t.backward(out, seed);
    return *t.grad(in);
}

double nonzero_fraction(const Tensor4<double>& g) {
    std::size_t nz = 0;
    for (double v : g.data()) nz += v != 0.0;
    return static_cast<double>(nz) / static_cast<double>(g.size());
}

// Random BN affine and running statistics so eval-mode checks exercise every term.
void randomize_bn(nn::ParameterStore<double>& st, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(0.5, 1.5), m(-0.3, 0.3);
    for (auto* p : st.parameters()) {
        if (p->name.ends_with(".gamma"))
            for (auto& v : p->value.data()) v = d(rng);
        if (p->name.ends_with(".beta"))
            for (auto& v : p->value.data()) v = m(rng);
    }
    for (auto& [name, s] : st.bn_stats()) {
        for (auto& v : s->running_mean.data()) v = m(rng);
        for (auto& v : s->running_var.data()) v = d(rng);
    }
}

double store_gradcheck(nn::ParameterStore<double>& st, const std::function<Var<double>(Tape<double>&)>& f,
                       Parameter<double>* input = nullptr) {
    auto params = st.parameters();
    if (input) params.push_back(input);
    GradCheckOptions o;
    o.coords_per_param = 20;
    o.order = 4;
    o.eps = 1e-4;
    return finite_diff_check<double>(f, params, o).max_rel_error();
}

}  // namespace

TEST_CASE("batch norm") {
    std::mt19937_64 rng(1);
    const int c = 3;
    auto x0 = test::random_tensor<double>(Shape{2, c, 5, 6}, rng, -10.0, 10.0);
    Tape<double> t;
    auto gamma = t.constant(Tensor4<double>(Shape{1, c, 1, 1}, 1.0));
    auto beta = t.constant(Tensor4<double>(Shape{1, c, 1, 1}, 0.0));

    SUBCASE("train mode normalises each channel") {
        auto st = unit_stats(c);
        const auto& y = ad::batchnorm(t.constant(x0), gamma, beta, st, true).value();
        for (int ch = 0; ch < c; ++ch) {
            double m = 0, v = 0;
            for (int b = 0; b < 2; ++b)
                for (int i = 0; i < 30; ++i) m += y.plane(b, ch)[i] / 60;
            for (int b = 0; b < 2; ++b)
                for (int i = 0; i < 30; ++i) v += (y.plane(b, ch)[i] - m) * (y.plane(b, ch)[i] - m) / 60;
            CHECK(std::abs(m) < 1e-6);
            CHECK(std::abs(v - 1.0) < 1e-6);
        }
        // running buffers: momentum 0.1 towards the batch mean and unbiased variance
        double bm = 0, bv = 0;
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 30; ++i) bm += x0.plane(b, 0)[i] / 60;
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 30; ++i) bv += (x0.plane(b, 0)[i] - bm) * (x0.plane(b, 0)[i] - bm) / 59;
        CHECK(st.running_mean[0] == doctest::Approx(0.1 * bm).epsilon(1e-12));
        CHECK(st.running_var[0] == doctest::Approx(0.9 + 0.1 * bv).epsilon(1e-12));
    }
    SUBCASE("eval with unit statistics is the identity up to eps") {
        auto st = unit_stats(c);
        const auto& y = ad::batchnorm(t.constant(x0), gamma, beta, st, false).value();
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(x0[i] / std::sqrt(1 + 1e-5)));
        CHECK(st.running_mean[0] == 0.0);
    }
    SUBCASE("constant channel gives zeros") {
        auto st = unit_stats(c);
        const auto& y = ad::batchnorm(t.constant(Tensor4<double>(x0.shape(), 4.2)), gamma, beta, st, true).value();
        for (double v : y.data()) CHECK(std::abs(v) < 1e-9);
        CHECK(st.running_var[0] >= 0.0);
    }
}

TEST_CASE("conv layer") {
    std::mt19937_64 rng(2);
    nn::ParameterStore<double> st;
    nn::ConvLayer<double> layer(st, "l", {3, 5, 3}, PadMode::Reflect, nn::Activation::Silu, rng);
    auto x0 = test::random_tensor<double>(Shape{2, 3, 6, 7}, rng);

    SUBCASE("zero kernel gives beta") {
        layer.kernel->value.fill(0.0);
        layer.bn.beta->value.fill(0.7);
        Tape<double> t;
        nn::Context<double> ctx{t, false};
        for (double v : layer.forward(ctx, t.constant(x0)).value().data()) CHECK(v == doctest::Approx(0.7));
    }
    SUBCASE("identity 1x1 kernel gives silu") {
        nn::ParameterStore<double> s2;
        nn::ConvLayer<double> id(s2, "id", {3, 3, 1}, PadMode::Reflect, nn::Activation::Silu, rng);
        id.kernel->value.fill(0.0);
        for (int i = 0; i < 3; ++i) id.kernel->value(i, i, 0, 0) = 1.0;
        Tape<double> t;
        nn::Context<double> ctx{t, false};
        const auto& y = id.forward(ctx, t.constant(x0)).value();
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double s = x0[i] / (1 + std::exp(-x0[i]));
            CHECK(y[i] == doctest::Approx(s / std::sqrt(1 + 1e-5)).epsilon(1e-12));
        }
    }
    SUBCASE("gradcheck") {
        randomize_bn(st, rng);
        Parameter<double> in("x", x0);
        auto f = [&](Tape<double>& t) {
            nn::Context<double> ctx{t, false};
            return test::project(layer.forward(ctx, t.param(in)), 9);
        };
        CHECK(store_gradcheck(st, f, &in) < 1e-6);
    }
    SUBCASE("parameter count of a 3->16 3x3 layer") {
        nn::ParameterStore<double> s3;
        nn::ConvLayer<double> l(s3, "c", {3, 16, 3}, PadMode::Reflect, nn::Activation::Silu, rng);
        CHECK(s3.count() == 464u);
    }
    SUBCASE("even kernel rejected") {
        CHECK_THROWS_AS(nn::ConvLayer<double>(st, "bad", {3, 3, 2}, PadMode::Reflect, nn::Activation::Silu, rng),
                        std::invalid_argument);
    }
}

TEST_CASE("LFL block") {
    std::mt19937_64 rng(3);

    SUBCASE("single identity layer matches the spectral round trip of silu") {
        nn::ParameterStore<double> st;
        nn::LFLBlock<double> b(st, "lfl", 2, 2, 1, nn::Activation::Silu, rng);
        b.weights[0]->value.fill(0.0);
        for (int i = 0; i < 4; ++i) b.weights[0]->value(i, i, 0, 0) = 1.0;
        auto x0 = test::random_tensor<double>(Shape{1, 2, 8, 10}, rng);
        Tape<double> t;
        nn::Context<double> ctx{t, false};
        const auto& y = b.forward(ctx, t.constant(x0)).value();

        auto spec = spectral::rdft2(x0);
        const double k = 1.0 / std::sqrt(1 + 1e-5);
        auto silu = [&](double v) { return k * v / (1 + std::exp(-v)); };
        for (auto& v : spec.re.data()) v = silu(v);
        for (auto& v : spec.im.data()) v = silu(v);
        const auto ref = spectral::irdft2(spec, 10);
        CHECK(test::max_abs_diff(y, ref) < 1e-12);
    }
    SUBCASE("layer widths") {
        nn::ParameterStore<double> st;
        nn::LFLBlock<double> b(st, "lfl", 3, 5, 3, nn::Activation::Silu, rng);
        REQUIRE(b.layer_num() == 3);
        CHECK(b.weights[0]->value.shape() == Shape{10, 6, 1, 1});
        CHECK(b.weights[1]->value.shape() == Shape{10, 10, 1, 1});
        CHECK(b.weights[2]->value.shape() == Shape{10, 10, 1, 1});
        CHECK(b.norms[2].channels() == 10);
    }
    SUBCASE("output gradient support is dense") {
        nn::ParameterStore<double> st;
        nn::LFLBlock<double> b(st, "lfl", 3, 4, 2, nn::Activation::Silu, rng);
        randomize_bn(st, rng);
        auto x0 = test::random_tensor<double>(Shape{1, 3, 16, 20}, rng);
        auto fwd = [&](Tape<double>& t, Var<double> x) {
            nn::Context<double> ctx{t, false};
            return b.forward(ctx, x);
        };
        for (auto [y, x] : {std::pair{0, 0}, std::pair{7, 11}, std::pair{15, 19}}) {
            CHECK(nonzero_fraction(one_hot_input_grad(fwd, x0, 1, y, x)) >= 0.99);
        }
    }
    SUBCASE("gradcheck") {
        nn::ParameterStore<double> st;
        nn::LFLBlock<double> b(st, "lfl", 3, 4, 2, nn::Activation::Silu, rng);
        randomize_bn(st, rng);
        Parameter<double> in("x", test::random_tensor<double>(Shape{2, 3, 6, 8}, rng));
        auto f = [&](Tape<double>& t) {
            nn::Context<double> ctx{t, false};
            return test::project(b.forward(ctx, t.param(in)), 5);
        };
        CHECK(store_gradcheck(st, f, &in) < 1e-6);
    }
}

TEST_CASE("CNN ladder") {
    using S = nn::ConvSpec;
    SUBCASE("no bottleneck, one layer") {
        CHECK(nn::cnn_ladder(16, 32, 1, 64, false) == std::vector<S>{{16, 32, 3}});
        CHECK(nn::cnn_ladder(256, 128, 1, 64, false) == std::vector<S>{{256, 128, 3}});
    }
    SUBCASE("both narrow") {
        CHECK(nn::cnn_ladder(16, 32, 3, 64, true) == std::vector<S>{{16, 32, 3}, {32, 32, 3}, {32, 32, 3}});
    }
    SUBCASE("wide input, narrow output squeezes first") {
        CHECK(nn::cnn_ladder(256, 16, 2, 64, true) == std::vector<S>{{256, 64, 1}, {64, 16, 3}, {16, 16, 3}});
    }
    SUBCASE("narrow input, wide output expands last") {
        CHECK(nn::cnn_ladder(32, 128, 2, 64, true) == std::vector<S>{{32, 64, 3}, {64, 64, 3}, {64, 128, 1}});
    }
    SUBCASE("both wide") {
        CHECK(nn::cnn_ladder(128, 256, 3, 64, true) ==
              std::vector<S>{{128, 64, 1}, {64, 64, 3}, {64, 64, 3}, {64, 64, 3}, {64, 256, 1}});
        CHECK(nn::cnn_ladder(128, 256, 1, 64, true) == std::vector<S>{{128, 64, 1}, {64, 64, 3}, {64, 256, 1}});
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(nn::cnn_ladder(4, 4, 0, 64, true), std::invalid_argument);
    }
}

TEST_CASE("CNN block") {
    std::mt19937_64 rng(4);
    SUBCASE("gradient support is bounded by the receptive field") {
        for (int L : {1, 2, 4}) {
            nn::ParameterStore<double> st;
            nn::CNNBlock<double> b(st, "cnn", 3, 4, L, 64, true, PadMode::Reflect, nn::Activation::Silu, rng);
            REQUIRE(b.spatial_layers() == L);
            randomize_bn(st, rng);
            auto x0 = test::random_tensor<double>(Shape{1, 3, 24, 24}, rng);
            auto fwd = [&](Tape<double>& t, Var<double> x) {
                nn::Context<double> ctx{t, false};
                return b.forward(ctx, x);
            };
            const auto g = one_hot_input_grad(fwd, x0, 2, 12, 11);
            int inside = 0, outside = 0, rim = 0;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < 24; ++y)
                    for (int x = 0; x < 24; ++x) {
                        const bool in = std::abs(y - 12) <= L && std::abs(x - 11) <= L;
                        const bool nz = g(0, c, y, x) != 0.0;
                        (in ? inside : outside) += nz;
                        if (nz && (std::abs(y - 12) == L || std::abs(x - 11) == L)) ++rim;
                    }
            CHECK(outside == 0);
            CHECK(inside > 0);
            CHECK(rim > 0);
        }
    }
    SUBCASE("gradcheck") {
        nn::ParameterStore<double> st;
        nn::CNNBlock<double> b(st, "cnn", 3, 80, 2, 8, true, PadMode::Reflect, nn::Activation::Silu, rng);
        randomize_bn(st, rng);
        Parameter<double> in("x", test::random_tensor<double>(Shape{2, 3, 5, 6}, rng));
        auto f = [&](Tape<double>& t) {
            nn::Context<double> ctx{t, false};
            return test::project(b.forward(ctx, t.param(in)), 6);
        };
        CHECK(store_gradcheck(st, f, &in) < 1e-6);
    }
}

TEST_CASE("FSL block") {
    std::mt19937_64 rng(5);
    nn::FSLBlockSpec spec;
    spec.in_c = 3;
    spec.out_c = 4;

    SUBCASE("zero fuse kernel gives zero output") {
        nn::ParameterStore<double> st;
        nn::FSLBlock<double> b(st, "b", spec, rng);
        b.fuse->kernel->value.fill(0.0);
        Tape<double> t;
        nn::Context<double> ctx{t, false};
        auto o = b.forward(ctx, t.constant(test::random_tensor<double>(Shape{2, 3, 8, 8}, rng)));
        for (double v : o.out.value().data()) CHECK(v == 0.0);
        CHECK(o.out.shape() == Shape{2, 4, 8, 8});
    }
    SUBCASE("topologies") {
        for (auto topo : {nn::Topology::Parallel, nn::Topology::CnnOnly, nn::Topology::LflOnly,
                          nn::Topology::CnnThenLfl, nn::Topology::LflThenCnn}) {
            nn::FSLBlockSpec s = spec;
            s.topology = topo;
            nn::ParameterStore<double> st;
            nn::FSLBlock<double> b(st, "b", s, rng);
            Tape<double> t;
            nn::Context<double> ctx{t, true};
            auto o = b.forward(ctx, t.constant(test::random_tensor<double>(Shape{1, 3, 8, 6}, rng)));
            CHECK(o.out.shape() == Shape{1, 4, 8, 6});
            CHECK((o.lfl.id >= 0) == (topo != nn::Topology::CnnOnly));
            CHECK((o.cnn.id >= 0) == (topo != nn::Topology::LflOnly));
            CHECK((b.fuse != nullptr) == (topo == nn::Topology::Parallel));
        }
    }
    SUBCASE("per-stage layer counts of both variants") {
        nn::ParameterStore<double> st;
        nn::FSLBlock<double> b(st, "b", spec, rng);
        CHECK(b.lfl->layer_num() == 2);
        CHECK(b.cnn->spatial_layers() == 4);
        CHECK(b.fuse->spec() == nn::ConvSpec{8, 4, 3});
    }
    SUBCASE("gradient support is dense") {
        nn::ParameterStore<double> st;
        nn::FSLBlock<double> b(st, "b", spec, rng);
        randomize_bn(st, rng);
        auto fwd = [&](Tape<double>& t, Var<double> x) {
            nn::Context<double> ctx{t, false};
            return b.forward(ctx, x).out;
        };
        CHECK(nonzero_fraction(one_hot_input_grad(fwd, test::random_tensor<double>(Shape{1, 3, 16, 16}, rng), 0, 3,
                                                  9)) >= 0.99);
    }
    SUBCASE("gradcheck") {
        nn::ParameterStore<double> st;
        nn::FSLBlock<double> b(st, "b", spec, rng);
        randomize_bn(st, rng);
        Parameter<double> in("x", test::random_tensor<double>(Shape{1, 3, 6, 6}, rng));
        auto f = [&](Tape<double>& t) {
            nn::Context<double> ctx{t, false};
            return test::project(b.forward(ctx, t.param(in)).out, 7);
        };
        CHECK(store_gradcheck(st, f, &in) < 1e-6);
    }
}

TEST_CASE("FSLNet structure and counts") {
    SUBCASE("published sizes") {
        struct Row {
            NetworkConfig cfg;
            double mb;
        };
        for (const auto& r : {Row{NetworkConfig::small(HeadKind::Depth), 5.5}, Row{NetworkConfig::large(HeadKind::Depth), 16.5},
                              Row{NetworkConfig::small(HeadKind::Pose), 3.9}, Row{NetworkConfig::large(HeadKind::Pose), 11.9}}) {
            FSLNet<float> net(r.cfg);
            const double mb = static_cast<double>(net.size_bytes()) / 1e6;
            CHECK(std::abs(mb - r.mb) <= 0.1 * r.mb);
            std::size_t sum = 0;
            for (const auto& b : net.breakdown()) sum += b.params;
            CHECK(sum == net.count_parameters());
        }
    }
    SUBCASE("channel ladder") {
        FSLNet<float> net(NetworkConfig::small(HeadKind::Depth));
        REQUIRE(net.encoder().size() == 4);
        REQUIRE(net.decoder().size() == 4);
        for (int k = 0; k < 4; ++k) {
            CHECK(net.encoder()[k].spec().out_c == 16 << k);
            CHECK(net.encoder()[k].spec().in_c == (k == 0 ? 3 : 16 << (k - 1)));
        }
        const int dec_in[4] = {128, 64, 32, 16}, dec_out[4] = {64, 32, 16, 16};
        for (int j = 0; j < 4; ++j) {
            CHECK(net.decoder()[j].spec().in_c == dec_in[j]);
            CHECK(net.decoder()[j].spec().out_c == dec_out[j]);
        }
        REQUIRE(net.skip_fusions().size() == 3);
        CHECK(net.skip_fusions()[0].spec() == nn::ConvSpec{128, 64, 3});
        CHECK(net.skip_fusions()[2].spec() == nn::ConvSpec{32, 16, 3});
        CHECK(net.head_layers()[0].spec() == nn::ConvSpec{16, 8, 3});
        CHECK(net.head_layers()[2].spec() == nn::ConvSpec{4, 1, 3});
        FSLNet<float> pose(NetworkConfig::small(HeadKind::Pose));
        CHECK(pose.decoder().empty());
        CHECK(pose.head_layers()[0].spec() == nn::ConvSpec{128, 64, 3});
        CHECK(pose.head_layers()[2].spec() == nn::ConvSpec{32, 12, 3});
    }
    SUBCASE("config validation") {
        NetworkConfig c = NetworkConfig::small(HeadKind::Depth);
        c.c_base = 6;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        c = NetworkConfig::small(HeadKind::Depth);
        c.min_depth = 0;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    }
}

namespace {

// Running statistics taken from one training-mode pass, so eval-mode activations stay at unit scale.
void calibrate_bn(FSLNet<double>& net, const Tensor4<double>& x) {
    for (auto& [name, s] : net.store().bn_stats()) s->momentum = 1.0;
    Tape<double> t;
    nn::Context<double> ctx{t, true};
    (void)net.forward(ctx, t.constant(x));
    for (auto& [name, s] : net.store().bn_stats()) s->momentum = 0.1;
}

NetworkConfig tiny(HeadKind head) {
    NetworkConfig c = NetworkConfig::small(head);
    c.c_base = 4;
    c.num_stages = 2;
    c.cnn_layers = 2;
    c.bottleneck_dim = 8;
    c.num_classes = 3;
    c.seed = 11;
    return c;
}

}  // namespace

TEST_CASE("FSLNet forward") {
    std::mt19937_64 rng(6);
    SUBCASE("depth output shape and range") {
        FSLNet<float> net(NetworkConfig::small(HeadKind::Depth));
        Tape<float> t;
        nn::Context<float> ctx{t, true};
        auto o = net.forward(ctx, t.constant(test::random_tensor<float>(Shape{2, 3, 32, 64}, rng, 0, 1)));
        CHECK(o.out.shape() == Shape{2, 1, 32, 64});
        CHECK(o.out.value().all_finite());
        for (float v : o.out.value().data()) CHECK((v > 0.0f && v < 1.0f));
        CHECK(o.stages.size() == 8);
        CHECK(o.features.shape() == Shape{2, 16, 32, 64});
    }
    SUBCASE("indivisible input rejected") {
        FSLNet<double> net(tiny(HeadKind::Depth));
        Tape<double> t;
        nn::Context<double> ctx{t, false};
        CHECK_THROWS_AS(net.forward(ctx, t.constant(Tensor4<double>(Shape{1, 3, 8, 9}))), ShapeError);
        CHECK_THROWS_AS(net.forward(ctx, t.constant(Tensor4<double>(Shape{1, 4, 8, 8}))), ShapeError);
    }
    SUBCASE("half disparity maps to constant depth") {
        Tape<double> t;
        const auto& d = disparity_to_depth(t.constant(Tensor4<double>(Shape{1, 1, 2, 2}, 0.5)), 0.1, 100.0).value();
        for (double v : d.data()) CHECK(v == doctest::Approx(1.0 / (0.01 + 0.5 * (10.0 - 0.01))));
        const auto& lo = disparity_to_depth(t.constant(Tensor4<double>::scalar(1.0)), 0.1, 100.0).value();
        CHECK(lo.item() == doctest::Approx(0.1));
    }
    SUBCASE("segmentation logits") {
        FSLNet<double> net(tiny(HeadKind::Segmentation));
        Tape<double> t;
        nn::Context<double> ctx{t, false};
        const auto& y = net.forward(ctx, t.constant(test::random_tensor<double>(Shape{2, 3, 8, 8}, rng))).out.value();
        CHECK(y.shape() == Shape{2, 3, 8, 8});
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 64; ++i) {
                double mx = -1e300, s = 0;
                for (int c = 0; c < 3; ++c) mx = std::max(mx, y.plane(b, c)[i]);
                for (int c = 0; c < 3; ++c) s += std::exp(y.plane(b, c)[i] - mx);
                double p = 0;
                for (int c = 0; c < 3; ++c) p += std::exp(y.plane(b, c)[i] - mx) / s;
                CHECK(p == doctest::Approx(1.0));
            }
    }
    SUBCASE("zero pose head gives identity motion") {
        FSLNet<double> net(tiny(HeadKind::Pose));
        net.head_layers()[2].kernel->value.fill(0.0);
        Tape<double> t;
        nn::Context<double> ctx{t, false};
        auto p = net.forward(ctx, t.constant(test::random_tensor<double>(Shape{1, 9, 8, 8}, rng))).out;
        REQUIRE(p.shape() == Shape{1, 12, 1, 1});
        for (int i = 0; i < 2; ++i) {
            const auto& T = geom::pose_to_transform(ad::slice_channels(p, 6 * i, 6 * i + 6)).value();
            const double expect[12] = {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
            for (int k = 0; k < 12; ++k) CHECK(T[k] == expect[k]);
        }
    }
    SUBCASE("backbone gradient support is global") {
        FSLNet<double> net(tiny(HeadKind::Depth));
        randomize_bn(net.store(), rng);
        auto fwd = [&](Tape<double>& t, Var<double> x) {
            nn::Context<double> ctx{t, false};
            return net.forward(ctx, x).features;
        };
        CHECK(nonzero_fraction(one_hot_input_grad(fwd, test::random_tensor<double>(Shape{1, 3, 16, 16}, rng), 1, 4,
                                                  4)) >= 0.99);
    }
}

TEST_CASE("FSLNet gradients") {
    std::mt19937_64 rng(7);
    for (auto head : {HeadKind::Depth, HeadKind::Segmentation, HeadKind::Pose}) {
        CAPTURE(to_string(head));
        FSLNet<double> net(tiny(head));
        const int cin = head == HeadKind::Pose ? 9 : 3;
        Parameter<double> in("x", test::random_tensor<double>(Shape{2, cin, 8, 8}, rng));
        calibrate_bn(net, in.value);
        auto f = [&](Tape<double>& t) {
            nn::Context<double> ctx{t, false};
            return test::project(net.forward(ctx, t.param(in)).out, 8);
        };
        auto params = net.parameters();
        std::vector<Parameter<double>*> head_params;
        for (auto* p : params)
            if (p->name.starts_with("head.")) head_params.push_back(p);
        head_params.push_back(&in);
        GradCheckOptions o;
        o.coords_per_param = 10;
        o.order = 4;
        o.eps = 1e-4;
        CHECK(finite_diff_check<double>(f, head_params, o).max_rel_error() < 1e-6);
    }
}
