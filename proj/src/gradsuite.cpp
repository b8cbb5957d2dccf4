#include "fsl/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <type_traits>
#include <random>

#include "fsl/fslnet.hpp"
#include "fsl/geometry.hpp"
#include "fsl/losses.hpp"
#include "fsl/ops.hpp"

namespace fsl::check {

namespace {

namespace k = kernels;

template <typename T>
Tensor4<T> uniform(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor4<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

int pick(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

Shape random_shape(std::mt19937_64& rng, int min_hw = 3) {
    return {pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, min_hw, 6), pick(rng, min_hw, 7)};
}

template <typename T>
Var<T> project(Var<T> out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ad::sum(ad::mul(out, out.tape->constant(uniform<T>(out.shape(), rng))));
}

// One configuration: parameters to check plus a forward builder reading them from the tape.
template <typename T>
struct Trial {
    std::vector<Parameter<T>> params;
    std::vector<Parameter<T>*> extra;  // network weights read directly by `forward`
    std::vector<ad::BatchNormStats<T>*> stats;
    std::shared_ptr<void> keep;        // owner of the network behind `extra`
    std::function<Var<T>(Tape<T>&, std::vector<Var<T>>&)> forward;
};

template <typename T>
using Builder = std::function<Trial<T>(std::mt19937_64&)>;

template <typename T>
struct Entry {
    const char* group;
    const char* name;
    Builder<T> build;
};

template <typename T>
Trial<T> unary_trial(std::mt19937_64& rng, std::function<Var<T>(Var<T>)> f, double lo = -1.0, double hi = 1.0) {
    Trial<T> t;
    t.params.emplace_back("x", uniform<T>(random_shape(rng), rng, lo, hi));
    t.forward = [f](Tape<T>&, std::vector<Var<T>>& v) { return f(v[0]); };
    return t;
}

template <typename T>
Trial<T> binary_trial(std::mt19937_64& rng, std::function<Var<T>(Var<T>, Var<T>)> f, double lo_b = -1.0,
                      double hi_b = 1.0) {
    Trial<T> t;
    const Shape s = random_shape(rng);
    t.params.emplace_back("a", uniform<T>(s, rng));
    t.params.emplace_back("b", uniform<T>(s, rng, lo_b, hi_b));
    t.forward = [f](Tape<T>&, std::vector<Var<T>>& v) { return f(v[0], v[1]); };
    return t;
}

NetworkConfig tiny_net(HeadKind head, std::uint64_t seed) {
    NetworkConfig c = NetworkConfig::small(head);
    c.c_base = 4;
    c.num_stages = 2;
    c.cnn_layers = 2;
    c.bottleneck_dim = 8;
    c.num_classes = 3;
    c.seed = seed;
    return c;
}

// Running statistics from one training-mode pass keep eval-mode activations at unit scale.
template <typename T, typename Fwd>
void calibrate(nn::ParameterStore<T>& store, Fwd fwd) {
    for (auto& [name, s] : store.bn_stats()) s->momentum = 1.0;
    Tape<T> t;
    nn::Context<T> ctx{t, true};
    (void)fwd(ctx);
    for (auto& [name, s] : store.bn_stats()) s->momentum = 0.1;
}

template <typename T>
Trial<T> block_trial(std::mt19937_64& rng, int kind) {
    auto store = std::make_shared<nn::ParameterStore<T>>();
    const int in_c = pick(rng, 1, 3), out_c = pick(rng, 2, 4);
    const Shape s{2, in_c, pick(rng, 4, 6), pick(rng, 4, 7)};
    std::shared_ptr<void> block;
    std::function<Var<T>(nn::Context<T>&, Var<T>)> run;
    if (kind == 0) {
        auto b = std::make_shared<nn::LFLBlock<T>>(*store, "lfl", in_c, out_c, 2, nn::Activation::Silu, rng);
        run = [b](nn::Context<T>& c, Var<T> x) { return b->forward(c, x); };
        block = b;
    } else if (kind == 1) {
        auto b = std::make_shared<nn::CNNBlock<T>>(*store, "cnn", in_c, out_c, 2, 2, true, PadMode::Reflect,
                                                   nn::Activation::Silu, rng);
        run = [b](nn::Context<T>& c, Var<T> x) { return b->forward(c, x); };
        block = b;
    } else {
        nn::FSLBlockSpec spec;
        spec.in_c = in_c;
        spec.out_c = out_c;
        spec.cnn_layers = 2;
        auto b = std::make_shared<nn::FSLBlock<T>>(*store, "fsl", spec, rng);
        run = [b](nn::Context<T>& c, Var<T> x) { return b->forward(c, x).out; };
        block = b;
    }
    Trial<T> t;
    const auto x0 = uniform<T>(s, rng);
    calibrate(*store, [&](nn::Context<T>& c) { return run(c, c.tape.constant(x0)); });
    t.params.emplace_back("x", x0);
    t.extra = store->parameters();
    for (auto& [name, st] : store->bn_stats()) t.stats.push_back(st);
    t.keep = std::make_shared<std::pair<decltype(store), std::shared_ptr<void>>>(store, block);
    t.forward = [run](Tape<T>& tape, std::vector<Var<T>>& v) {
        nn::Context<T> ctx{tape, false};
        return run(ctx, v[0]);
    };
    return t;
}

template <typename T>
std::vector<Entry<T>> entries() {
    using V = Var<T>;
    std::vector<Entry<T>> e;
    auto add = [&](const char* g, const char* n, Builder<T> b) { e.push_back({g, n, std::move(b)}); };

    add("op", "add", [](auto& r) { return binary_trial<T>(r, [](V a, V b) { return ad::add(a, b); }); });
    add("op", "sub", [](auto& r) { return binary_trial<T>(r, [](V a, V b) { return ad::sub(a, b); }); });
    add("op", "mul", [](auto& r) { return binary_trial<T>(r, [](V a, V b) { return ad::mul(a, b); }); });
    add("op", "div", [](auto& r) { return binary_trial<T>(r, [](V a, V b) { return ad::div(a, b); }, 0.5, 2.0); });
    add("op", "affine", [](auto& r) {
        return unary_trial<T>(r, [](V x) { return ad::affine(x, T(-1.7), T(0.3)); });
    });
    add("op", "abs", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::abs(x); }); });
    add("op", "exp_neg", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::exp_neg(x); }); });
    add("op", "silu", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::silu(x); }, -3, 3); });
    add("op", "sigmoid", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::sigmoid(x); }, -3, 3); });
    add("op", "elu", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::unary(k::Unary::Elu, x); }); });
    add("op", "reciprocal", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::reciprocal(x); }, 0.5, 2); });
    add("op", "square", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::square(x); }); });
    add("op", "log", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::unary(k::Unary::Log, x); }, 0.5, 2); });
    add("op", "clamp", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::clamp(x, T(-0.5), T(0.5)); }); });
    add("op", "channel_linear", [](auto& r) {
        Trial<T> t;
        const Shape s = random_shape(r);
        t.params.emplace_back("x", uniform<T>(s, r));
        t.params.emplace_back("w", uniform<T>(Shape{pick(r, 1, 4), s.c, 1, 1}, r));
        t.forward = [](Tape<T>&, std::vector<V>& v) { return ad::channel_linear(v[0], v[1]); };
        return t;
    });
    add("op", "conv2d", [](auto& r) {
        Trial<T> t;
        const Shape s = random_shape(r);
        const int kk = pick(r, 0, 1) ? 3 : 1;
        const auto pad = static_cast<PadMode>(pick(r, 0, 2));
        t.params.emplace_back("x", uniform<T>(s, r));
        t.params.emplace_back("k", uniform<T>(Shape{pick(r, 1, 3), s.c, kk, kk}, r));
        t.forward = [pad](Tape<T>&, std::vector<V>& v) { return ad::conv2d(v[0], v[1], pad); };
        return t;
    });
    add("op", "maxpool3s2", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::maxpool3s2(x); }); });
    add("op", "upsample2x", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::upsample2x(x); }); });
    add("op", "bilinear_sample", [](auto& r) {
        Trial<T> t;
        const Shape s = random_shape(r);
        t.params.emplace_back("x", uniform<T>(s, r));
        // keep coordinates off integer lines, where the interpolation weights kink
        Tensor4<T> grid = uniform<T>(Shape{s.n, 2, pick(r, 2, 4), pick(r, 2, 4)}, r, 0.1, 0.9);
        for (int b = 0; b < s.n; ++b)
            for (int i = 0; i < grid.h() * grid.w(); ++i) {
                grid.plane(b, 0)[i] += static_cast<T>(pick(r, -1, s.w - 1));
                grid.plane(b, 1)[i] += static_cast<T>(pick(r, -1, s.h - 1));
            }
        t.params.emplace_back("grid", grid);
        t.forward = [](Tape<T>&, std::vector<V>& v) { return ad::bilinear_sample(v[0], v[1]); };
        return t;
    });
    add("op", "concat_slice_crop", [](auto& r) {
        Trial<T> t;
        const Shape s = random_shape(r);
        t.params.emplace_back("a", uniform<T>(s, r));
        t.params.emplace_back("b", uniform<T>(Shape{s.n, pick(r, 1, 3), s.h, s.w}, r));
        t.forward = [s](Tape<T>&, std::vector<V>& v) {
            V c = ad::concat_channels(v[0], ad::square(v[1]));
            return ad::crop(ad::slice_channels(c, 1, c.shape().c), 1, 1, s.h - 2, s.w - 1);
        };
        return t;
    });
    add("op", "sum_mean", [](auto& r) {
        const unsigned axes = static_cast<unsigned>(pick(r, 1, 15));
        return unary_trial<T>(r, [axes](V x) { return ad::add(ad::sum(x, axes), ad::mean(ad::square(x), axes)); });
    });
    add("op", "min_over_set", [](auto& r) {
        return binary_trial<T>(r, [](V a, V b) { return ad::min_over_set<T>({a, b, ad::affine(a, T(0.5), T(0.2))}); });
    });
    add("op", "box_filter3", [](auto& r) {
        const auto pad = static_cast<PadMode>(pick(r, 0, 2));
        return unary_trial<T>(r, [pad](V x) { return ad::box_filter3(x, pad); });
    });
    add("op", "rdft2_packed", [](auto& r) { return unary_trial<T>(r, [](V x) { return ad::rdft2_packed(x); }); });
    add("op", "irdft2_packed", [](auto& r) {
        Trial<T> t;
        const int w = pick(r, 3, 8);
        t.params.emplace_back("f", uniform<T>(Shape{pick(r, 1, 2), 2 * pick(r, 1, 2), pick(r, 3, 6), w / 2 + 1}, r));
        t.forward = [w](Tape<T>&, std::vector<V>& v) { return ad::irdft2_packed(v[0], w); };
        return t;
    });
    add("op", "batchnorm", [](auto& r) {
        Trial<T> t;
        const Shape s{2, pick(r, 1, 3), pick(r, 3, 5), pick(r, 3, 5)};
        t.params.emplace_back("x", uniform<T>(s, r));
        t.params.emplace_back("gamma", uniform<T>(Shape{1, s.c, 1, 1}, r, 0.5, 1.5));
        t.params.emplace_back("beta", uniform<T>(Shape{1, s.c, 1, 1}, r));
        const bool training = pick(r, 0, 1) == 1;
        auto stats = std::make_shared<ad::BatchNormStats<T>>();
        stats->running_mean = uniform<T>(Shape{1, s.c, 1, 1}, r, -0.2, 0.2);
        stats->running_var = uniform<T>(Shape{1, s.c, 1, 1}, r, 0.5, 1.5);
        t.forward = [stats, training](Tape<T>&, std::vector<V>& v) {
            ad::BatchNormStats<T> st = *stats;  // buffers stay fixed across evaluations
            return ad::batchnorm(v[0], v[1], v[2], st, training);
        };
        return t;
    });

    add("geometry", "pose_to_transform", [](auto& r) {
        Trial<T> t;
        Tensor4<T> p = uniform<T>(Shape{pick(r, 1, 3), 6, 1, 1}, r, -0.8, 0.8);
        if (pick(r, 0, 1)) p *= T(1e-3);  // small-angle series
        t.params.emplace_back("pose", p);
        t.forward = [](Tape<T>&, std::vector<V>& v) { return geom::pose_to_transform(v[0]); };
        return t;
    });
    add("geometry", "backproject", [](auto& r) {
        geom::CameraIntrinsics K{5.0, 6.0, 2.0, 1.5};
        Trial<T> t;
        t.params.emplace_back("depth", uniform<T>(Shape{pick(r, 1, 2), 1, pick(r, 3, 6), pick(r, 3, 6)}, r, 1.0, 3.0));
        t.forward = [K](Tape<T>&, std::vector<V>& v) { return geom::backproject(v[0], K); };
        return t;
    });
    add("geometry", "warp", [](auto& r) {
        Trial<T> t;
        const Shape s{pick(r, 1, 2), 1, pick(r, 4, 6), pick(r, 5, 7)};
        geom::CameraIntrinsics K{4.0, 4.0, 0.5 * (s.w - 1), 0.5 * (s.h - 1)};
        t.params.emplace_back("depth", uniform<T>(s, r, 2.0, 4.0));
        t.params.emplace_back("pose", uniform<T>(Shape{s.n, 6, 1, 1}, r, -0.05, 0.05));
        t.params.emplace_back("ref", uniform<T>(Shape{s.n, 3, s.h, s.w}, r, 0, 1));
        t.forward = [K](Tape<T>&, std::vector<V>& v) {
            V T_ = geom::pose_to_transform(v[1]);
            return ad::concat_channels(geom::warp(v[2], v[0], T_, K), ad::scale(geom::project_coords(v[0], T_, K), T(0.1)));
        };
        return t;
    });
    add("geometry", "surface_normals", [](auto& r) {
        Trial<T> t;
        t.params.emplace_back("p", uniform<T>(Shape{pick(r, 1, 2), 3, pick(r, 3, 5), pick(r, 3, 5)}, r));
        t.forward = [](Tape<T>&, std::vector<V>& v) { return geom::surface_normals(v[0]); };
        return t;
    });
    add("geometry", "sine_distance", [](auto& r) {
        Trial<T> t;
        const Shape s{pick(r, 1, 2), 3, pick(r, 2, 4), pick(r, 2, 4)};
        t.params.emplace_back("a", uniform<T>(s, r));
        t.params.emplace_back("b", uniform<T>(s, r));
        t.forward = [](Tape<T>&, std::vector<V>& v) { return geom::sine_distance(v[0], v[1]); };
        return t;
    });

    add("block", "LFLBlock", [](auto& r) { return block_trial<T>(r, 0); });
    add("block", "CNNBlock", [](auto& r) { return block_trial<T>(r, 1); });
    add("block", "FSLBlock", [](auto& r) { return block_trial<T>(r, 2); });

    for (auto head : {HeadKind::Depth, HeadKind::Segmentation, HeadKind::Pose}) {
        const char* name = head == HeadKind::Depth ? "depth head" : head == HeadKind::Pose ? "pose head" : "seg head";
        add("head", name, [head](auto& r) {
            auto net = std::make_shared<FSLNet<T>>(tiny_net(head, r()));
            const int cin = head == HeadKind::Pose ? 9 : 3;
            const auto x0 = uniform<T>(Shape{2, cin, 8, 8}, r);
            calibrate(net->store(), [&](nn::Context<T>& c) { return net->forward(c, c.tape.constant(x0)).out; });
            Trial<T> t;
            t.params.emplace_back("x", x0);
            for (auto* p : net->parameters())
                if (p->name.rfind("head.", 0) == 0) t.extra.push_back(p);
            for (auto& [name, st] : net->store().bn_stats()) t.stats.push_back(st);
            t.keep = net;
            t.forward = [net = net.get()](Tape<T>& tape, std::vector<V>& v) {
                nn::Context<T> ctx{tape, false};
                return net->forward(ctx, v[0]).out;
            };
            return t;
        });
    }

    add("loss", "ssim", [](auto& r) {
        Trial<T> t;
        const Shape s{pick(r, 1, 2), pick(r, 1, 3), pick(r, 3, 6), pick(r, 3, 6)};
        t.params.emplace_back("x", uniform<T>(s, r, 0, 1));
        t.params.emplace_back("y", uniform<T>(s, r, 0, 1));
        t.forward = [](Tape<T>&, std::vector<V>& v) { return loss::ssim_map(v[0], v[1]); };
        return t;
    });
    add("loss", "pairwise_photometric", [](auto& r) {
        Trial<T> t;
        const Shape s{pick(r, 1, 2), 3, pick(r, 3, 6), pick(r, 3, 6)};
        t.params.emplace_back("x", uniform<T>(s, r, 0, 1));
        t.params.emplace_back("y", uniform<T>(s, r, 0, 1));
        t.forward = [](Tape<T>&, std::vector<V>& v) { return loss::pairwise_photometric(v[0], v[1]); };
        return t;
    });
    add("loss", "reconstruction", [](auto& r) {
        Trial<T> t;
        const Shape s{pick(r, 1, 2), 3, pick(r, 3, 6), pick(r, 3, 6)};
        t.params.emplace_back("w0", uniform<T>(s, r, 0, 1));
        t.params.emplace_back("w1", uniform<T>(s, r, 0, 1));
        auto target = std::make_shared<Tensor4<T>>(uniform<T>(s, r, 0, 1));
        auto r0 = std::make_shared<Tensor4<T>>(uniform<T>(s, r, 0, 1));
        auto r1 = std::make_shared<Tensor4<T>>(uniform<T>(s, r, 0, 1));
        t.forward = [=](Tape<T>& tape, std::vector<V>& v) {
            return loss::reconstruction_loss(tape.constant(*target), {tape.constant(*r0), tape.constant(*r1)},
                                             {v[0], v[1]})
                .loss;
        };
        return t;
    });
    add("loss", "geometric_smoothness", [](auto& r) {
        Trial<T> t;
        const Shape s{pick(r, 1, 2), 1, pick(r, 3, 6), pick(r, 3, 6)};
        t.params.emplace_back("disp", uniform<T>(s, r, 0.2, 0.8));
        auto img = std::make_shared<Tensor4<T>>(uniform<T>(Shape{s.n, 3, s.h, s.w}, r, 0, 1));
        geom::CameraIntrinsics K{5.0, 5.0, 0.5 * (s.w - 1), 0.5 * (s.h - 1)};
        t.forward = [img, K](Tape<T>&, std::vector<V>& v) {
            return loss::geometric_smoothness(v[0], *img, K, 0.1, 100.0);
        };
        return t;
    });
    add("loss", "self_contrast", [](auto& r) {
        Trial<T> t;
        const Shape s{pick(r, 1, 2), 1, pick(r, 5, 8), pick(r, 5, 8)};
        const auto d0 = uniform<T>(s, r, 0, 1);
        t.params.emplace_back("disp", d0);
        auto targets = std::make_shared<loss::ContrastTargets<T>>(loss::contrast_targets(d0, 3));
        t.forward = [targets](Tape<T>&, std::vector<V>& v) { return loss::self_contrast(v[0], *targets); };
        return t;
    });
    add("loss", "cross_entropy", [](auto& r) {
        Trial<T> t;
        const Shape s{pick(r, 1, 2), pick(r, 2, 4), pick(r, 2, 5), pick(r, 2, 5)};
        t.params.emplace_back("logits", uniform<T>(s, r, -2, 2));
        auto labels = std::make_shared<Tensor4<T>>(Shape{s.n, 1, s.h, s.w});
        for (auto& l : labels->data()) l = static_cast<T>(pick(r, 0, 4) == 4 ? loss::kIgnoreLabel : pick(r, 0, s.c - 1));
        (*labels)[0] = 0;
        t.forward = [labels](Tape<T>&, std::vector<V>& v) { return loss::cross_entropy(v[0], *labels).loss; };
        return t;
    });
    return e;
}

}  // namespace

double suite_threshold(int bits) {
    return bits == 64 ? 1e-6 : 1e-4;
}

std::vector<std::string> suite_names() {
    std::vector<std::string> out;
    for (const auto& e : entries<double>()) out.emplace_back(e.name);
    return out;
}

namespace {

template <typename T>
struct Checked {
    Trial<T> trial;
    std::uint64_t proj_seed = 0;

    std::vector<Parameter<T>*> all() {
        std::vector<Parameter<T>*> ptrs;
        for (auto& p : trial.params) ptrs.push_back(&p);
        ptrs.insert(ptrs.end(), trial.extra.begin(), trial.extra.end());
        return ptrs;
    }
    Objective<T> objective() {
        return [this](Tape<T>& tape) {
            std::vector<Var<T>> vars;
            for (auto& p : trial.params) vars.push_back(tape.param(p));
            return project(trial.forward(tape, vars), proj_seed);
        };
    }
    std::vector<Tensor4<T>> gradients() {
        auto ptrs = all();
        for (auto* p : ptrs) p->zero_grad();
        Tape<T> tape;
        tape.backward(objective()(tape));
        std::vector<Tensor4<T>> g;
        for (auto* p : ptrs) g.push_back(p->grad);
        return g;
    }
};

template <typename T>
Checked<T> build(const Entry<T>& e, std::mt19937_64& rng) {
    Checked<T> c{e.build(rng)};
    c.proj_seed = rng();
    return c;
}

GradCheckReport fd_check(Checked<double>& c, const SuiteOptions& opts) {
    GradCheckOptions go;
    go.coords_per_param = opts.coords;
    go.seed = opts.seed;
    go.eps = 1e-4;
    go.order = 4;
    return finite_diff_check<double>(c.objective(), c.all(), go);
}

}  // namespace

// 64-bit: tape gradients against finite differences. 32-bit: the same configurations are
// built in both precisions, the double gradients pass the finite-difference check, and the
// float tape gradients are compared against them relative to each tensor's largest
// gradient, since float sums lose absolute rather than relative accuracy.
template <typename T>
std::vector<SuiteEntry> gradient_suite(const SuiteOptions& opts) {
    std::vector<SuiteEntry> out;
    std::mt19937_64 rng(opts.seed);
    const auto ref = entries<double>();
    const auto own = entries<T>();
    for (std::size_t k = 0; k < ref.size(); ++k) {
        SuiteEntry se{ref[k].group, ref[k].name};
        for (int c = 0; c < opts.configs; ++c) {
            std::mt19937_64 twin = rng;
            Checked<double> d = build(ref[k], rng);
            const GradCheckReport rep = fd_check(d, opts);
            se.max_rel_error = std::max(se.max_rel_error, rep.max_rel_error());
            se.checked += rep.checked();
            se.excluded += rep.excluded();
            if constexpr (std::is_same_v<T, float>) {
                Checked<float> f = build(own[k], twin);
                auto dp = d.all();
                auto fp = f.all();
                for (std::size_t i = 0; i < dp.size(); ++i)
                    for (std::size_t j = 0; j < dp[i]->value.size(); ++j)
                        fp[i]->value[j] = static_cast<float>(dp[i]->value[j]);
                for (std::size_t i = 0; i < d.trial.stats.size(); ++i)
                    for (std::size_t j = 0; j < d.trial.stats[i]->running_mean.size(); ++j) {
                        f.trial.stats[i]->running_mean[j] = static_cast<float>(d.trial.stats[i]->running_mean[j]);
                        f.trial.stats[i]->running_var[j] = static_cast<float>(d.trial.stats[i]->running_var[j]);
                    }
                const auto gd = d.gradients();
                const auto gf = f.gradients();
                for (std::size_t i = 0; i < gd.size(); ++i) {
                    double peak = 0.0;
                    for (std::size_t j = 0; j < gd[i].size(); ++j) peak = std::max(peak, std::abs(gd[i][j]));
                    for (std::size_t j = 0; j < gd[i].size(); ++j) {
                        const double a = gf[i][j], b = gd[i][j];
                        const double den = std::max({std::abs(a), std::abs(b), peak, 1e-12});
                        se.max_rel_error = std::max(se.max_rel_error, std::abs(a - b) / den);
                    }
                }
            }
            ++se.configs;
        }
        out.push_back(std::move(se));
    }
    return out;
}

template std::vector<SuiteEntry> gradient_suite<float>(const SuiteOptions&);
template std::vector<SuiteEntry> gradient_suite<double>(const SuiteOptions&);

}  // namespace fsl::check
