#include "fsl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace fsl::nn {

Activation parse_activation(std::string_view s) {
    if (s == "silu") return Activation::Silu;
    if (s == "relu") return Activation::Relu;
    if (s == "elu") return Activation::Elu;
    throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Silu: return "silu";
        case Activation::Relu: return "relu";
        case Activation::Elu: return "elu";
    }
    return "?";
}

Topology parse_topology(std::string_view s) {
    if (s == "parallel") return Topology::Parallel;
    if (s == "cnn_only") return Topology::CnnOnly;
    if (s == "lfl_only") return Topology::LflOnly;
    if (s == "cnn_then_lfl") return Topology::CnnThenLfl;
    if (s == "lfl_then_cnn") return Topology::LflThenCnn;
    throw std::invalid_argument("unknown block topology '" + std::string(s) + "'");
}

std::string_view to_string(Topology t) {
    switch (t) {
        case Topology::Parallel: return "parallel";
        case Topology::CnnOnly: return "cnn_only";
        case Topology::LflOnly: return "lfl_only";
        case Topology::CnnThenLfl: return "cnn_then_lfl";
        case Topology::LflThenCnn: return "lfl_then_cnn";
    }
    return "?";
}

template <typename T>
Var<T> activate(Var<T> x, Activation a) {
    switch (a) {
        case Activation::Silu: return ad::unary(kernels::Unary::Silu, x);
        case Activation::Relu: return ad::unary(kernels::Unary::Relu, x);
        case Activation::Elu: return ad::unary(kernels::Unary::Elu, x);
    }
    return x;
}

// ---------------------------------------------------------------------------

template <typename T>
Parameter<T>& ParameterStore<T>::add(const std::string& name, Tensor4<T> value) {
    if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    params_.emplace_back(name, std::move(value));
    by_name_[name] = &params_.back();
    return params_.back();
}

template <typename T>
ad::BatchNormStats<T>& ParameterStore<T>::add_bn_stats(const std::string& name, int channels) {
    if (stats_by_name_.count(name)) throw std::invalid_argument("duplicate buffer name '" + name + "'");
    ad::BatchNormStats<T> s;
    s.running_mean = Tensor4<T>(Shape{1, channels, 1, 1}, T(0));
    s.running_var = Tensor4<T>(Shape{1, channels, 1, 1}, T(1));
    stats_.push_back(std::move(s));
    stats_by_name_[name] = &stats_.back();
    return stats_.back();
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

template <typename T>
ad::BatchNormStats<T>* ParameterStore<T>::find_bn_stats(const std::string& name) {
    auto it = stats_by_name_.find(name);
    return it == stats_by_name_.end() ? nullptr : it->second;
}

template <typename T>
std::vector<Parameter<T>*> ParameterStore<T>::parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, ad::BatchNormStats<T>*>> ParameterStore<T>::bn_stats() {
    return {stats_by_name_.begin(), stats_by_name_.end()};
}

template <typename T>
std::size_t ParameterStore<T>::count(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        if (p.name.compare(0, prefix.size(), prefix) == 0) n += p.value.size();
    }
    return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template <typename T>
Tensor4<T> fan_in_uniform(Shape s, int fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> d(-bound, bound);
    Tensor4<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

// ---------------------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(ParameterStore<T>& store, const std::string& name, int channels) : channels_(channels) {
    gamma = &store.add(name + ".gamma", Tensor4<T>(Shape{1, channels, 1, 1}, T(1)));
    beta = &store.add(name + ".beta", Tensor4<T>(Shape{1, channels, 1, 1}, T(0)));
    stats = &store.add_bn_stats(name, channels);
}

template <typename T>
Var<T> BatchNorm<T>::forward(Context<T>& ctx, Var<T> x) const {
    return ad::batchnorm(x, ctx.tape.param(*gamma), ctx.tape.param(*beta), *stats, ctx.training);
}

template <typename T>
ConvLayer<T>::ConvLayer(ParameterStore<T>& store, const std::string& name, ConvSpec spec, PadMode pad,
                        Activation act, std::mt19937_64& rng, bool plain)
    : spec_(spec), pad_(pad), act_(act), plain_(plain) {
    if (spec.k < 1 || spec.k % 2 == 0) throw std::invalid_argument("conv layer '" + name + "': kernel size must be odd");
    kernel = &store.add(name + ".weight", fan_in_uniform<T>(Shape{spec.out_c, spec.in_c, spec.k, spec.k},
                                                            spec.in_c * spec.k * spec.k, rng));
    if (!plain) bn = BatchNorm<T>(store, name + ".bn", spec.out_c);
}

template <typename T>
Var<T> ConvLayer<T>::forward(Context<T>& ctx, Var<T> x) const {
    Var<T> w = ctx.tape.param(*kernel);
    Var<T> y = spec_.k == 1 ? ad::channel_linear(x, w) : ad::conv2d(x, w, pad_);
    if (plain_) return y;
    return bn.forward(ctx, activate(y, act_));
}

// ---------------------------------------------------------------------------

template <typename T>
LFLBlock<T>::LFLBlock(ParameterStore<T>& store, const std::string& name, int in_c, int out_c, int layer_num,
                      Activation act, std::mt19937_64& rng)
    : in_c_(in_c), out_c_(out_c), act_(act) {
    if (layer_num < 1) throw std::invalid_argument("LFLBlock '" + name + "': layer_num must be >= 1");
    for (int i = 0; i < layer_num; ++i) {
        const int ci = i == 0 ? 2 * in_c : 2 * out_c;
        const std::string ln = name + ".layer" + std::to_string(i);
        weights.push_back(&store.add(ln + ".weight", fan_in_uniform<T>(Shape{2 * out_c, ci, 1, 1}, ci, rng)));
        norms.emplace_back(store, ln + ".bn", 2 * out_c);
    }
}

template <typename T>
Var<T> LFLBlock<T>::forward(Context<T>& ctx, Var<T> x) const {
    const int w = x.shape().w;
    Var<T> f = ad::rdft2_packed(x);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        f = ad::channel_linear(f, ctx.tape.param(*weights[i]));
        f = norms[i].forward(ctx, activate(f, act_));
    }
    return ad::irdft2_packed(f, w);
}

// ---------------------------------------------------------------------------

std::vector<ConvSpec> cnn_ladder(int in_c, int out_c, int layer_num, int dim, bool bottleneck) {
    if (layer_num < 1) throw std::invalid_argument("CNNBlock: layer_num must be >= 1");
    std::vector<ConvSpec> L;
    const bool in_big = in_c > dim, out_big = out_c > dim;
    if (!bottleneck || (!in_big && !out_big)) {
        for (int i = 0; i < layer_num; ++i) L.push_back({i == 0 ? in_c : out_c, out_c, 3});
        return L;
    }
    const int last = layer_num - 1;
    if (in_big && !out_big) {
        for (int i = 0; i < layer_num; ++i) {
            if (i == 0) {
                L.push_back({in_c, dim, 1});
                L.push_back({dim, out_c, 3});
            } else {
                L.push_back({out_c, out_c, 3});
            }
        }
        return L;
    }
    for (int i = 0; i < layer_num; ++i) {
        if (i == 0) {
            if (in_big) {
                L.push_back({in_c, dim, 1});
                L.push_back({dim, dim, 3});
            } else {
                L.push_back({in_c, dim, 3});
            }
            if (i == last) L.push_back({dim, out_c, 1});
        } else {
            L.push_back({dim, dim, 3});
            if (i == last) L.push_back({dim, out_c, 1});
        }
    }
    return L;
}

template <typename T>
CNNBlock<T>::CNNBlock(ParameterStore<T>& store, const std::string& name, int in_c, int out_c, int layer_num,
                      int dim, bool bottleneck, PadMode pad, Activation act, std::mt19937_64& rng) {
    const auto ladder = cnn_ladder(in_c, out_c, layer_num, dim, bottleneck);
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        layers_.emplace_back(store, name + ".layer" + std::to_string(i), ladder[i], pad, act, rng);
    }
}

template <typename T>
Var<T> CNNBlock<T>::forward(Context<T>& ctx, Var<T> x) const {
    for (const auto& l : layers_) x = l.forward(ctx, x);
    return x;
}

template <typename T>
int CNNBlock<T>::spatial_layers() const {
    int n = 0;
    for (const auto& l : layers_) n += l.spec().k == 3;
    return n;
}

// ---------------------------------------------------------------------------

template <typename T>
FSLBlock<T>::FSLBlock(ParameterStore<T>& store, const std::string& name, const FSLBlockSpec& spec,
                      std::mt19937_64& rng)
    : spec_(spec) {
    const auto make_lfl = [&](int in_c) {
        return std::make_unique<LFLBlock<T>>(store, name + ".lfl", in_c, spec.out_c, spec.lfl_layers, spec.act, rng);
    };
    const auto make_cnn = [&](int in_c) {
        return std::make_unique<CNNBlock<T>>(store, name + ".cnn", in_c, spec.out_c, spec.cnn_layers, spec.dim,
                                             spec.bottleneck, spec.pad, spec.act, rng);
    };
    switch (spec.topology) {
        case Topology::Parallel:
            lfl = make_lfl(spec.in_c);
            cnn = make_cnn(spec.in_c);
            fuse = std::make_unique<ConvLayer<T>>(store, name + ".fuse", ConvSpec{2 * spec.out_c, spec.out_c, 3},
                                                  spec.pad, spec.act, rng);
            break;
        case Topology::CnnOnly: cnn = make_cnn(spec.in_c); break;
        case Topology::LflOnly: lfl = make_lfl(spec.in_c); break;
        case Topology::CnnThenLfl:
            cnn = make_cnn(spec.in_c);
            lfl = make_lfl(spec.out_c);
            break;
        case Topology::LflThenCnn:
            lfl = make_lfl(spec.in_c);
            cnn = make_cnn(spec.out_c);
            break;
    }
}

template <typename T>
FSLOutputs<T> FSLBlock<T>::forward(Context<T>& ctx, Var<T> x) const {
    FSLOutputs<T> o;
    switch (spec_.topology) {
        case Topology::Parallel:
            o.lfl = lfl->forward(ctx, x);
            o.cnn = cnn->forward(ctx, x);
            o.out = fuse->forward(ctx, ad::concat_channels(o.lfl, o.cnn));
            break;
        case Topology::CnnOnly:
            o.cnn = cnn->forward(ctx, x);
            o.out = o.cnn;
            break;
        case Topology::LflOnly:
            o.lfl = lfl->forward(ctx, x);
            o.out = o.lfl;
            break;
        case Topology::CnnThenLfl:
            o.cnn = cnn->forward(ctx, x);
            o.lfl = lfl->forward(ctx, o.cnn);
            o.out = o.lfl;
            break;
        case Topology::LflThenCnn:
            o.lfl = lfl->forward(ctx, x);
            o.cnn = cnn->forward(ctx, o.lfl);
            o.out = o.cnn;
            break;
    }
    return o;
}

#define FSL_INSTANTIATE_NN(T)                                                             \
    template Var<T> activate(Var<T>, Activation);                                         \
    template class ParameterStore<T>;                                                     \
    template Tensor4<T> fan_in_uniform(Shape, int, std::mt19937_64&);                     \
    template class BatchNorm<T>;                                                          \
    template class ConvLayer<T>;                                                          \
    template class LFLBlock<T>;                                                           \
    template class CNNBlock<T>;                                                           \
    template class FSLBlock<T>;

FSL_INSTANTIATE_NN(float)
FSL_INSTANTIATE_NN(double)

}  // namespace fsl::nn
