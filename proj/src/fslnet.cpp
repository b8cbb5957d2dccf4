#include "fsl/fslnet.hpp"

#include <stdexcept>

namespace fsl {

HeadKind parse_head(std::string_view s) {
    if (s == "depth") return HeadKind::Depth;
    if (s == "segmentation" || s == "seg") return HeadKind::Segmentation;
    if (s == "pose") return HeadKind::Pose;
    throw std::invalid_argument("unknown head '" + std::string(s) + "'");
}

std::string_view to_string(HeadKind h) {
    switch (h) {
        case HeadKind::Depth: return "depth";
        case HeadKind::Segmentation: return "segmentation";
        case HeadKind::Pose: return "pose";
    }
    return "?";
}

NetworkConfig NetworkConfig::small(HeadKind head) {
    NetworkConfig c;
    c.c_base = 16;
    c.head = head;
    c.in_channels = head == HeadKind::Pose ? 9 : 3;
    return c;
}

NetworkConfig NetworkConfig::large(HeadKind head) {
    NetworkConfig c = small(head);
    c.c_base = 32;
    return c;
}

double published_size_mb(char variant, HeadKind head) {
    const bool large = variant == 'L';
    if (head == HeadKind::Depth) return large ? 16.5 : 5.5;
    if (head == HeadKind::Pose) return large ? 11.9 : 3.9;
    return 0.0;
}

void NetworkConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("network config: " + m); };
    if (c_base < 1) fail("c_base must be >= 1");
    if (in_channels < 1) fail("in_channels must be >= 1");
    if (num_stages < 1 || num_stages > 8) fail("num_stages must be in [1, 8]");
    if (lfl_layers < 1 || cnn_layers < 1) fail("layer counts must be >= 1");
    if (bottleneck_dim < 1) fail("bottleneck_dim must be >= 1");
    if (head == HeadKind::Depth && c_base % 4 != 0) fail("depth head needs c_base divisible by 4");
    if (head == HeadKind::Segmentation && num_classes < 2) fail("num_classes must be >= 2");
    if (!(min_depth > 0.0 && max_depth > min_depth)) fail("need 0 < min_depth < max_depth");
    if (!(pose_scale > 0.0)) fail("pose_scale must be positive");
}

template <typename T>
FSLNet<T>::FSLNet(const NetworkConfig& cfg) : cfg_(cfg), store_(std::make_unique<nn::ParameterStore<T>>()) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    auto& st = *store_;
    const int c = cfg_.c_base, S = cfg_.num_stages;

    nn::FSLBlockSpec base;
    base.lfl_layers = cfg_.lfl_layers;
    base.cnn_layers = cfg_.cnn_layers;
    base.dim = cfg_.bottleneck_dim;
    base.bottleneck = cfg_.bottleneck;
    base.pad = cfg_.pad;
    base.act = cfg_.activation;
    base.topology = cfg_.topology;

    for (int k = 0; k < S; ++k) {
        nn::FSLBlockSpec s = base;
        s.in_c = k == 0 ? cfg_.in_channels : c << (k - 1);
        s.out_c = c << k;
        encoder_.emplace_back(st, "enc.stage" + std::to_string(k + 1), s, rng);
    }
    const int top = c << (S - 1);
    if (cfg_.head == HeadKind::Pose) {
        const int mid = std::max(1, top / 2), low = std::max(1, top / 4);
        head_.emplace_back(st, "head.layer0", nn::ConvSpec{top, mid, 3}, cfg_.pad, cfg_.activation, rng);
        head_.emplace_back(st, "head.layer1", nn::ConvSpec{mid, low, 3}, cfg_.pad, cfg_.activation, rng);
        head_.emplace_back(st, "head.layer2", nn::ConvSpec{low, 12, 3}, cfg_.pad, cfg_.activation, rng, true);
        return;
    }
    for (int j = 0; j < S; ++j) {
        nn::FSLBlockSpec s = base;
        const std::string name = "dec.stage" + std::to_string(S + j + 1);
        if (j < S - 1) {
            s.in_c = c << (S - 1 - j);
            s.out_c = c << (S - 2 - j);
            decoder_.emplace_back(st, name, s, rng);
            skip_.emplace_back(st, name + ".skip", nn::ConvSpec{2 * s.out_c, s.out_c, 3}, cfg_.pad, cfg_.activation,
                               rng);
        } else {
            s.in_c = c;
            s.out_c = c;
            decoder_.emplace_back(st, name, s, rng);
        }
    }
    if (cfg_.head == HeadKind::Depth) {
        head_.emplace_back(st, "head.layer0", nn::ConvSpec{c, c / 2, 3}, cfg_.pad, cfg_.activation, rng);
        head_.emplace_back(st, "head.layer1", nn::ConvSpec{c / 2, c / 4, 3}, cfg_.pad, cfg_.activation, rng);
        head_.emplace_back(st, "head.layer2", nn::ConvSpec{c / 4, 1, 3}, cfg_.pad, cfg_.activation, rng, true);
    } else {
        const int C = cfg_.num_classes;
        head_.emplace_back(st, "head.layer0", nn::ConvSpec{c, C, 3}, cfg_.pad, cfg_.activation, rng);
        head_.emplace_back(st, "head.layer1", nn::ConvSpec{C, C, 3}, cfg_.pad, cfg_.activation, rng);
        head_.emplace_back(st, "head.layer2", nn::ConvSpec{C, C, 3}, cfg_.pad, cfg_.activation, rng, true);
    }
}

template <typename T>
NetOutputs<T> FSLNet<T>::forward(nn::Context<T>& ctx, Var<T> x) const {
    const Shape& s = x.shape();
    const int S = cfg_.num_stages;
    const int div = 1 << (S - 1);
    if (s.c != cfg_.in_channels) {
        throw ShapeError("FSLNet: expected " + std::to_string(cfg_.in_channels) + " input channels, got " + s.str());
    }
    if (s.h % div != 0 || s.w % div != 0) {
        throw ShapeError("FSLNet: input " + s.str() + " must have h and w divisible by " + std::to_string(div));
    }
    NetOutputs<T> o;
    std::vector<Var<T>> skips;
    for (int k = 0; k < S; ++k) {
        if (k > 0) x = ad::maxpool3s2(x);
        auto so = encoder_[k].forward(ctx, x);
        x = so.out;
        skips.push_back(x);
        o.stages.push_back(so);
    }
    if (cfg_.head == HeadKind::Pose) {
        o.features = x;
        for (const auto& l : head_) x = l.forward(ctx, x);
        o.out = ad::scale(ad::mean(x, kernels::kAxisH | kernels::kAxisW), static_cast<T>(cfg_.pose_scale));
        return o;
    }
    for (int j = 0; j < S; ++j) {
        auto so = decoder_[j].forward(ctx, x);
        o.stages.push_back(so);
        x = so.out;
        if (j < S - 1) {
            x = ad::concat_channels(ad::upsample2x(x), skips[S - 2 - j]);
            x = skip_[j].forward(ctx, x);
        }
    }
    o.features = x;
    for (const auto& l : head_) x = l.forward(ctx, x);
    o.out = cfg_.head == HeadKind::Depth ? ad::sigmoid(x) : x;
    return o;
}

template <typename T>
std::vector<BlockCount> FSLNet<T>::breakdown() const {
    std::vector<BlockCount> out;
    int lfl_no = 0, cnn_no = 0;
    auto add = [&](const std::string& label, const std::string& prefix) {
        out.push_back({label, prefix, store_->count(prefix)});
    };
    auto block = [&](const nn::FSLBlock<T>& b, const std::string& name) {
        // Table-style numbering follows construction order within the block.
        const bool cnn_first = b.spec().topology == nn::Topology::CnnThenLfl;
        if (cnn_first && b.cnn) add("CNNBlock" + std::to_string(++cnn_no), name + ".cnn.");
        if (b.lfl) add("LFLBlock" + std::to_string(++lfl_no), name + ".lfl.");
        if (!cnn_first && b.cnn) add("CNNBlock" + std::to_string(++cnn_no), name + ".cnn.");
        if (b.fuse) add("CNNBlock" + std::to_string(++cnn_no), name + ".fuse.");
    };
    const int S = cfg_.num_stages;
    for (int k = 0; k < S; ++k) block(encoder_[k], "enc.stage" + std::to_string(k + 1));
    for (std::size_t j = 0; j < decoder_.size(); ++j) {
        const std::string name = "dec.stage" + std::to_string(S + static_cast<int>(j) + 1);
        block(decoder_[j], name);
        if (j < skip_.size()) add("CNNBlock" + std::to_string(++cnn_no), name + ".skip.");
    }
    add("Prediction", "head.");
    return out;
}

template <typename T>
Var<T> disparity_to_depth(Var<T> disparity, double min_depth, double max_depth) {
    const double lo = 1.0 / max_depth, hi = 1.0 / min_depth;
    return ad::reciprocal(ad::affine(disparity, static_cast<T>(hi - lo), static_cast<T>(lo)));
}

template class FSLNet<float>;
template class FSLNet<double>;
template Var<float> disparity_to_depth(Var<float>, double, double);
template Var<double> disparity_to_depth(Var<double>, double, double);

}  // namespace fsl
