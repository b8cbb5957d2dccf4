#pragma once

// Building blocks: batch norm, conv-activation-norm layers, the frequency
// branch (LFLBlock), the bottlenecked convolution ladder (CNNBlock) and their
// fusion (FSLBlock).

#include <deque>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fsl/autodiff.hpp"
#include "fsl/kernels.hpp"
#include "fsl/ops.hpp"

namespace fsl::nn {

enum class Activation { Silu, Relu, Elu };
Activation parse_activation(std::string_view s);
std::string_view to_string(Activation a);

/// How the two branches of an FSLBlock are combined.
enum class Topology { Parallel, CnnOnly, LflOnly, CnnThenLfl, LflThenCnn };
Topology parse_topology(std::string_view s);
std::string_view to_string(Topology t);

template <typename T>
Var<T> activate(Var<T> x, Activation a);

/// Owns every Parameter and batch-norm buffer of a network, addressable by name.
template <typename T>
class ParameterStore {
public:
    Parameter<T>& add(const std::string& name, Tensor4<T> value);
    ad::BatchNormStats<T>& add_bn_stats(const std::string& name, int channels);

    [[nodiscard]] Parameter<T>* find(const std::string& name);
    [[nodiscard]] ad::BatchNormStats<T>* find_bn_stats(const std::string& name);

    [[nodiscard]] std::vector<Parameter<T>*> parameters();
    [[nodiscard]] std::vector<std::pair<std::string, ad::BatchNormStats<T>*>> bn_stats();
    /// Trainable scalar count, optionally restricted to names starting with `prefix`.
    [[nodiscard]] std::size_t count(const std::string& prefix = "") const;
    void zero_grad();

private:
    std::deque<Parameter<T>> params_;
    std::deque<ad::BatchNormStats<T>> stats_;
    std::map<std::string, Parameter<T>*> by_name_;
    std::map<std::string, ad::BatchNormStats<T>*> stats_by_name_;
};

/// Per-forward settings shared by all layers.
template <typename T>
struct Context {
    Tape<T>& tape;
    bool training = false;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
template <typename T>
Tensor4<T> fan_in_uniform(Shape s, int fan_in, std::mt19937_64& rng);

template <typename T>
class BatchNorm {
public:
    BatchNorm() = default;
    BatchNorm(ParameterStore<T>& store, const std::string& name, int channels);

    Var<T> forward(Context<T>& ctx, Var<T> x) const;
    [[nodiscard]] int channels() const { return channels_; }

    Parameter<T>* gamma = nullptr;
    Parameter<T>* beta = nullptr;
    ad::BatchNormStats<T>* stats = nullptr;

private:
    int channels_ = 0;
};

struct ConvSpec {
    int in_c = 0;
    int out_c = 0;
    int k = 3;
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// conv (bias-free) -> activation -> batch norm. `plain` drops activation and norm.
template <typename T>
class ConvLayer {
public:
    ConvLayer() = default;
    ConvLayer(ParameterStore<T>& store, const std::string& name, ConvSpec spec, PadMode pad, Activation act,
              std::mt19937_64& rng, bool plain = false);

    Var<T> forward(Context<T>& ctx, Var<T> x) const;
    [[nodiscard]] const ConvSpec& spec() const { return spec_; }

    Parameter<T>* kernel = nullptr;
    BatchNorm<T> bn;

private:
    ConvSpec spec_;
    PadMode pad_ = PadMode::Reflect;
    Activation act_ = Activation::Silu;
    bool plain_ = false;
};

/// Frequency branch: rdft2 -> packed (re|im) -> layers of 1x1 mixing, activation,
/// batch norm -> unpack -> irdft2.
template <typename T>
class LFLBlock {
public:
    LFLBlock() = default;
    LFLBlock(ParameterStore<T>& store, const std::string& name, int in_c, int out_c, int layer_num, Activation act,
             std::mt19937_64& rng);

    Var<T> forward(Context<T>& ctx, Var<T> x) const;
    [[nodiscard]] int in_c() const { return in_c_; }
    [[nodiscard]] int out_c() const { return out_c_; }
    [[nodiscard]] int layer_num() const { return static_cast<int>(weights.size()); }

    std::vector<Parameter<T>*> weights;  // (2*out_c, 2*in_c or 2*out_c, 1, 1)
    std::vector<BatchNorm<T>> norms;

private:
    int in_c_ = 0;
    int out_c_ = 0;
    Activation act_ = Activation::Silu;
};

/// Layer ladder of a CNNBlock. With the bottleneck on, 1x1 squeeze/expand
/// layers bracket the 3x3 layers whenever a boundary width exceeds `dim`.
std::vector<ConvSpec> cnn_ladder(int in_c, int out_c, int layer_num, int dim, bool bottleneck);

template <typename T>
class CNNBlock {
public:
    CNNBlock() = default;
    CNNBlock(ParameterStore<T>& store, const std::string& name, int in_c, int out_c, int layer_num, int dim,
             bool bottleneck, PadMode pad, Activation act, std::mt19937_64& rng);

    Var<T> forward(Context<T>& ctx, Var<T> x) const;
    [[nodiscard]] const std::vector<ConvLayer<T>>& layers() const { return layers_; }
    /// Number of 3x3 layers, i.e. the receptive-field radius.
    [[nodiscard]] int spatial_layers() const;

private:
    std::vector<ConvLayer<T>> layers_;
};

struct FSLBlockSpec {
    int in_c = 0;
    int out_c = 0;
    int lfl_layers = 2;
    int cnn_layers = 4;
    int dim = 64;
    bool bottleneck = true;
    PadMode pad = PadMode::Reflect;
    Activation act = Activation::Silu;
    Topology topology = Topology::Parallel;
};

/// Outputs of one FSLBlock forward. Branch ids are -1 when the topology lacks them.
template <typename T>
struct FSLOutputs {
    Var<T> out;
    Var<T> lfl;
    Var<T> cnn;
};

template <typename T>
class FSLBlock {
public:
    FSLBlock() = default;
    FSLBlock(ParameterStore<T>& store, const std::string& name, const FSLBlockSpec& spec, std::mt19937_64& rng);

    FSLOutputs<T> forward(Context<T>& ctx, Var<T> x) const;
    [[nodiscard]] const FSLBlockSpec& spec() const { return spec_; }

    std::unique_ptr<LFLBlock<T>> lfl;
    std::unique_ptr<CNNBlock<T>> cnn;
    std::unique_ptr<ConvLayer<T>> fuse;

private:
    FSLBlockSpec spec_;
};

}  // namespace fsl::nn
