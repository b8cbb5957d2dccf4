#pragma once

// Encoder-decoder network assembled from FSLBlocks, with depth, segmentation
// and pose prediction heads.

#include <memory>
#include <string>
#include <vector>

#include "fsl/nn.hpp"

namespace fsl {

enum class HeadKind { Depth, Segmentation, Pose };
HeadKind parse_head(std::string_view s);
std::string_view to_string(HeadKind h);

struct NetworkConfig {
    int c_base = 16;
    int in_channels = 3;
    int num_stages = 4;  // encoder stages; the decoder mirrors them
    int lfl_layers = 2;
    int cnn_layers = 4;
    int bottleneck_dim = 64;
    bool bottleneck = true;
    PadMode pad = PadMode::Reflect;
    nn::Activation activation = nn::Activation::Silu;
    nn::Topology topology = nn::Topology::Parallel;
    HeadKind head = HeadKind::Depth;
    int num_classes = 4;
    double min_depth = 0.1;
    double max_depth = 100.0;
    double pose_scale = 0.01;
    std::uint64_t seed = 0;

    /// FSLNet-S (c=16) or FSLNet-L (c=32) for the given head; pose heads take 9 input channels.
    static NetworkConfig small(HeadKind head);
    static NetworkConfig large(HeadKind head);

    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
};

/// Trainable scalars under one name prefix, labelled for reporting.
struct BlockCount {
    std::string label;
    std::string prefix;
    std::size_t params = 0;
};

template <typename T>
struct NetOutputs {
    Var<T> out;       // disparity in (0,1), class logits, or (n,12,1,1) scaled pose vector
    Var<T> features;  // backbone output before the head
    std::vector<nn::FSLOutputs<T>> stages;  // encoder then decoder
};

template <typename T>
class FSLNet {
public:
    explicit FSLNet(const NetworkConfig& cfg);

    NetOutputs<T> forward(nn::Context<T>& ctx, Var<T> x) const;

    [[nodiscard]] const NetworkConfig& config() const { return cfg_; }
    [[nodiscard]] nn::ParameterStore<T>& store() { return *store_; }
    [[nodiscard]] const nn::ParameterStore<T>& store() const { return *store_; }
    [[nodiscard]] std::vector<Parameter<T>*> parameters() { return store_->parameters(); }
    [[nodiscard]] std::size_t count_parameters() const { return store_->count(); }
    /// Bytes of 32-bit trainable storage.
    [[nodiscard]] std::size_t size_bytes() const { return 4 * count_parameters(); }
    /// Per-block counts in network order; entries sum to count_parameters().
    [[nodiscard]] std::vector<BlockCount> breakdown() const;

    [[nodiscard]] const std::vector<nn::FSLBlock<T>>& encoder() const { return encoder_; }
    [[nodiscard]] const std::vector<nn::FSLBlock<T>>& decoder() const { return decoder_; }
    [[nodiscard]] const std::vector<nn::ConvLayer<T>>& skip_fusions() const { return skip_; }
    [[nodiscard]] const std::vector<nn::ConvLayer<T>>& head_layers() const { return head_; }

private:
    NetworkConfig cfg_;
    std::unique_ptr<nn::ParameterStore<T>> store_;
    std::vector<nn::FSLBlock<T>> encoder_;
    std::vector<nn::FSLBlock<T>> decoder_;
    std::vector<nn::ConvLayer<T>> skip_;
    std::vector<nn::ConvLayer<T>> head_;
};

/// Published model size in megabytes of 32-bit weights for 'S'/'L' depth and pose
/// networks; 0 where none is published (segmentation).
double published_size_mb(char variant, HeadKind head);

/// depth = 1 / (1/max_depth + (1/min_depth - 1/max_depth) * disparity)
template <typename T>
Var<T> disparity_to_depth(Var<T> disparity, double min_depth, double max_depth);

}  // namespace fsl
