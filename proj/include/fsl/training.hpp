#pragma once

// Training loops for self-supervised depth (depth + pose networks) and
// segmentation on synthetic data, with evaluation and feature inspection.

#include <cstdint>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "fsl/fslnet.hpp"
#include "fsl/losses.hpp"
#include "fsl/metrics.hpp"
#include "fsl/optim.hpp"
#include "fsl/synthetic.hpp"

namespace fsl::train {

enum class Task { Depth, Segmentation };

struct TrainConfig {
    Task task = Task::Depth;
    char variant = 'S';
    int epochs = 1;
    int steps_per_epoch = 2000;
    int batch_size = 3;
    int width = 64;
    int height = 32;
    double lr = 1e-4;
    int lr_decay_every = 15;  // epochs; depth only, segmentation keeps lr constant
    double lr_decay_factor = 0.1;
    std::uint64_t seed = 1;
    bool flip = false;  // mirroring negates lateral motion, which the toy pose net cannot resolve
    bool color = true;
    double alpha = 1e-3;
    double beta = 1e-3;
    int dataset_size = 20;          // segmentation images
    std::uint64_t data_seed = 2024;  // segmentation image set
    std::uint64_t eval_seed = 777;   // held-out depth snippets
    int eval_samples = 16;
    int eval_every = 0;  // steps; 0 evaluates only at the end
    int log_every = 10;

    /// Throws std::invalid_argument; resolution must be divisible by 8.
    void validate() const;
    [[nodiscard]] NetworkConfig network(HeadKind head) const;
    [[nodiscard]] synth::AugmentOptions augmentation() const;
    [[nodiscard]] double lr_for_epoch(int epoch) const;

    /// Unknown keys and unparsable values throw std::invalid_argument naming the key.
    static TrainConfig from_key_values(const std::map<std::string, std::string>& kv);
    static TrainConfig load(const std::string& path);
    [[nodiscard]] std::string to_key_values() const;
};

using Real = float;

struct StepStats {
    std::int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double reconstruction = 0.0;
    double smoothness = 0.0;
    double contrast = 0.0;
    double mask_fraction = 0.0;
};

struct DepthEval {
    metrics::DepthErrors errors;
    double warp_l1 = 0.0;  // pixel mean of the per-pixel best reference's mean |warped - target|
    metrics::AteResult ate;
    int samples = 0;
};

struct Prediction {
    Tensor4<double> depth;                  // (n,1,h,w)
    std::vector<synth::PoseVector> poses;   // 2 per sample: target->previous, target->next
};

/// Depth and pose networks trained jointly by view synthesis.
class DepthTrainer {
public:
    explicit DepthTrainer(const TrainConfig& cfg);

    StepStats step();
    /// Metrics on `count` held-out snippets drawn from `seed`, networks in eval mode.
    DepthEval evaluate(int count, std::uint64_t seed);
    /// Eval-mode prediction for snippets sharing intrinsics.
    Prediction predict(const std::vector<synth::DepthSnippet>& batch);

    void save(const std::string& dir) const;
    void load(const std::string& dir);

    [[nodiscard]] FSLNet<Real>& depth_net() { return *depth_; }
    [[nodiscard]] FSLNet<Real>& pose_net() { return *pose_; }
    [[nodiscard]] std::int64_t steps() const { return step_; }
    [[nodiscard]] const TrainConfig& config() const { return cfg_; }

private:
    TrainConfig cfg_;
    std::unique_ptr<FSLNet<Real>> depth_;
    std::unique_ptr<FSLNet<Real>> pose_;
    std::unique_ptr<Adam<Real>> depth_opt_;
    std::unique_ptr<Adam<Real>> pose_opt_;
    std::mt19937_64 rng_;
    std::int64_t step_ = 0;
};

struct SegEval {
    metrics::IoUResult iou;
    int samples = 0;
};

/// Segmentation network fitted to a fixed synthetic image set.
class SegTrainer {
public:
    explicit SegTrainer(const TrainConfig& cfg);

    StepStats step();
    /// mIoU over the clean training images in eval mode.
    SegEval evaluate();
    /// Arg-max labels (n,1,h,w).
    Tensor4<double> predict(const Tensor4<double>& images);

    void save(const std::string& dir) const;
    void load(const std::string& dir);

    [[nodiscard]] FSLNet<Real>& net() { return *net_; }
    [[nodiscard]] const std::vector<synth::SegSample>& dataset() const { return data_; }
    [[nodiscard]] std::int64_t steps() const { return step_; }

private:
    TrainConfig cfg_;
    std::unique_ptr<FSLNet<Real>> net_;
    std::unique_ptr<Adam<Real>> opt_;
    std::vector<synth::SegSample> data_;
    std::mt19937_64 rng_;
    std::int64_t step_ = 0;
};

/// Stacks (1,c,h,w) tensors along the batch axis.
Tensor4<double> stack(const std::vector<const Tensor4<double>*>& xs);

/// Per-channel min-max normalisation, then mean |dx| + |dy| over all maps.
double gradient_energy(const Tensor4<double>& maps);

struct StageEnergy {
    std::string stage;
    double lfl = 0.0;
    double cnn = 0.0;
};

/// Gradient energy of each FSLBlock's LFL and CNN branch outputs (eval mode).
/// Stages missing a branch are skipped.
std::vector<StageEnergy> branch_energy(FSLNet<Real>& net, const Tensor4<double>& input);

/// Branch outputs of every stage (eval mode), for dumping.
struct StageMaps {
    std::string stage;
    Tensor4<double> lfl;
    Tensor4<double> cnn;
    Tensor4<double> fused;
};
std::vector<StageMaps> stage_maps(FSLNet<Real>& net, const Tensor4<double>& input);

/// Tiles the channels of sample 0 into one min-max normalised grayscale image.
Tensor4<double> feature_grid(const Tensor4<double>& maps, int columns = 8);

/// Runs cfg.epochs * cfg.steps_per_epoch steps, appending one CSV row per log
/// interval to train.csv and one per evaluation to eval.csv in `out_dir`, and
/// writing the config echo and final checkpoints there.
void run_depth(const TrainConfig& cfg, const std::string& out_dir, std::ostream* progress = nullptr);
void run_seg(const TrainConfig& cfg, const std::string& out_dir, std::ostream* progress = nullptr);

}  // namespace fsl::train
