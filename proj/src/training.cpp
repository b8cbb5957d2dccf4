#include "fsl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fsl/geometry.hpp"
#include "fsl/io.hpp"

namespace fsl::train {

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
    if (variant != 'S' && variant != 'L') fail("variant must be S or L");
    if (epochs < 1 || steps_per_epoch < 1) fail("epochs and steps_per_epoch must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (width < 8 || height < 8 || width % 8 != 0 || height % 8 != 0) fail("resolution must be divisible by 8");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (!(lr_decay_factor > 0.0)) fail("lr_decay_factor must be positive");
    if (task == Task::Segmentation && dataset_size < 1) fail("dataset_size must be >= 1");
    if (eval_samples < 1) fail("eval_samples must be >= 1");
    if (eval_every < 0 || log_every < 1) fail("eval_every must be >= 0 and log_every >= 1");
}

NetworkConfig TrainConfig::network(HeadKind head) const {
    NetworkConfig c = variant == 'L' ? NetworkConfig::large(head) : NetworkConfig::small(head);
    c.num_classes = synth::kNumClasses;
    c.seed = seed + (head == HeadKind::Pose ? 1 : 0);
    return c;
}

synth::AugmentOptions TrainConfig::augmentation() const {
    synth::AugmentOptions o;
    o.flip = flip;
    o.color = color;
    return o;
}

double TrainConfig::lr_for_epoch(int epoch) const {
    return task == Task::Depth ? lr_at(epoch, lr, lr_decay_every, lr_decay_factor) : lr;
}

TrainConfig TrainConfig::from_key_values(const std::map<std::string, std::string>& kv) {
    TrainConfig c;
    for (const auto& [k, v] : kv) {
        auto bad = [&]() { return std::invalid_argument("train config: bad value for " + k + ": '" + v + "'"); };
        auto as_int = [&]() {
            std::size_t used = 0;
            int r = 0;
            try {
                r = std::stoi(v, &used);
            } catch (const std::logic_error&) {
                throw bad();
            }
            if (used != v.size()) throw bad();
            return r;
        };
        auto as_u64 = [&]() {
            std::size_t used = 0;
            std::uint64_t r = 0;
            try {
                r = std::stoull(v, &used);
            } catch (const std::logic_error&) {
                throw bad();
            }
            if (used != v.size()) throw bad();
            return r;
        };
        auto as_double = [&]() {
            std::size_t used = 0;
            double r = 0;
            try {
                r = std::stod(v, &used);
            } catch (const std::logic_error&) {
                throw bad();
            }
            if (used != v.size()) throw bad();
            return r;
        };
        auto as_bool = [&]() {
            if (v == "1" || v == "true" || v == "on") return true;
            if (v == "0" || v == "false" || v == "off") return false;
            throw bad();
        };
        if (k == "task") {
            if (v == "depth") {
                c.task = Task::Depth;
            } else if (v == "segmentation" || v == "seg") {
                c.task = Task::Segmentation;
            } else {
                throw bad();
            }
        } else if (k == "variant") {
            if (v != "S" && v != "L") throw bad();
            c.variant = v[0];
        } else if (k == "epochs") {
            c.epochs = as_int();
        } else if (k == "steps_per_epoch") {
            c.steps_per_epoch = as_int();
        } else if (k == "batch_size") {
            c.batch_size = as_int();
        } else if (k == "width") {
            c.width = as_int();
        } else if (k == "height") {
            c.height = as_int();
        } else if (k == "lr") {
            c.lr = as_double();
        } else if (k == "lr_decay_every") {
            c.lr_decay_every = as_int();
        } else if (k == "lr_decay_factor") {
            c.lr_decay_factor = as_double();
        } else if (k == "seed") {
            c.seed = as_u64();
        } else if (k == "flip") {
            c.flip = as_bool();
        } else if (k == "color") {
            c.color = as_bool();
        } else if (k == "alpha") {
            c.alpha = as_double();
        } else if (k == "beta") {
            c.beta = as_double();
        } else if (k == "dataset_size") {
            c.dataset_size = as_int();
        } else if (k == "data_seed") {
            c.data_seed = as_u64();
        } else if (k == "eval_seed") {
            c.eval_seed = as_u64();
        } else if (k == "eval_samples") {
            c.eval_samples = as_int();
        } else if (k == "eval_every") {
            c.eval_every = as_int();
        } else if (k == "log_every") {
            c.log_every = as_int();
        } else {
            throw std::invalid_argument("train config: unknown key " + k);
        }
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
    return from_key_values(io::read_key_values(path));
}

std::string TrainConfig::to_key_values() const {
    std::ostringstream o;
    o << std::setprecision(17);
    o << "task=" << (task == Task::Depth ? "depth" : "segmentation") << '\n'
      << "variant=" << variant << '\n'
      << "epochs=" << epochs << '\n'
      << "steps_per_epoch=" << steps_per_epoch << '\n'
      << "batch_size=" << batch_size << '\n'
      << "width=" << width << '\n'
      << "height=" << height << '\n'
      << "lr=" << lr << '\n'
      << "lr_decay_every=" << lr_decay_every << '\n'
      << "lr_decay_factor=" << lr_decay_factor << '\n'
      << "seed=" << seed << '\n'
      << "flip=" << (flip ? 1 : 0) << '\n'
      << "color=" << (color ? 1 : 0) << '\n'
      << "alpha=" << alpha << '\n'
      << "beta=" << beta << '\n'
      << "dataset_size=" << dataset_size << '\n'
      << "data_seed=" << data_seed << '\n'
      << "eval_seed=" << eval_seed << '\n'
      << "eval_samples=" << eval_samples << '\n'
      << "eval_every=" << eval_every << '\n'
      << "log_every=" << log_every << '\n';
    return o.str();
}

// ---------------------------------------------------------------------------
// Helpers

Tensor4<double> stack(const std::vector<const Tensor4<double>*>& xs) {
    if (xs.empty()) throw std::invalid_argument("stack: nothing to stack");
    Shape s = xs[0]->shape();
    for (const auto* x : xs) {
        if (x->n() != 1 || x->c() != s.c || x->h() != s.h || x->w() != s.w) {
            throw ShapeError("stack: " + x->shape().str() + " vs " + s.str());
        }
    }
    s.n = static_cast<int>(xs.size());
    Tensor4<double> out(s);
    const std::size_t per = xs[0]->size();
    for (std::size_t b = 0; b < xs.size(); ++b) std::copy_n(xs[b]->ptr(), per, out.ptr() + b * per);
    return out;
}

namespace {

// (n,3,h,w) x3 -> (n,9,h,w)
Tensor4<double> concat3(const Tensor4<double>& a, const Tensor4<double>& b, const Tensor4<double>& c) {
    Tensor4<double> out(Shape{a.n(), 9, a.h(), a.w()});
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    for (int n = 0; n < a.n(); ++n) {
        int ch = 0;
        for (const auto* t : {&a, &b, &c})
            for (int k = 0; k < 3; ++k) std::copy_n(t->plane(n, k), plane, out.plane(n, ch++));
    }
    return out;
}

const geom::CameraIntrinsics& shared_intrinsics(const std::vector<const geom::CameraIntrinsics*>& ks) {
    for (const auto* k : ks) {
        if (k->fx != ks[0]->fx || k->fy != ks[0]->fy || k->cx != ks[0]->cx || k->cy != ks[0]->cy) {
            throw std::invalid_argument("batch samples must share camera intrinsics");
        }
    }
    return *ks[0];
}

Tensor4<double> to_double(const Tensor4<Real>& t) {
    return t.cast<double>();
}

Tensor4<Real> to_real(const Tensor4<double>& t) {
    return t.cast<Real>();
}

// Camera centres of previous, target and next frame in the target frame.
metrics::Trajectory snippet_positions(const synth::PoseVector& prev, const synth::PoseVector& next) {
    auto centre = [](const synth::PoseVector& p) {
        const auto M = geom::pose_to_matrix(p);
        std::array<double, 3> c{};
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) c[i] -= M[k * 4 + i] * M[k * 4 + 3];
        return c;
    };
    return {centre(prev), {0.0, 0.0, 0.0}, centre(next)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Depth

DepthTrainer::DepthTrainer(const TrainConfig& cfg)
    : cfg_(cfg),
      depth_(std::make_unique<FSLNet<Real>>(cfg.network(HeadKind::Depth))),
      pose_(std::make_unique<FSLNet<Real>>(cfg.network(HeadKind::Pose))),
      rng_(cfg.seed ^ 0x5eedULL) {
    cfg_.validate();
    AdamOptions o;
    o.lr = cfg_.lr;
    depth_opt_ = std::make_unique<Adam<Real>>(depth_->parameters(), o);
    pose_opt_ = std::make_unique<Adam<Real>>(pose_->parameters(), o);
}

StepStats DepthTrainer::step() {
    const int n = cfg_.batch_size;
    std::vector<synth::AugmentedSnippet> batch;
    for (int b = 0; b < n; ++b) {
        batch.push_back(synth::augment(synth::random_depth_snippet(rng_, cfg_.width, cfg_.height),
                                       cfg_.augmentation(), rng_));
    }
    std::vector<const geom::CameraIntrinsics*> ks;
    std::vector<const Tensor4<double>*> in[3], clean[3];
    for (const auto& s : batch) {
        ks.push_back(&s.clean.K);
        for (int f = 0; f < 3; ++f) {
            in[f].push_back(&s.inputs[f]);
            clean[f].push_back(&s.clean.frames[f]);
        }
    }
    const geom::CameraIntrinsics K = shared_intrinsics(ks);
    const Tensor4<double> in_prev = stack(in[0]), in_tgt = stack(in[1]), in_next = stack(in[2]);

    Tape<Real> t;
    nn::Context<Real> ctx{t, true};
    const NetworkConfig& dc = depth_->config();
    Var<Real> disp = depth_->forward(ctx, t.constant(to_real(in_tgt))).out;
    Var<Real> pose = pose_->forward(ctx, t.constant(to_real(concat3(in_prev, in_tgt, in_next)))).out;
    Var<Real> depth = disparity_to_depth(disp, dc.min_depth, dc.max_depth);

    std::vector<Var<Real>> refs, warped;
    std::vector<Tensor4<Real>> valid(2);
    for (int i = 0; i < 2; ++i) {
        refs.push_back(t.constant(to_real(stack(clean[i == 0 ? 0 : 2]))));
        Var<Real> T = geom::pose_to_transform(ad::slice_channels(pose, 6 * i, 6 * i + 6));
        warped.push_back(geom::warp(refs.back(), depth, T, K, &valid[i]));
    }
    loss::DepthLossWeights w{cfg_.alpha, cfg_.beta};
    auto terms = loss::depth_objective(disp, t.constant(to_real(stack(clean[1]))), refs, warped, valid, K,
                                       dc.min_depth, dc.max_depth, w);
    t.backward(terms.total);

    StepStats st;
    st.epoch = static_cast<int>(step_ / cfg_.steps_per_epoch);
    st.lr = cfg_.lr_for_epoch(st.epoch);
    depth_opt_->set_lr(st.lr);
    pose_opt_->set_lr(st.lr);
    depth_opt_->step();
    pose_opt_->step();
    depth_opt_->zero_grad();
    pose_opt_->zero_grad();

    st.step = ++step_;
    st.loss = terms.total.value().item();
    st.reconstruction = terms.reconstruction;
    st.smoothness = terms.smoothness;
    st.contrast = terms.contrast;
    st.mask_fraction = terms.mask_fraction;
    return st;
}

Prediction DepthTrainer::predict(const std::vector<synth::DepthSnippet>& batch) {
    std::vector<const Tensor4<double>*> f[3];
    for (const auto& s : batch)
        for (int i = 0; i < 3; ++i) f[i].push_back(&s.frames[i]);
    const Tensor4<double> prev = stack(f[0]), tgt = stack(f[1]), next = stack(f[2]);
    Tape<Real> t;
    nn::Context<Real> ctx{t, false};
    const NetworkConfig& dc = depth_->config();
    Var<Real> disp = depth_->forward(ctx, t.constant(to_real(tgt))).out;
    Var<Real> pose = pose_->forward(ctx, t.constant(to_real(concat3(prev, tgt, next)))).out;
    Prediction p;
    p.depth = to_double(disparity_to_depth(disp, dc.min_depth, dc.max_depth).value());
    for (std::size_t b = 0; b < batch.size(); ++b)
        for (int i = 0; i < 2; ++i) {
            synth::PoseVector v{};
            for (int k = 0; k < 6; ++k) v[k] = pose.value()(static_cast<int>(b), 6 * i + k, 0, 0);
            p.poses.push_back(v);
        }
    return p;
}

DepthEval DepthTrainer::evaluate(int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    metrics::DepthAccumulator acc;
    std::vector<metrics::Trajectory> pred_traj, gt_traj;
    double warp_sum = 0.0;
    std::size_t warp_px = 0;
    for (int done = 0; done < count;) {
        const int n = std::min(cfg_.batch_size, count - done);
        std::vector<synth::DepthSnippet> batch;
        for (int b = 0; b < n; ++b) batch.push_back(synth::random_depth_snippet(rng, cfg_.width, cfg_.height));
        const Prediction p = predict(batch);
        std::vector<const Tensor4<double>*> gts;
        for (const auto& s : batch) gts.push_back(&s.depth);
        acc.add(p.depth, stack(gts), true);

        for (int b = 0; b < n; ++b) {
            const auto& s = batch[static_cast<std::size_t>(b)];
            const auto& pv = p.poses[static_cast<std::size_t>(2 * b)];
            const auto& nv = p.poses[static_cast<std::size_t>(2 * b + 1)];
            pred_traj.push_back(snippet_positions(pv, nv));
            gt_traj.push_back(snippet_positions(s.poses[0], s.poses[1]));

            Tape<double> t;
            Tensor4<double> d(Shape{1, 1, cfg_.height, cfg_.width});
            std::copy_n(p.depth.plane(b, 0), d.size(), d.ptr());
            Var<double> dv = t.constant(d);
            Tensor4<double> err[2];
            for (int i = 0; i < 2; ++i) {
                const auto& pose = i == 0 ? pv : nv;
                Tensor4<double> pt(Shape{1, 6, 1, 1});
                for (int k = 0; k < 6; ++k) pt[k] = pose[k];
                Var<double> T = geom::pose_to_transform(t.constant(pt));
                const auto& w = geom::warp(t.constant(s.frames[i == 0 ? 0 : 2]), dv, T, s.K).value();
                err[i] = Tensor4<double>(Shape{1, 1, cfg_.height, cfg_.width});
                for (int c = 0; c < 3; ++c)
                    for (int y = 0; y < cfg_.height; ++y)
                        for (int x = 0; x < cfg_.width; ++x)
                            err[i](0, 0, y, x) += std::abs(w(0, c, y, x) - s.frames[1](0, c, y, x)) / 3.0;
            }
            for (std::size_t j = 0; j < err[0].size(); ++j) warp_sum += std::min(err[0][j], err[1][j]);
            warp_px += err[0].size();
        }
        done += n;
    }
    DepthEval e;
    e.errors = acc.result();
    e.warp_l1 = warp_sum / static_cast<double>(warp_px);
    e.ate = metrics::ate(pred_traj, gt_traj);
    e.samples = count;
    return e;
}

void DepthTrainer::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    io::pack_network(*depth_, depth_opt_.get()).save(dir + "/depth.ckpt");
    io::pack_network(*pose_, pose_opt_.get()).save(dir + "/pose.ckpt");
}

void DepthTrainer::load(const std::string& dir) {
    const auto d = io::Checkpoint::load(dir + "/depth.ckpt");
    const auto p = io::Checkpoint::load(dir + "/pose.ckpt");
    io::unpack_into(d, *depth_, depth_opt_.get());
    io::unpack_into(p, *pose_, pose_opt_.get());
    step_ = depth_opt_->steps();
}

// ---------------------------------------------------------------------------
// Segmentation

SegTrainer::SegTrainer(const TrainConfig& cfg)
    : cfg_(cfg),
      net_(std::make_unique<FSLNet<Real>>(cfg.network(HeadKind::Segmentation))),
      data_(synth::seg_dataset(cfg.data_seed, cfg.dataset_size, cfg.width, cfg.height)),
      rng_(cfg.seed ^ 0x5e9ULL) {
    cfg_.validate();
    AdamOptions o;
    o.lr = cfg_.lr;
    opt_ = std::make_unique<Adam<Real>>(net_->parameters(), o);
}

StepStats SegTrainer::step() {
    std::vector<synth::AugmentedSeg> batch;
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    for (int b = 0; b < cfg_.batch_size; ++b) batch.push_back(synth::augment(data_[pick(rng_)], cfg_.augmentation(), rng_));
    std::vector<const Tensor4<double>*> in, labels;
    for (const auto& s : batch) {
        in.push_back(&s.input);
        labels.push_back(&s.clean.labels);
    }
    Tape<Real> t;
    nn::Context<Real> ctx{t, true};
    Var<Real> logits = net_->forward(ctx, t.constant(to_real(stack(in)))).out;
    auto ce = loss::cross_entropy(logits, to_real(stack(labels)));
    t.backward(ce.loss);

    StepStats st;
    st.epoch = static_cast<int>(step_ / cfg_.steps_per_epoch);
    st.lr = cfg_.lr_for_epoch(st.epoch);
    opt_->set_lr(st.lr);
    opt_->step();
    opt_->zero_grad();
    st.step = ++step_;
    st.loss = ce.loss.value().item();
    return st;
}

Tensor4<double> SegTrainer::predict(const Tensor4<double>& images) {
    Tape<Real> t;
    nn::Context<Real> ctx{t, false};
    const Tensor4<Real>& logits = net_->forward(ctx, t.constant(to_real(images))).out.value();
    Tensor4<double> out(Shape{logits.n(), 1, logits.h(), logits.w()});
    for (int b = 0; b < logits.n(); ++b)
        for (int y = 0; y < logits.h(); ++y)
            for (int x = 0; x < logits.w(); ++x) {
                int best = 0;
                for (int c = 1; c < logits.c(); ++c)
                    if (logits(b, c, y, x) > logits(b, best, y, x)) best = c;
                out(b, 0, y, x) = best;
            }
    return out;
}

SegEval SegTrainer::evaluate() {
    metrics::IoUAccumulator acc(synth::kNumClasses, loss::kIgnoreLabel);
    for (std::size_t i = 0; i < data_.size(); i += static_cast<std::size_t>(cfg_.batch_size)) {
        std::vector<const Tensor4<double>*> in, gt;
        for (std::size_t j = i; j < std::min(data_.size(), i + static_cast<std::size_t>(cfg_.batch_size)); ++j) {
            in.push_back(&data_[j].image);
            gt.push_back(&data_[j].labels);
        }
        acc.add(predict(stack(in)), stack(gt));
    }
    return {acc.result(), static_cast<int>(data_.size())};
}

void SegTrainer::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    io::pack_network(*net_, opt_.get()).save(dir + "/seg.ckpt");
}

void SegTrainer::load(const std::string& dir) {
    io::unpack_into(io::Checkpoint::load(dir + "/seg.ckpt"), *net_, opt_.get());
    step_ = opt_->steps();
}

// ---------------------------------------------------------------------------
// Feature inspection

double gradient_energy(const Tensor4<double>& maps) {
    const int h = maps.h(), w = maps.w();
    if (h < 2 && w < 2) return 0.0;
    double total = 0.0;
    int planes = 0;
    for (int b = 0; b < maps.n(); ++b)
        for (int c = 0; c < maps.c(); ++c, ++planes) {
            const double* p = maps.plane(b, c);
            const auto [lo, hi] = std::minmax_element(p, p + static_cast<std::ptrdiff_t>(h) * w);
            const double range = *hi - *lo;
            if (!(range > 0.0)) continue;
            double gx = 0.0, gy = 0.0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x + 1 < w; ++x) gx += std::abs(p[y * w + x + 1] - p[y * w + x]);
            for (int y = 0; y + 1 < h; ++y)
                for (int x = 0; x < w; ++x) gy += std::abs(p[(y + 1) * w + x] - p[y * w + x]);
            if (w > 1) total += gx / (range * h * (w - 1));
            if (h > 1) total += gy / (range * (h - 1) * w);
        }
    return planes > 0 ? total / planes : 0.0;
}

std::vector<StageMaps> stage_maps(FSLNet<Real>& net, const Tensor4<double>& input) {
    Tape<Real> t;
    nn::Context<Real> ctx{t, false};
    const auto o = net.forward(ctx, t.constant(to_real(input)));
    std::vector<StageMaps> out;
    const int S = net.config().num_stages;
    for (std::size_t k = 0; k < o.stages.size(); ++k) {
        const auto& s = o.stages[k];
        const int no = static_cast<int>(k) + 1;
        StageMaps m;
        m.stage = (no <= S ? "enc.stage" : "dec.stage") + std::to_string(no);
        if (s.lfl.id >= 0) m.lfl = to_double(s.lfl.value());
        if (s.cnn.id >= 0) m.cnn = to_double(s.cnn.value());
        m.fused = to_double(s.out.value());
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<StageEnergy> branch_energy(FSLNet<Real>& net, const Tensor4<double>& input) {
    std::vector<StageEnergy> out;
    for (const auto& m : stage_maps(net, input)) {
        if (m.lfl.empty() || m.cnn.empty()) continue;
        out.push_back({m.stage, gradient_energy(m.lfl), gradient_energy(m.cnn)});
    }
    return out;
}

Tensor4<double> feature_grid(const Tensor4<double>& maps, int columns) {
    if (columns < 1) throw std::invalid_argument("feature_grid: columns must be >= 1");
    const int C = maps.c(), h = maps.h(), w = maps.w();
    const int cols = std::min(columns, C), rows = (C + cols - 1) / cols;
    Tensor4<double> g(Shape{1, 1, rows * (h + 1) - 1, cols * (w + 1) - 1});
    for (int c = 0; c < C; ++c) {
        const double* p = maps.plane(0, c);
        const auto [lo, hi] = std::minmax_element(p, p + static_cast<std::ptrdiff_t>(h) * w);
        const double range = *hi - *lo;
        const int oy = (c / cols) * (h + 1), ox = (c % cols) * (w + 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) g(0, 0, oy + y, ox + x) = range > 0.0 ? (p[y * w + x] - *lo) / range : 0.0;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Loops

namespace {

std::ofstream open_csv(const std::string& path, const char* header) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io::IoError("cannot write " + path);
    f << header << '\n' << std::setprecision(8);
    return f;
}

void echo_config(const TrainConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream f(dir + "/config.txt", std::ios::trunc);
    if (!f) throw io::IoError("cannot write " + dir + "/config.txt");
    f << cfg.to_key_values();
}

template <typename Trainer, typename Eval>
void loop(const TrainConfig& cfg, Trainer& tr, const std::string& dir, std::ostream* progress, Eval eval) {
    auto train_csv = open_csv(dir + "/train.csv", "step,epoch,lr,loss,reconstruction,smoothness,contrast,mask_fraction");
    const auto t0 = std::chrono::steady_clock::now();
    const std::int64_t total = static_cast<std::int64_t>(cfg.epochs) * cfg.steps_per_epoch;
    double acc_loss = 0.0;
    int acc_n = 0;
    for (std::int64_t i = 0; i < total; ++i) {
        const StepStats s = tr.step();
        acc_loss += s.loss;
        ++acc_n;
        if (s.step % cfg.log_every == 0 || s.step == total) {
            train_csv << s.step << ',' << s.epoch << ',' << s.lr << ',' << s.loss << ',' << s.reconstruction << ','
                      << s.smoothness << ',' << s.contrast << ',' << s.mask_fraction << '\n';
            if (progress) {
                const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                *progress << "step " << s.step << "/" << total << "  loss " << acc_loss / acc_n << "  " << std::fixed
                          << std::setprecision(1) << sec << "s" << std::defaultfloat << '\n';
            }
            acc_loss = 0.0;
            acc_n = 0;
        }
        if ((cfg.eval_every > 0 && s.step % cfg.eval_every == 0) || s.step == total) eval(s.step);
    }
    tr.save(dir);
}

}  // namespace

void run_depth(const TrainConfig& cfg, const std::string& out_dir, std::ostream* progress) {
    if (cfg.task != Task::Depth) throw std::invalid_argument("run_depth: config task is not depth");
    echo_config(cfg, out_dir);
    DepthTrainer tr(cfg);
    auto eval_csv = open_csv(out_dir + "/eval.csv", "step,abs_rel,sq_rel,rms,rms_log,a1,a2,a3,warp_l1,ate_mean,ate_std");
    loop(cfg, tr, out_dir, progress, [&](std::int64_t step) {
        const DepthEval e = tr.evaluate(cfg.eval_samples, cfg.eval_seed);
        eval_csv << step << ',' << e.errors.abs_rel << ',' << e.errors.sq_rel << ',' << e.errors.rms << ','
                 << e.errors.rms_log << ',' << e.errors.a1 << ',' << e.errors.a2 << ',' << e.errors.a3 << ','
                 << e.warp_l1 << ',' << e.ate.mean << ',' << e.ate.stddev << '\n';
        eval_csv.flush();
        if (progress) *progress << "eval step " << step << "  abs_rel " << e.errors.abs_rel << "  warp_l1 " << e.warp_l1 << '\n';
    });
}

void run_seg(const TrainConfig& cfg, const std::string& out_dir, std::ostream* progress) {
    if (cfg.task != Task::Segmentation) throw std::invalid_argument("run_seg: config task is not segmentation");
    echo_config(cfg, out_dir);
    SegTrainer tr(cfg);
    auto eval_csv = open_csv(out_dir + "/eval.csv", "step,miou,pixel_accuracy");
    loop(cfg, tr, out_dir, progress, [&](std::int64_t step) {
        const SegEval e = tr.evaluate();
        eval_csv << step << ',' << e.iou.mean << ',' << e.iou.pixel_accuracy << '\n';
        eval_csv.flush();
        if (progress) *progress << "eval step " << step << "  miou " << e.iou.mean << '\n';
    });
}

}  // namespace fsl::train
