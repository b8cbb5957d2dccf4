// fslnet: gradient checks, training, evaluation and feature inspection.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fsl/fslnet.hpp"
#include "fsl/gradsuite.hpp"
#include "fsl/io.hpp"
#include "fsl/training.hpp"

namespace fs = std::filesystem;
using namespace fsl;

namespace {

enum Exit { kOk = 0, kUsage = 1, kCheckFailed = 2, kIo = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Flags {
    std::string config;
    std::string checkpoint;
    std::string out;
    std::optional<std::uint64_t> seed;
    int bits = 64;
    std::string variant = "S";
    int stage = 0;
    std::string head = "depth";
    int configs = 3;
};

// Explicit --config wins; otherwise the echo written next to a checkpoint; otherwise defaults.
train::TrainConfig resolve_config(const Flags& f, train::Task task) {
    train::TrainConfig cfg;
    std::string path = f.config;
    if (path.empty() && !f.checkpoint.empty() && fs::exists(fs::path(f.checkpoint) / "config.txt"))
        path = (fs::path(f.checkpoint) / "config.txt").string();
    if (!path.empty()) {
        try {
            cfg = train::TrainConfig::load(path);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    cfg.task = task;
    if (f.seed) cfg.seed = *f.seed;
    return cfg;
}

void require_checkpoint(const Flags& f) {
    if (f.checkpoint.empty()) throw UsageError("--checkpoint DIR is required");
    if (!fs::is_directory(f.checkpoint)) throw io::IoError("checkpoint directory not found: " + f.checkpoint);
}

std::ofstream open_csv(const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw io::IoError("cannot write " + (fs::path(dir) / name).string());
    return out;
}

// Config echo as '#' lines so every CSV is reproducible on its own.
void echo_config(std::ostream& out, const train::TrainConfig& cfg) {
    std::istringstream in(cfg.to_key_values());
    for (std::string line; std::getline(in, line);) out << "# " << line << '\n';
}

int cmd_gradcheck(const Flags& f) {
    if (f.bits != 32 && f.bits != 64) throw UsageError("--bits must be 32 or 64");
    check::SuiteOptions o;
    o.seed = f.seed.value_or(1);
    o.configs = f.configs;
    const auto res = f.bits == 64 ? check::gradient_suite<double>(o) : check::gradient_suite<float>(o);
    const double thr = check::suite_threshold(f.bits);
    int failed = 0, configs = 0;
    std::printf("%-9s %-22s %7s %8s %11s\n", "group", "name", "configs", "coords", "max_rel_err");
    for (const auto& e : res) {
        const bool ok = e.max_rel_error < thr;
        failed += ok ? 0 : 1;
        configs += e.configs;
        std::printf("%-9s %-22s %7d %8d %11.3e%s\n", e.group.c_str(), e.name.c_str(), e.configs, e.checked,
                    e.max_rel_error, ok ? "" : "  FAIL");
    }
    std::printf("%d-bit, threshold %.0e, %d configurations: %s\n", f.bits, thr, configs,
                failed == 0 ? "all passed" : (std::to_string(failed) + " failed").c_str());
    return failed == 0 ? kOk : kCheckFailed;
}

int cmd_train(const Flags& f, train::Task task) {
    const train::TrainConfig cfg = resolve_config(f, task);
    const std::string out = f.out.empty() ? (task == train::Task::Depth ? "run_depth" : "run_seg") : f.out;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (task == train::Task::Depth)
        train::run_depth(cfg, out, &std::cout);
    else
        train::run_seg(cfg, out, &std::cout);
    return kOk;
}

int cmd_eval_depth(const Flags& f, bool pose_only) {
    require_checkpoint(f);
    const train::TrainConfig cfg = resolve_config(f, train::Task::Depth);
    train::DepthTrainer tr(cfg);
    tr.load(f.checkpoint);
    const std::uint64_t seed = f.seed.value_or(cfg.eval_seed);
    const train::DepthEval e = tr.evaluate(cfg.eval_samples, seed);
    const auto& d = e.errors;
    const std::string out = f.out.empty() ? f.checkpoint : f.out;
    if (pose_only) {
        std::printf("snippets %d\nate_mean %.5f\nate_std  %.5f\nwarp_l1  %.5f\n", e.samples, e.ate.mean, e.ate.stddev,
                    e.warp_l1);
        auto csv = open_csv(out, "eval_pose.csv");
        echo_config(csv, cfg);
        csv << "step,snippets,ate_mean,ate_std,warp_l1\n"
            << tr.steps() << ',' << e.samples << ',' << e.ate.mean << ',' << e.ate.stddev << ',' << e.warp_l1 << '\n';
        return kOk;
    }
    std::printf("%8s %8s %8s %8s %8s %8s %8s %8s\n", "abs_rel", "sq_rel", "rmse", "rmse_log", "a1", "a2", "a3",
                "warp_l1");
    std::printf("%8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", d.abs_rel, d.sq_rel, d.rms, d.rms_log, d.a1, d.a2,
                d.a3, e.warp_l1);
    std::printf("median-scaled over %d synthetic snippets (seed %llu)\n", e.samples,
                static_cast<unsigned long long>(seed));
    auto csv = open_csv(out, "eval_depth.csv");
    echo_config(csv, cfg);
    csv << "step,samples,abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3,warp_l1\n"
        << tr.steps() << ',' << e.samples << ',' << d.abs_rel << ',' << d.sq_rel << ',' << d.rms << ','
        << d.rms_log << ',' << d.a1 << ',' << d.a2 << ',' << d.a3 << ',' << e.warp_l1 << '\n';
    return kOk;
}

int cmd_eval_seg(const Flags& f) {
    require_checkpoint(f);
    const train::TrainConfig cfg = resolve_config(f, train::Task::Segmentation);
    train::SegTrainer tr(cfg);
    tr.load(f.checkpoint);
    const train::SegEval e = tr.evaluate();
    static const char* names[] = {"ground", "wall", "box", "ceiling"};
    auto csv = open_csv(f.out.empty() ? f.checkpoint : f.out, "eval_seg.csv");
    echo_config(csv, cfg);
    csv << "class,iou\n";
    for (std::size_t c = 0; c < e.iou.per_class.size(); ++c) {
        const char* n = c < 4 ? names[c] : "class";
        std::printf("%-8s %.4f\n", n, e.iou.per_class[c]);
        csv << n << ',' << e.iou.per_class[c] << '\n';
    }
    std::printf("mIoU %.4f  pixel accuracy %.4f  (%d images)\n", e.iou.mean, e.iou.pixel_accuracy, e.samples);
    csv << "mean," << e.iou.mean << "\npixel_accuracy," << e.iou.pixel_accuracy << '\n';
    return kOk;
}

int cmd_inspect(const Flags& f) {
    require_checkpoint(f);
    const bool seg = f.head == "seg" || f.head == "segmentation";
    if (!seg && f.head != "depth") throw UsageError("--head must be depth or seg for inspect");
    const train::TrainConfig cfg = resolve_config(f, seg ? train::Task::Segmentation : train::Task::Depth);
    auto net = io::load_network<train::Real>((fs::path(f.checkpoint) / (seg ? "seg.ckpt" : "depth.ckpt")).string());
    const int stages = 2 * net->config().num_stages;
    if (f.stage < 0 || f.stage > stages) throw UsageError("--stage must be in [1, " + std::to_string(stages) + "]");

    Tensor4<double> image;
    if (seg) {
        image = synth::seg_dataset(cfg.data_seed, 1, cfg.width, cfg.height)[0].image;
    } else {
        std::mt19937_64 rng(f.seed.value_or(cfg.eval_seed));
        image = synth::random_depth_snippet(rng, cfg.width, cfg.height).frames[1];
    }
    const std::string out = f.out.empty() ? (fs::path(f.checkpoint) / "inspect").string() : f.out;
    fs::create_directories(out);
    io::write_ppm((fs::path(out) / "input.ppm").string(), image);

    auto csv = open_csv(out, "energy.csv");
    csv << "stage,lfl_energy,cnn_energy,fused_energy\n";
    std::printf("%-11s %10s %10s %10s\n", "stage", "lfl", "cnn", "fused");
    int smoother = 0, paired = 0;
    const auto maps = train::stage_maps(*net, image);
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (f.stage != 0 && static_cast<int>(i) + 1 != f.stage) continue;
        const auto& m = maps[i];
        auto energy = [](const Tensor4<double>& t) { return t.size() ? train::gradient_energy(t) : NAN; };
        const double el = energy(m.lfl), ec = energy(m.cnn), ef = energy(m.fused);
        std::printf("%-11s %10.4f %10.4f %10.4f\n", m.stage.c_str(), el, ec, ef);
        csv << m.stage << ',' << el << ',' << ec << ',' << ef << '\n';
        if (m.lfl.size() && m.cnn.size()) {
            ++paired;
            smoother += el < ec ? 1 : 0;
        }
        for (const auto& [tag, t] : {std::pair{"lfl", &m.lfl}, std::pair{"cnn", &m.cnn}, std::pair{"fused", &m.fused}})
            if (t->size())
                io::write_pgm((fs::path(out) / (m.stage + "_" + tag + ".pgm")).string(), train::feature_grid(*t));
    }
    std::printf("LFL smoother than CNN in %d of %d stages; grids in %s\n", smoother, paired, out.c_str());
    return kOk;
}

int cmd_params(const Flags& f) {
    if (f.variant != "S" && f.variant != "L") throw UsageError("--variant must be S or L");
    HeadKind head;
    try {
        head = parse_head(f.head);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const NetworkConfig cfg = f.variant == "S" ? NetworkConfig::small(head) : NetworkConfig::large(head);
    const FSLNet<float> net(cfg);
    std::printf("FSLNet-%s %s network\n", f.variant.c_str(), std::string(to_string(head)).c_str());
    std::printf("%-28s %12s %9s\n", "block", "params", "MB");
    for (const auto& b : net.breakdown())
        std::printf("%-28s %12zu %9.3f\n", b.label.c_str(), b.params, 4.0 * b.params / 1e6);
    const double mb = net.size_bytes() / 1e6;
    std::printf("%-28s %12zu %9.3f\n", "total", net.count_parameters(), mb);
    const double target = published_size_mb(f.variant[0], head);
    if (target <= 0.0) {
        std::printf("no published size for this head\n");
        return kOk;
    }
    const double dev = mb / target - 1.0;
    const bool ok = std::abs(dev) <= 0.10;
    std::printf("published %.1f MB, deviation %+.1f%% (tolerance 10%%): %s\n", target, 100.0 * dev,
                ok ? "ok" : "outside tolerance");
    return ok ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FSLNet frequency/spatial learning toolkit"};
    app.require_subcommand(1);
    Flags f;
    auto add_common = [&](CLI::App* c) {
        c->add_option("--config", f.config, "key=value training config");
        c->add_option("--checkpoint", f.checkpoint, "checkpoint directory");
        c->add_option("--out", f.out, "output directory");
        c->add_option("--seed", f.seed, "random seed");
    };
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    add_common(gc);
    gc->add_option("--bits", f.bits, "precision: 32 or 64");
    gc->add_option("--configs", f.configs, "random configurations per entry")->check(CLI::PositiveNumber);
    auto* td = app.add_subcommand("train-depth", "self-supervised depth training on synthetic sequences");
    auto* ts = app.add_subcommand("train-seg", "segmentation training on synthetic masks");
    auto* ed = app.add_subcommand("eval-depth", "depth metrics of a checkpoint");
    auto* ep = app.add_subcommand("eval-pose", "trajectory error of a checkpoint");
    auto* es = app.add_subcommand("eval-seg", "IoU of a checkpoint");
    auto* in = app.add_subcommand("inspect", "per-stage LFL/CNN/fused feature grids");
    auto* pa = app.add_subcommand("params", "parameter breakdown against published sizes");
    for (auto* c : {td, ts, ed, ep, es, in, pa}) add_common(c);
    in->add_option("--stage", f.stage, "stage 1..8 (0 = all)");
    in->add_option("--head", f.head, "depth or seg");
    pa->add_option("--variant", f.variant, "S or L");
    pa->add_option("--head", f.head, "depth, pose or seg");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "fslnet: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (gc->parsed()) return cmd_gradcheck(f);
        if (td->parsed()) return cmd_train(f, train::Task::Depth);
        if (ts->parsed()) return cmd_train(f, train::Task::Segmentation);
        if (ed->parsed()) return cmd_eval_depth(f, false);
        if (ep->parsed()) return cmd_eval_depth(f, true);
        if (es->parsed()) return cmd_eval_seg(f);
        if (in->parsed()) return cmd_inspect(f);
        if (pa->parsed()) return cmd_params(f);
    } catch (const UsageError& e) {
        std::cerr << "fslnet: " << e.what() << '\n';
        return kUsage;
    } catch (const io::IoError& e) {
        std::cerr << "fslnet: " << e.what() << '\n';
        return kIo;
    } catch (const ShapeError& e) {
        std::cerr << "fslnet: checkpoint mismatch: " << e.what() << '\n';
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "fslnet: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "fslnet: " << e.what() << '\n';
        return kCheckFailed;
    }
    return kUsage;
}
