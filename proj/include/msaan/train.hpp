#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "msaan/checkpoint.hpp"
#include "msaan/metrics.hpp"
#include "msaan/model.hpp"
#include "msaan/optim.hpp"
#include "msaan/pipeline.hpp"

// Training/inference/evaluation drivers shared by the CLI and the test
// suites. One seed drives weight init, patch sampling and augmentation, so a
// run is reproducible end to end.

namespace msaan {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string train_dir;
    std::string val_dir;
    std::string out_dir = ".";
    std::string checkpoint;
    int log_every = 10;
    int checkpoint_every = 500;

    std::string echo() const {
        std::ostringstream os;
        os << "blocks=" << model.n_blocks << "\nchannels=" << model.channels << "\nscale=" << model.scale
           << "\nuse_leb=" << model.use_leb << "\nuse_gfm=" << model.use_gfm << "\nuse_mfa=" << model.use_mfa
           << "\nuse_fg=" << model.use_fg << "\nfigff_expansion=" << model.figff_expansion
           << "\nlr=" << train.lr_max << "\nlr_min=" << train.lr_min << "\nsteps=" << train.total_steps
           << "\nbeta1=" << train.beta1 << "\nbeta2=" << train.beta2 << "\nadam_eps=" << train.adam_eps
           << "\nfft_weight=" << train.fft_weight << "\npatch=" << train.patch_size
           << "\nbatch=" << train.batch_size << "\nseed=" << train.seed << "\ntrain_dir=" << train_dir
           << "\nval_dir=" << val_dir << "\nout_dir=" << out_dir << "\ncheckpoint=" << checkpoint
           << "\nlog_every=" << log_every << "\ncheckpoint_every=" << checkpoint_every << "\n";
        return os.str();
    }
};

inline std::vector<std::string> list_images(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

// Grayscale sources are replicated to three channels so the network always
// sees RGB.
inline Image to_rgb(const Image& img) {
    if (img.channels == 3) return img;
    Image out(img.width, img.height, 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, 0);
    return out;
}

// Loads every HR image in the directory and synthesizes its LR counterpart.
inline std::vector<ImagePair> load_training_set(const std::string& dir, int scale) {
    const auto files = list_images(dir);
    if (files.empty()) throw DataError("no readable images (.png/.ppm/.pgm) in " + dir);
    std::vector<ImagePair> pairs;
    pairs.reserve(files.size());
    for (const auto& f : files) pairs.push_back(degrade_bicubic(to_rgb(load_image(f)), scale));
    return pairs;
}

struct TrainResult {
    std::vector<double> losses;       // one combined loss per step
    std::string final_checkpoint;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// sample batch -> augment -> forward -> combined loss -> backward ->
// cosine lr -> adam step. Deterministic given the seed.
inline TrainResult train_run(const RunConfig& cfg, std::ostream& log = std::cout) {
    cfg.model.validate();
    cfg.train.validate();
    const auto pairs = load_training_set(cfg.train_dir, cfg.model.scale);
    for (const auto& p : pairs)
        MSAAN_CHECK(p.lr.width >= cfg.train.patch_size && p.lr.height >= cfg.train.patch_size,
                    "patch size exceeds an LR image; reduce --patch");
    std::filesystem::create_directories(cfg.out_dir);

    log << "# resolved configuration\n" << cfg.echo() << "# training on " << pairs.size() << " image(s)\n";

    Rng rng(cfg.train.seed);
    ParamStore store = init_model_weights(cfg.model, cfg.train.seed);

    TrainResult result;
    const auto t0 = std::chrono::steady_clock::now();
    for (int step = 0; step < cfg.train.total_steps; ++step) {
        const uint64_t draws_before = rng.draw_count();
        const PatchBatch batch = make_batch(pairs, cfg.train.patch_size, cfg.train.batch_size, rng);

        std::vector<std::pair<std::string, Var>> leaves;
        const ModelP<Var> model = bind_model_vars(cfg.model, store, /*requires_grad=*/true, &leaves);
        const Var sr = model_forward(Var::leaf(batch.lr, false), model);
        const Var loss = combined_loss_node(sr, Var::leaf(batch.hr, false), cfg.train.fft_weight);
        const double loss_val = loss_value(loss);
        if (!std::isfinite(loss_val))
            throw NumericError("non-finite loss at step " + std::to_string(step) + " (seed " +
                               std::to_string(cfg.train.seed) + ", rng draw offset " +
                               std::to_string(draws_before) + ")");
        backward(loss);
        collect_grads(leaves, store);

        const float lr = cosine_lr(step, cfg.train);
        adam_step(store, lr, cfg.train);

        result.losses.push_back(loss_val);
        if (step == 0) result.initial_loss = loss_val;
        if (step % cfg.log_every == 0 || step + 1 == cfg.train.total_steps) {
            log << "step " << std::setw(6) << step << "  lr " << std::scientific << std::setprecision(3) << lr
                << "  loss " << std::setprecision(6) << loss_val << std::defaultfloat << "\n";
        }
        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
            step + 1 != cfg.train.total_steps) {
            save_checkpoint(cfg.out_dir + "/checkpoint_step" + std::to_string(step + 1) + ".ckpt", cfg.model, store);
        }
    }
    result.final_loss = result.losses.back();
    result.final_checkpoint = cfg.out_dir + "/checkpoint_final.ckpt";
    save_checkpoint(result.final_checkpoint, cfg.model, store);

    const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << "# finished " << cfg.train.total_steps << " steps in " << std::fixed << std::setprecision(1) << dt
        << "s; initial loss " << std::setprecision(6) << result.initial_loss << ", final loss "
        << result.final_loss << std::defaultfloat << "\n";
    return result;
}

// Forward pass on a [0,1] LR tensor; output clamped to [0,1].
inline Tensor infer_tensor(const ModelConfig& cfg, const ParamStore& store, const Tensor& lr) {
    return clamp01(model_forward_tensor(cfg, store, lr));
}

inline Image infer_image(const ModelConfig& cfg, const ParamStore& store, const Image& lr) {
    return tensor_to_image(infer_tensor(cfg, store, image_to_tensor(to_rgb(lr))));
}

// For each HR image: synthesize LR, super-resolve, score Y-channel PSNR/SSIM
// with a border shave equal to the scale factor. Unreadable files are
// skipped with a warning.
inline EvalReport eval_dir(const ModelConfig& cfg, const ParamStore& store, const std::string& hr_dir,
                           std::ostream& warn = std::cerr) {
    const auto files = list_images(hr_dir);
    if (files.empty()) throw DataError("no readable images (.png/.ppm/.pgm) in " + hr_dir);
    EvalReport report;
    report.shave = cfg.scale;
    for (const auto& f : files) {
        Image hr;
        try {
            hr = to_rgb(load_image(f));
        } catch (const DataError& e) {
            warn << "warning: skipping " << f << ": " << e.what() << "\n";
            ++report.skipped;
            continue;
        }
        const ImagePair pair = degrade_bicubic(hr, cfg.scale);
        const Image sr = infer_image(cfg, store, pair.lr);
        EvalReport::Row row;
        row.name = std::filesystem::path(f).filename().string();
        row.psnr_db = psnr_y(sr, pair.hr, report.shave);
        row.ssim = ssim_y(sr, pair.hr, report.shave);
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace msaan
