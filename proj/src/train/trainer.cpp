#include "slim/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "slim/data/caption.hpp"

namespace slim {

namespace fs = std::filesystem;
using ag::Var;

std::vector<TrainItem> prepare_items(const std::vector<LabeledImage>& images, const Autoencoder& vae,
                                     const TaskClassifier& clf, const Denoiser& den) {
    std::vector<TrainItem> items;
    items.reserve(images.size());
    for (const auto& img : images) {
        const int H = img.height(), W = img.width();
        if (H % Autoencoder::kFactor != 0 || W % Autoencoder::kFactor != 0)
            throw std::invalid_argument("prepare_items: image " + img.id + " size " + std::to_string(H) + "x" +
                                        std::to_string(W) + " not divisible by " + std::to_string(Autoencoder::kFactor));
        const int h = H / Autoencoder::kFactor, w = W / Autoencoder::kFactor;

        TrainItem it;
        it.image = img.pixels.reshaped({1, 3, H, W});
        it.latent = vae.encode(it.image);
        RoIMask mask = gradcam_mask(img, clf, true);
        it.mask_image = mask.values.reshaped({1, 1, H, W});
        it.mask_latent = resize_mask_to_latent(mask, h, w).values.reshaped({1, 1, h, w});
        Caption cap = make_roi_caption(img, mask, default_class_names());
        it.caption_text = cap.text;
        it.caption_tokens = cap.token_ids;
        it.caption_bits = cap.bit_cost;
        it.caption_emb = den.embed_caption(cap.token_ids);
        it.label = img.label;
        items.push_back(std::move(it));
    }
    return items;
}

namespace {

std::vector<Var> trainable_vars(EntropyCodec& codec, Denoiser& den) {
    std::vector<Var> vars = codec.params().vars();
    for (auto& v : den.control_params().vars()) vars.push_back(v);
    return vars;
}

void acc(Var& sum, const Var& term) { sum = sum ? ag::add(sum, term) : term; }

nlohmann::json codec_config_json(const CodecConfig& c) {
    return {{"latent_channels", c.latent_channels},
            {"latent_downsample", c.latent_downsample},
            {"feature_channels", c.feature_channels},
            {"hyper_channels", c.hyper_channels},
            {"slices", c.slices},
            {"context_mid", c.context_mid},
            {"sigma_min", c.sigma_min},
            {"likelihood_floor", c.likelihood_floor}};
}

CodecConfig codec_config_from_json(const nlohmann::json& j) {
    CodecConfig c;
    c.latent_channels = j.at("latent_channels");
    c.latent_downsample = j.at("latent_downsample");
    c.feature_channels = j.at("feature_channels");
    c.hyper_channels = j.at("hyper_channels");
    c.slices = j.at("slices");
    c.context_mid = j.at("context_mid");
    c.sigma_min = j.at("sigma_min");
    c.likelihood_floor = j.at("likelihood_floor");
    return c;
}

}  // namespace

Trainer::Trainer(EntropyCodec& codec, Denoiser& denoiser, const Autoencoder& vae, const TaskClassifier& clf,
                 const NoiseSchedule& sched, const StageConfig& cfg)
    : codec_(codec), den_(denoiser), vae_(vae), clf_(clf), sched_(sched), cfg_(cfg),
      opt_(trainable_vars(codec, denoiser), cfg.lr) {}

StepLosses Trainer::stage1_step(const std::vector<TrainItem>& items, const std::vector<size_t>& batch, Rng& rng) {
    return step_impl(1, items, batch, rng);
}

StepLosses Trainer::stage2_step(const std::vector<TrainItem>& items, const std::vector<size_t>& batch, Rng& rng) {
    return step_impl(2, items, batch, rng);
}

StepLosses Trainer::step_impl(int stage, const std::vector<TrainItem>& items, const std::vector<size_t>& batch,
                              Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("Trainer: empty batch");
    for (size_t idx : batch)
        if (idx >= items.size()) throw std::out_of_range("Trainer: batch index out of range");
    // With both reconstruction-side weights at zero the second-stage objective
    // collapses to the first-stage one; skip the enhancement branch entirely so
    // the two are numerically identical (including RNG consumption).
    const bool with_enhance = stage == 2 && (cfg_.lambda_roi != 0.0 || cfg_.lambda_t != 0.0);

    Var rate, guide, denoise, roi, task;
    for (size_t idx : batch) {
        const TrainItem& it = items[idx];
        const int H = it.image.dim(2), W = it.image.dim(3);

        Var latent = ag::constant(it.latent);
        TrainForward fwd = codec_.train_forward(latent, rng, H, W);
        acc(rate, fwd.bpp);

        Var mask_lat = ag::constant(cfg_.use_roi_mask ? it.mask_latent : Tensor(it.mask_latent.shape(), 1.0));
        acc(guide, guide_loss(latent, fwd.latent_hat, mask_lat));

        Var control = cfg_.detach_control ? ag::detach(fwd.latent_hat) : fwd.latent_hat;
        acc(denoise, den_.denoise_loss(latent, it.caption_emb, &control, sched_, rng));

        if (with_enhance) {
            Var z_enh = den_.enhance(fwd.latent_hat, it.caption_emb, sched_, cfg_.enhance_steps,
                                     cfg_.enhance_strength, rng, true);
            Var x_hat = vae_.decode_var(z_enh);
            Var x = ag::constant(it.image);
            Var mask_img = ag::constant(cfg_.use_roi_mask ? it.mask_image : Tensor(it.mask_image.shape(), 1.0));
            acc(roi, roi_loss(x, x_hat, mask_img, clf_));
            acc(task, task_loss(x_hat, {it.label}, clf_));
        }
    }

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    rate = ag::mul_scalar(rate, inv_b);
    guide = ag::mul_scalar(guide, inv_b);
    denoise = ag::mul_scalar(denoise, inv_b);
    Var total = ag::add(ag::add(ag::mul_scalar(rate, cfg_.lambda_r), ag::mul_scalar(guide, cfg_.lambda_g)),
                        ag::mul_scalar(denoise, cfg_.lambda_d));
    if (with_enhance) {
        roi = ag::mul_scalar(roi, inv_b);
        task = ag::mul_scalar(task, inv_b);
        total = ag::add(total, ag::add(ag::mul_scalar(roi, cfg_.lambda_roi), ag::mul_scalar(task, cfg_.lambda_t)));
    }

    opt_.zero_grad();
    ag::backward(total);
    opt_.step();

    StepLosses out;
    out.rate = rate->val.item();
    out.guide = guide->val.item();
    out.denoise = denoise->val.item();
    out.roi = with_enhance ? roi->val.item() : 0.0;
    out.task = with_enhance ? task->val.item() : 0.0;
    out.total = total->val.item();
    return out;
}

std::string Trainer::run(int stage, const std::vector<TrainItem>& items, const std::string& out_dir, int start_step) {
    if (stage != 1 && stage != 2) throw std::invalid_argument("Trainer::run: stage must be 1 or 2");
    if (items.empty()) throw std::invalid_argument("Trainer::run: no training items");
    if (start_step < 0 || start_step >= cfg_.steps)
        throw std::invalid_argument("Trainer::run: start_step " + std::to_string(start_step) + " outside [0," +
                                    std::to_string(cfg_.steps) + ")");
    fs::create_directories(out_dir);

    const std::string csv_path = (fs::path(out_dir) / ("stage" + std::to_string(stage) + "_loss.csv")).string();
    std::ofstream csv(csv_path, start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!csv) throw std::runtime_error("Trainer::run: cannot open " + csv_path);
    if (start_step == 0) csv << "step,rate,guide,denoise,roi,task,total\n";

    Rng rng(cfg_.seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(stage * 1000000 + start_step));
    std::string last_ckpt;
    for (int s = start_step + 1; s <= cfg_.steps; ++s) {
        std::vector<size_t> batch(static_cast<size_t>(cfg_.batch_size));
        for (auto& b : batch) b = static_cast<size_t>(rng.below(static_cast<int64_t>(items.size())));
        StepLosses l = step_impl(stage, items, batch, rng);
        if (!std::isfinite(l.total))
            throw std::runtime_error("Trainer::run: non-finite loss at step " + std::to_string(s) +
                                     "; last checkpoint " + (last_ckpt.empty() ? "(none)" : last_ckpt));
        char row[256];
        std::snprintf(row, sizeof(row), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", s, l.rate, l.guide, l.denoise,
                      l.roi, l.task, l.total);
        csv << row;
        csv.flush();
        if (s % cfg_.checkpoint_every == 0 || s == cfg_.steps) {
            last_ckpt = (fs::path(out_dir) / (std::to_string(stage) + "_" + std::to_string(s) + ".ckpt")).string();
            save_stage_checkpoint(last_ckpt, codec_, den_, stage, s);
        }
    }
    return last_ckpt;
}

void save_stage_checkpoint(const std::string& path, const EntropyCodec& codec, const Denoiser& den, int stage,
                           int step, const nlohmann::json& extra) {
    Checkpoint ck;
    ck.meta = extra;
    ck.meta["kind"] = "stage";
    ck.meta["stage"] = stage;
    ck.meta["step"] = step;
    ck.meta["codec_config"] = codec_config_json(codec.config());
    ck.meta["denoiser_config"] = den.config_json();
    nn::ParamList pl;
    pl.merge("codec", codec.params());
    pl.merge("den", den.params());
    ck.put_params(pl, Checkpoint::Dtype::f64);
    ck.save(path);
}

StageCheckpoint load_stage_checkpoint(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "stage")
        throw std::runtime_error("load_stage_checkpoint: " + path + " is not a stage checkpoint");
    StageCheckpoint sc;
    sc.stage = ck.meta.at("stage");
    sc.step = ck.meta.at("step");
    sc.meta = ck.meta;
    sc.codec = EntropyCodec(codec_config_from_json(ck.meta.at("codec_config")), 0);
    sc.denoiser = Denoiser::from_config_json(ck.meta.at("denoiser_config"));
    nn::ParamList pl;
    pl.merge("codec", sc.codec.params());
    pl.merge("den", sc.denoiser.params());
    ck.load_params(pl);
    sc.denoiser.freeze_base();
    return sc;
}

}  // namespace slim
