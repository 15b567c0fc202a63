#pragma once

#include <string>
#include <vector>

#include "slim/codec/codec.hpp"
#include "slim/data/gradcam.hpp"
#include "slim/diffusion/denoiser.hpp"
#include "slim/train/classifier.hpp"
#include "slim/train/losses.hpp"
#include "slim/vae/autoencoder.hpp"

namespace slim {

struct StageConfig {
    double lambda_r = 1.0;
    double lambda_g = 1.0;
    double lambda_d = 1.0;
    double lambda_roi = 1.0;
    double lambda_t = 0.01;
    int steps = 5000;
    int batch_size = 8;
    double lr = 1e-4;
    uint64_t seed = 0;
    double enhance_strength = 0.3;
    int enhance_steps = 10;
    bool use_roi_mask = true;    // false: mask identically 1 (ablation)
    bool detach_control = true;  // detach the denoise-term control input from codec gradients
    int checkpoint_every = 1000;
};

// Per-image artifacts precomputed once before training: VAE latent, saliency
// masks at both resolutions, and the embedded RoI caption.
struct TrainItem {
    Tensor image;        // (1,3,H,W)
    Tensor latent;       // (1,C,h,w)
    Tensor mask_image;   // (1,1,H,W)
    Tensor mask_latent;  // (1,1,h,w)
    Tensor caption_emb;
    std::vector<int> caption_tokens;
    std::string caption_text;
    int caption_bits = 0;
    int label = 0;
};

std::vector<TrainItem> prepare_items(const std::vector<LabeledImage>& images, const Autoencoder& vae,
                                     const TaskClassifier& clf, const Denoiser& den);

struct StepLosses {
    double rate = 0, guide = 0, denoise = 0, roi = 0, task = 0, total = 0;
};

// Joint optimization of the codec and the control module; the autoencoder,
// classifier, and base denoiser stay frozen throughout.
class Trainer {
public:
    Trainer(EntropyCodec& codec, Denoiser& denoiser, const Autoencoder& vae, const TaskClassifier& clf,
            const NoiseSchedule& sched, const StageConfig& cfg);

    StepLosses stage1_step(const std::vector<TrainItem>& items, const std::vector<size_t>& batch, Rng& rng);
    StepLosses stage2_step(const std::vector<TrainItem>& items, const std::vector<size_t>& batch, Rng& rng);

    // Runs steps start_step+1 .. cfg.steps, appending rows to
    // <out_dir>/stage<k>_loss.csv and writing <out_dir>/<k>_<step>.ckpt
    // checkpoints. Returns the final checkpoint path. A non-finite total
    // aborts, leaving the last written checkpoint in place.
    std::string run(int stage, const std::vector<TrainItem>& items, const std::string& out_dir, int start_step = 0);

    const StageConfig& config() const { return cfg_; }

private:
    StepLosses step_impl(int stage, const std::vector<TrainItem>& items, const std::vector<size_t>& batch, Rng& rng);

    EntropyCodec& codec_;
    Denoiser& den_;
    const Autoencoder& vae_;
    const TaskClassifier& clf_;
    NoiseSchedule sched_;
    StageConfig cfg_;
    nn::AdamW opt_;
};

// Self-describing bundle of the trainable parts (codec + full denoiser).
void save_stage_checkpoint(const std::string& path, const EntropyCodec& codec, const Denoiser& den, int stage, int step,
                           const nlohmann::json& extra = nlohmann::json::object());

struct StageCheckpoint {
    int stage = 0;
    int step = 0;
    EntropyCodec codec;
    Denoiser denoiser;
    nlohmann::json meta;
};
StageCheckpoint load_stage_checkpoint(const std::string& path);

}  // namespace slim
