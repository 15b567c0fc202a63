#pragma once

#include <string>
#include <vector>

#include "slim/core/checkpoint.hpp"
#include "slim/core/nn.hpp"
#include "slim/core/rng.hpp"
#include "slim/diffusion/schedule.hpp"

namespace slim {

// Fixed random embedding table with positional mixing; frozen stand-in for a
// text encoder. Deterministic: same tokens always give the same sequence.
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(int vocab_size, int dim, int max_len, uint64_t seed);

    // (max_len, dim); truncates long inputs, pads with the null token (id 0)
    Tensor encode(const std::vector<int>& token_ids) const;

    int dim() const { return dim_; }
    int max_len() const { return max_len_; }
    int vocab_size() const { return vocab_; }

private:
    int vocab_ = 0, dim_ = 0, max_len_ = 0;
    Tensor embed_;  // (V, D)
    Tensor pos_;    // (L, D)
    Tensor mix_;    // (D, D)
};

struct DenoiserConfig {
    int latent_channels = 4;
    int base_channels = 32;
    int text_vocab = 0;  // must be set from the caption vocabulary
    int text_dim = 16;
    int text_len = 8;
    int attn_dim = 16;
    int time_dim = 16;
};

// Time-embedded conv backbone with caption cross-attention (the frozen base)
// plus a trainable control branch whose zero-initialized fusion convs inject
// the decompressed latent. Forward passes build graphs for a single image.
class Denoiser {
public:
    Denoiser() = default;
    Denoiser(const DenoiserConfig& cfg, uint64_t seed);

    const DenoiserConfig& config() const { return cfg_; }
    Tensor embed_caption(const std::vector<int>& token_ids) const { return text_.encode(token_ids); }

    // eps prediction for z_t (1,C,h,w); control == nullptr runs the bare base
    ag::Var predict_noise(const ag::Var& z_t, int t, const Tensor& caption, const ag::Var* control,
                          const NoiseSchedule& sched) const;

    // sample t ~ U[1,T], eps ~ N(0,1); MSE between eps and the prediction
    ag::Var denoise_loss(const ag::Var& z, const Tensor& caption, const ag::Var* control, const NoiseSchedule& sched,
                         Rng& rng) const;

    // Partial-noise to tau = round(strength*T), then deterministic
    // (variance-zero) denoising updates with the input latent as control.
    // Only the final update keeps its graph; earlier steps run value-only.
    ag::Var enhance(const ag::Var& z_hat, const Tensor& caption, const NoiseSchedule& sched, int steps, double strength,
                    Rng& rng, bool use_control = true) const;
    Tensor enhance(const Tensor& z_hat, const Tensor& caption, const NoiseSchedule& sched, int steps, double strength,
                   Rng& rng, bool use_control = true) const;

    nn::ParamList base_params() const;
    nn::ParamList control_params() const;
    nn::ParamList params() const;
    void freeze_base() { base_params().set_requires_grad(false); }

    nlohmann::json meta;
    nlohmann::json config_json() const;  // architecture plus the text-encoder seed
    static Denoiser from_config_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static Denoiser load_file(const std::string& path);

private:
    ag::Var time_bias(int t) const;
    ag::Var cross_attention(const ag::Var& h, const Tensor& caption) const;

    DenoiserConfig cfg_;
    TextEncoder text_;
    uint64_t text_seed_ = 0;
    // base
    nn::Linear t1_, t2_;
    nn::Conv2d in_;
    nn::Conv2d b1a_, b1b_, b2a_, b2b_;
    nn::Linear wq_, wk_, wv_, wo_;
    nn::Conv2d out_;
    // control branch
    nn::Conv2d ctrl_in_, ctrl_mid_;
    nn::Conv2d fuse1_, fuse2_;  // zero-initialized
};

struct DenoiserTrainConfig {
    int steps = 1200;
    double lr = 1e-3;
    uint64_t seed = 0;
};

// Trains the base denoiser (no control input) on clean latents, records the
// validated loss in meta, freezes the base. Control stays zero-initialized.
Denoiser pretrain_denoiser(const std::vector<Tensor>& latents, const std::vector<std::vector<int>>& captions,
                           const NoiseSchedule& sched, const DenoiserConfig& mcfg, const DenoiserTrainConfig& cfg);

}  // namespace slim
