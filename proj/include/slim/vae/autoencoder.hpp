#pragma once

#include <string>
#include <vector>

#include "slim/core/checkpoint.hpp"
#include "slim/core/nn.hpp"
#include "slim/data/dataset.hpp"

namespace slim {

struct LatentTensor {
    Tensor values;  // (B, C_lat, h, w)
    double scale_factor = 1.0;
};

struct AutoencoderTrainConfig {
    int steps = 3000;
    int batch_size = 8;
    double lr = 1e-3;
    double kl_weight = 1e-4;
    uint64_t seed = 0;
};

// Toy stand-in for the diffusion VAE: images to compact latents and back.
// Encoding is deterministic (posterior mean, scaled so latent std is near 1).
class Autoencoder {
public:
    static constexpr int kFactor = kDownsampleFactor;
    static constexpr int kLatentChannels = 4;

    Autoencoder() = default;
    explicit Autoencoder(uint64_t seed);

    // graph-building passes
    ag::Var encode_moments(const ag::Var& x) const;  // (B,3,H,W) -> (B,2*C_lat,h,w) mu|logvar
    ag::Var decode_var(const ag::Var& z) const;      // (B,C_lat,h,w) -> (B,3,H,W) in (0,1)

    // deterministic inference
    Tensor encode(const Tensor& images) const;  // posterior mean * scale_factor
    Tensor decode(const Tensor& latent) const;  // clamped to [0,1]

    double scale_factor() const { return scale_factor_; }
    void set_scale_factor(double s) { scale_factor_ = s; }

    nn::ParamList params() const;
    void freeze() { params().set_requires_grad(false); }

    void save(const std::string& path) const;
    static Autoencoder load_file(const std::string& path);

    nlohmann::json meta;

private:
    void check_encode_dims(const Shape& s) const;

    nn::Conv2d e1_, e2_, e3_;
    nn::ResidualBottleneck eres_;
    nn::Conv2d d1_;
    nn::ResidualBottleneck dres_;
    nn::ConvTranspose2d d2_, d3_;
    double scale_factor_ = 1.0;
};

// Minimizes pixel MSE + a small KL regularizer, calibrates scale_factor so the
// global latent std is ~1, records validated PSNR/MAE into the weights header,
// and freezes the result.
Autoencoder pretrain_autoencoder(const std::vector<LabeledImage>& dataset, const AutoencoderTrainConfig& cfg);

}  // namespace slim
