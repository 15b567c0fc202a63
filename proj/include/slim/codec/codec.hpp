#pragma once

#include <functional>
#include <optional>
#include <utility>

#include "slim/codec/bitstream.hpp"
#include "slim/codec/factorized_prior.hpp"
#include "slim/core/checkpoint.hpp"
#include "slim/core/nn.hpp"
#include "slim/core/rng.hpp"
#include "slim/data/caption.hpp"

namespace slim {

struct CodecConfig {
    int latent_channels = 4;
    int latent_downsample = 4;  // source pixels per latent position
    int feature_channels = 32;  // C_y, divisible by slices
    int hyper_channels = 8;     // C_z
    int slices = 2;             // S
    int context_mid = 48;
    double sigma_min = 0.01;
    double likelihood_floor = 1.0 / 32768.0;  // 2^-15 per symbol
};

// ---- quantization ----
// train mode: values + uniform noise in [-0.5, 0.5)
ag::Var quantize_noise(const ag::Var& values, Rng& rng);
// eval mode: round(values - means) + means, half away from zero
Tensor quantize_eval(const Tensor& values, const Tensor& means);
Tensor round_half_away(const Tensor& values);

// Elementwise estimated bits of mean-centered Gaussian-coded symbols:
// -log2(Phi((v-mu+0.5)/sigma) - Phi((v-mu-0.5)/sigma)), likelihood floored.
ag::Var gaussian_bits_elem(const ag::Var& values, const ag::Var& mu, const ag::Var& sigma, double floor);
double gaussian_bits_scalar(double value, double mu, double sigma, double floor);

// (i+j) even -> anchor. Returns (anchor, non-anchor) coordinate lists.
std::pair<std::vector<std::pair<int, int>>, std::vector<std::pair<int, int>>> checkerboard_partition(int h, int w);

struct TrainForward {
    ag::Var bpp;         // estimated (feature + hyper) bits per source pixel
    ag::Var latent_hat;  // synthesis of the noisy-quantized features
    double feature_bits = 0.0;
    double hyper_bits = 0.0;
};

struct BitAllocationMap {
    Tensor bits;  // (h_y, w_y), channel-summed estimated bits
    double feature_bits = 0.0;
    double hyper_bits = 0.0;
};

// Compressor-decompressor pair: analysis/synthesis transforms, hyperprior
// with a learned factorized prior, checkerboard-channel context parameter
// prediction, and range-coded streams that reproduce the quantized symbols
// bit-exactly.
class EntropyCodec {
public:
    EntropyCodec() = default;
    EntropyCodec(const CodecConfig& cfg, uint64_t seed);

    const CodecConfig& config() const { return cfg_; }

    ag::Var analyze(const ag::Var& latent) const;
    ag::Var synthesize(const ag::Var& y_hat) const;
    ag::Var hyper_analyze(const ag::Var& y) const;
    ag::Var hyper_synthesize(const ag::Var& z_hat) const;

    // (mu, sigma) for one slice. `prev_slices` are the dequantized earlier
    // slices; `anchor_masked` (non-anchor positions zeroed) switches to the
    // non-anchor network. sigma >= sigma_min.
    std::pair<ag::Var, ag::Var> predict_params(const ag::Var& hyper_features, const std::vector<ag::Var>& prev_slices,
                                               int slice, const ag::Var* anchor_masked) const;

    // Differentiable noise-quantized forward pass for training.
    TrainForward train_forward(const ag::Var& latent, Rng& rng, int image_h, int image_w) const;

    // Eval-mode rate estimate on hard-quantized symbols.
    BitAllocationMap bit_allocation_map(const Tensor& latent) const;

    Bitstream compress(const Tensor& latent, int image_h, int image_w,
                       const std::optional<Caption>& caption = std::nullopt) const;
    Tensor decompress(const Bitstream& bs) const;           // reconstructed latent
    Tensor decompress_features(const Bitstream& bs) const;  // dequantized features y_hat

    // Hard-quantized feature/hyper symbols as produced by compress.
    struct Symbols {
        Tensor features;       // integer-valued (1,C_y,h_y,w_y), y_hat - mu rounded
        Tensor hyper;          // integer-valued (1,C_z,h_z,w_z)
        Tensor features_deq;   // y_hat = symbols + mu
    };
    Symbols quantize_for_coding(const Tensor& latent) const;

    nn::ParamList params() const;
    void freeze() { params().set_requires_grad(false); }

    nlohmann::json meta;
    void save(const std::string& path) const;
    static EntropyCodec load_file(const std::string& path);

private:
    // Drives the slice/checkerboard coding schedule: calls `code` once per
    // (slice, parity, channel, position) in the fixed wire order and returns
    // the dequantized features it produced.
    using CodeFn = std::function<double(int slice, bool anchor, int c_local, int i, int j, double mu, double sigma)>;
    Tensor feature_passes(const Tensor& hyper_features, int h, int w, const CodeFn& code) const;
    Tensor decode_hyper(const Bitstream& bs, int h_z, int w_z) const;

    CodecConfig cfg_;
    // latent analysis / synthesis transforms
    nn::Conv2d ga_in_;
    nn::ResidualBottleneck ga_rb1_;
    nn::ResidualDown ga_down_;
    nn::ResidualBottleneck ga_rb2_;
    nn::ResidualBottleneck gs_rb1_;
    nn::ResidualUp gs_up_;
    nn::ResidualBottleneck gs_rb2_;
    nn::Conv2d gs_out_;
    // hyper transforms
    nn::Conv2d ha1_, ha2_;
    nn::ConvTranspose2d hs1_;
    nn::Conv2d hs2_;
    // per-slice context parameter predictors (anchor and non-anchor)
    std::vector<nn::Conv2d> ctx_a1_, ctx_a2_, ctx_n1_, ctx_n2_;
    FactorizedPrior prior_;
};

}  // namespace slim
