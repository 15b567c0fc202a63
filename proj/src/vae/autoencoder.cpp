#include "slim/vae/autoencoder.hpp"

#include <algorithm>
#include <cmath>

#include "slim/core/rng.hpp"

namespace slim {

using ag::Var;

Autoencoder::Autoencoder(uint64_t seed) {
    Rng rng(seed);
    e1_ = nn::Conv2d(3, 32, 3, 2, 1, rng);
    eres_ = nn::ResidualBottleneck(32, 32, rng);
    e2_ = nn::Conv2d(32, 32, 3, 2, 1, rng);
    e3_ = nn::Conv2d(32, 2 * kLatentChannels, 3, 1, 1, rng);
    d1_ = nn::Conv2d(kLatentChannels, 32, 3, 1, 1, rng);
    dres_ = nn::ResidualBottleneck(32, 32, rng);
    d2_ = nn::ConvTranspose2d(32, 32, 3, 2, 1, 1, rng);
    d3_ = nn::ConvTranspose2d(32, 3, 3, 2, 1, 1, rng);
}

void Autoencoder::check_encode_dims(const Shape& s) const {
    if (s.size() != 4 || s[1] != 3)
        throw std::invalid_argument("Autoencoder::encode: expected (B,3,H,W), got " + shape_str(s));
    if (s[2] % kFactor != 0 || s[3] % kFactor != 0)
        throw std::invalid_argument("Autoencoder::encode: dims " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                                    " not divisible by factor " + std::to_string(kFactor));
}

Var Autoencoder::encode_moments(const Var& x) const {
    check_encode_dims(x->shape());
    Var h = ag::gelu(e1_(x));
    h = eres_(h);
    h = ag::gelu(e2_(h));
    return e3_(h);
}

Var Autoencoder::decode_var(const Var& z) const {
    if (z->shape().size() != 4 || z->shape()[1] != kLatentChannels)
        throw std::invalid_argument("Autoencoder::decode: expected (B," + std::to_string(kLatentChannels) +
                                    ",h,w), got " + shape_str(z->shape()));
    Var h = ag::gelu(d1_(z));
    h = dres_(h);
    h = ag::gelu(d2_(h));
    return ag::sigmoid(d3_(h));
}

Tensor Autoencoder::encode(const Tensor& images) const {
    Var moments = encode_moments(ag::constant(images));
    Var mu = ag::slice_channels(moments, 0, kLatentChannels);
    Tensor z = mu->val;
    for (int64_t i = 0; i < z.numel(); ++i) z[i] *= scale_factor_;
    return z;
}

Tensor Autoencoder::decode(const Tensor& latent) const {
    Tensor unscaled = latent;
    for (int64_t i = 0; i < unscaled.numel(); ++i) unscaled[i] /= scale_factor_;
    Tensor out = decode_var(ag::constant(unscaled))->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
    return out;
}

nn::ParamList Autoencoder::params() const {
    nn::ParamList p;
    p.merge("vae.e1", e1_.params("c"));
    p.merge("vae.eres", eres_.params("r"));
    p.merge("vae.e2", e2_.params("c"));
    p.merge("vae.e3", e3_.params("c"));
    p.merge("vae.d1", d1_.params("c"));
    p.merge("vae.dres", dres_.params("r"));
    p.merge("vae.d2", d2_.params("c"));
    p.merge("vae.d3", d3_.params("c"));
    return p;
}

void Autoencoder::save(const std::string& path) const {
    Checkpoint ck;
    ck.meta = meta;
    ck.meta["kind"] = "autoencoder";
    ck.meta["factor"] = kFactor;
    ck.meta["latent_channels"] = kLatentChannels;
    ck.meta["scale_factor"] = scale_factor_;
    ck.put_params(params(), Checkpoint::Dtype::f32);
    ck.save(path);
}

Autoencoder Autoencoder::load_file(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "autoencoder")
        throw std::runtime_error("autoencoder: checkpoint kind mismatch in " + path);
    Autoencoder ae(0);
    ck.load_params(ae.params());
    ae.meta = ck.meta;
    ae.scale_factor_ = ck.meta.value("scale_factor", 1.0);
    ae.freeze();
    return ae;
}

Autoencoder pretrain_autoencoder(const std::vector<LabeledImage>& dataset, const AutoencoderTrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("pretrain_autoencoder: empty dataset");
    Autoencoder ae(cfg.seed);
    Rng rng(cfg.seed ^ 0xAE0001ULL);
    nn::AdamW opt(ae.params().vars(), cfg.lr);
    const int H = dataset[0].height(), W = dataset[0].width();
    const int C = Autoencoder::kLatentChannels;
    for (int step = 0; step < cfg.steps; ++step) {
        const int B = std::min<int>(cfg.batch_size, static_cast<int>(dataset.size()));
        Tensor batch(Shape{B, 3, H, W});
        for (int b = 0; b < B; ++b) {
            const auto& img = dataset[static_cast<size_t>(rng.below(static_cast<int64_t>(dataset.size())))];
            std::copy(img.pixels.vec().begin(), img.pixels.vec().end(),
                      batch.vec().begin() + static_cast<int64_t>(b) * 3 * H * W);
        }
        opt.zero_grad();
        Var x = ag::constant(batch);
        Var moments = ae.encode_moments(x);
        Var mu = ag::slice_channels(moments, 0, C);
        Var logvar = ag::slice_channels(moments, C, 2 * C);
        Tensor eps(mu->shape());
        for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = rng.normal();
        Var z = ag::add(mu, ag::mul(ag::exp(ag::mul_scalar(logvar, 0.5)), ag::constant(eps)));
        Var recon = ae.decode_var(z);
        Var rec_loss = ag::mse(x, recon);
        // KL(q || N(0,1)) per element
        Var kl = ag::mean(ag::mul_scalar(
            ag::sub(ag::add(ag::square(mu), ag::exp(logvar)), ag::add_scalar(logvar, 1.0)), 0.5));
        Var loss = ag::add(rec_loss, ag::mul_scalar(kl, cfg.kl_weight));
        if (!std::isfinite(loss->val.item()))
            throw std::runtime_error("pretrain_autoencoder: diverged at step " + std::to_string(step) +
                                     " (loss not finite)");
        ag::backward(loss);
        opt.step();
    }

    // calibrate scale_factor so the global latent std is ~1
    double sq = 0.0, mean = 0.0;
    int64_t count = 0;
    std::vector<double> stats_per_channel(static_cast<size_t>(C), 0.0);
    for (const auto& img : dataset) {
        Tensor z = ae.encode(img.pixels.reshaped(Shape{1, 3, H, W}));
        for (int64_t i = 0; i < z.numel(); ++i) {
            mean += z[i];
            sq += z[i] * z[i];
        }
        count += z.numel();
    }
    mean /= static_cast<double>(count);
    const double var = sq / static_cast<double>(count) - mean * mean;
    ae.set_scale_factor(1.0 / std::sqrt(std::max(var, 1e-12)));

    // validated reconstruction quality, recorded into the weights header
    double mse_acc = 0.0, mae_max = 0.0;
    for (const auto& img : dataset) {
        Tensor z = ae.encode(img.pixels.reshaped(Shape{1, 3, H, W}));
        Tensor rec = ae.decode(z);
        double se = 0.0, ae_sum = 0.0;
        for (int64_t i = 0; i < rec.numel(); ++i) {
            const double d = rec[i] - img.pixels[i];
            se += d * d;
            ae_sum += std::abs(d);
        }
        mse_acc += se / static_cast<double>(rec.numel());
        mae_max = std::max(mae_max, ae_sum / static_cast<double>(rec.numel()));
    }
    const double mse = mse_acc / static_cast<double>(dataset.size());
    ae.meta["validated_psnr"] = 10.0 * std::log10(1.0 / std::max(mse, 1e-12));
    ae.meta["validated_mae_bound"] = mae_max * 1.05;
    ae.meta["seed"] = cfg.seed;
    ae.meta["steps"] = cfg.steps;
    ae.freeze();
    return ae;
}

}  // namespace slim
