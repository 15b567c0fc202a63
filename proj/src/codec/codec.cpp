#include "slim/codec/codec.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "slim/codec/range_coder.hpp"
#include "slim/core/zlib_util.hpp"

namespace slim {

using ag::Var;

namespace {

constexpr double kLog2e = 1.4426950408889634;  // 1/ln(2)

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

uint32_t zigzag32(int32_t v) { return (static_cast<uint32_t>(v) << 1) ^ static_cast<uint32_t>(v >> 31); }
int32_t unzigzag32(uint32_t v) { return static_cast<int32_t>((v >> 1) ^ (~(v & 1) + 1)); }

// Quantized frequency table over integer symbols [lo, lo+n-1] plus a trailing
// escape slot; escapes are followed by a raw zig-zag u32.
struct FreqTable {
    int lo = 0;
    std::vector<uint32_t> freq;  // last entry is the escape symbol
    std::vector<uint32_t> cum;   // size freq.size() + 1
    uint32_t total = 0;

    void finalize() {
        cum.assign(freq.size() + 1, 0);
        for (size_t i = 0; i < freq.size(); ++i) cum[i + 1] = cum[i] + freq[i];
        total = cum.back();
    }

    void encode(RangeEncoder& enc, int64_t q) const {
        const size_t esc = freq.size() - 1;
        size_t idx = esc;
        if (q >= lo && q < lo + static_cast<int64_t>(esc)) idx = static_cast<size_t>(q - lo);
        enc.encode(cum[idx], freq[idx], total);
        if (idx == esc) enc.encode_raw_u32(zigzag32(static_cast<int32_t>(q)));
    }

    int64_t decode(RangeDecoder& dec) const {
        const uint32_t target = dec.decode_target(total);
        size_t idx = 0;
        while (cum[idx + 1] <= target) ++idx;
        dec.advance(cum[idx], freq[idx], total);
        if (idx == freq.size() - 1) return unzigzag32(dec.decode_raw_u32());
        return lo + static_cast<int64_t>(idx);
    }
};

// Scale small enough that max(1, round(p*scale)) sums below the coder's
// 16-bit total even with every slot clamped up to 1.
constexpr double kFreqScale = 60000.0;

FreqTable quantize_pmf(int lo, const std::vector<double>& p) {
    FreqTable t;
    t.lo = lo;
    t.freq.resize(p.size());
    for (size_t i = 0; i < p.size(); ++i)
        t.freq[i] = static_cast<uint32_t>(std::max<int64_t>(1, std::llround(p[i] * kFreqScale)));
    t.finalize();
    return t;
}

// The window and floor mirror the rate estimate: symbols the estimate floors
// at -log2(likelihood_floor) bits must not fall through to the raw escape.
FreqTable gaussian_freq_table(double sigma, double floor) {
    const int reach = std::min(255, std::max(64, static_cast<int>(std::ceil(4.0 * sigma)) + 2));
    std::vector<double> p(static_cast<size_t>(2 * reach + 2), 0.0);
    double used = 0.0;
    for (int q = -reach; q <= reach; ++q) {
        const double pq = std::max(phi((q + 0.5) / sigma) - phi((q - 0.5) / sigma), floor);
        p[static_cast<size_t>(q + reach)] = pq;
        used += pq;
    }
    p.back() = std::max(1e-6, 1.0 - used);  // escape mass
    return quantize_pmf(-reach, p);
}

FreqTable prior_freq_table(const FactorizedPrior& prior, int channel) {
    const int reach = 64;
    std::vector<double> p(static_cast<size_t>(2 * reach + 2), 0.0);
    double used = 0.0;
    for (int q = -reach; q <= reach; ++q) {
        const double pq = std::max(0.0, prior.pmf(channel, q));
        p[static_cast<size_t>(q + reach)] = pq;
        used += pq;
    }
    p.back() = std::max(1e-6, 1.0 - used);
    return quantize_pmf(-reach, p);
}

Tensor channel_slice(const Tensor& t, int c0, int c1) {
    const Shape& s = t.shape();
    Tensor out(Shape{s[0], c1 - c0, s[2], s[3]});
    for (int b = 0; b < s[0]; ++b)
        for (int c = c0; c < c1; ++c)
            for (int i = 0; i < s[2]; ++i)
                for (int j = 0; j < s[3]; ++j) out.at(b, c - c0, i, j) = t.at(b, c, i, j);
    return out;
}

// (B,1,h,w) checkerboard indicator, 1 on the requested parity.
Tensor parity_mask(int batch, int h, int w, bool anchor) {
    Tensor m(Shape{batch, 1, h, w});
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) m.at(b, 0, i, j) = (((i + j) % 2 == 0) == anchor) ? 1.0 : 0.0;
    return m;
}

}  // namespace

Var quantize_noise(const Var& values, Rng& rng) {
    Tensor noise(values->shape());
    for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = rng.uniform(-0.5, 0.5);
    return ag::add(values, ag::constant(std::move(noise)));
}

Tensor round_half_away(const Tensor& values) {
    Tensor out = values;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::round(out[i]);
    return out;
}

Tensor quantize_eval(const Tensor& values, const Tensor& means) {
    if (!values.same_shape(means)) throw std::invalid_argument("quantize_eval: shape mismatch");
    Tensor out = values;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::round(values[i] - means[i]) + means[i];
    return out;
}

Var gaussian_bits_elem(const Var& values, const Var& mu, const Var& sigma, double floor) {
    Var centered = ag::sub(values, mu);
    Var upper = ag::normal_cdf(ag::div(ag::add_scalar(centered, 0.5), sigma));
    Var lower = ag::normal_cdf(ag::div(ag::add_scalar(centered, -0.5), sigma));
    Var p = ag::clamp_min(ag::sub(upper, lower), floor);
    return ag::mul_scalar(ag::neg(ag::log(p)), kLog2e);
}

double gaussian_bits_scalar(double value, double mu, double sigma, double floor) {
    const double p = std::max(phi((value - mu + 0.5) / sigma) - phi((value - mu - 0.5) / sigma), floor);
    return -std::log2(p);
}

std::pair<std::vector<std::pair<int, int>>, std::vector<std::pair<int, int>>> checkerboard_partition(int h, int w) {
    std::vector<std::pair<int, int>> anchors, nonanchors;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) ((i + j) % 2 == 0 ? anchors : nonanchors).emplace_back(i, j);
    return {std::move(anchors), std::move(nonanchors)};
}

EntropyCodec::EntropyCodec(const CodecConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg.feature_channels % cfg.slices != 0)
        throw std::invalid_argument("EntropyCodec: feature_channels must be divisible by slices");
    Rng rng(seed);
    const int cy = cfg.feature_channels;
    const int cz = cfg.hyper_channels;
    const int sc = cy / cfg.slices;
    ga_in_ = nn::Conv2d(cfg.latent_channels, cy, 3, 1, 1, rng);
    ga_rb1_ = nn::ResidualBottleneck(cy, cy / 2, rng);
    ga_down_ = nn::ResidualDown(cy, cy, rng);
    ga_rb2_ = nn::ResidualBottleneck(cy, cy / 2, rng);
    gs_rb1_ = nn::ResidualBottleneck(cy, cy / 2, rng);
    gs_up_ = nn::ResidualUp(cy, cy, rng);
    gs_rb2_ = nn::ResidualBottleneck(cy, cy / 2, rng);
    gs_out_ = nn::Conv2d(cy, cfg.latent_channels, 3, 1, 1, rng);
    ha1_ = nn::Conv2d(cy, cz, 3, 2, 1, rng);
    ha2_ = nn::Conv2d(cz, cz, 3, 1, 1, rng);
    hs1_ = nn::ConvTranspose2d(cz, cy, 3, 2, 1, 1, rng);
    hs2_ = nn::Conv2d(cy, cy, 3, 1, 1, rng);
    for (int k = 0; k < cfg.slices; ++k) {
        const int ctx_in = cy + k * sc;  // hyper features + earlier dequantized slices
        ctx_a1_.push_back(nn::Conv2d(ctx_in, cfg.context_mid, 3, 1, 1, rng));
        ctx_a2_.push_back(nn::Conv2d(cfg.context_mid, 2 * sc, 3, 1, 1, rng));
        ctx_n1_.push_back(nn::Conv2d(ctx_in + sc, cfg.context_mid, 3, 1, 1, rng));
        ctx_n2_.push_back(nn::Conv2d(cfg.context_mid, 2 * sc, 3, 1, 1, rng));
    }
    prior_ = FactorizedPrior(cz, rng);
}

Var EntropyCodec::analyze(const Var& latent) const {
    const Shape& s = latent->shape();
    if (s.size() != 4 || s[1] != cfg_.latent_channels)
        throw std::invalid_argument("EntropyCodec::analyze: expected (B," + std::to_string(cfg_.latent_channels) +
                                    ",h,w), got " + shape_str(s));
    if (s[2] % 2 != 0 || s[3] % 2 != 0)
        throw std::invalid_argument("EntropyCodec::analyze: latent dims must be even, got " + shape_str(s));
    Var x = ag::gelu(ga_in_(latent));
    x = ga_rb1_(x);
    x = ga_down_(x);
    return ga_rb2_(x);
}

Var EntropyCodec::synthesize(const Var& y_hat) const {
    Var x = gs_rb1_(y_hat);
    x = gs_up_(x);
    x = gs_rb2_(x);
    return gs_out_(x);
}

Var EntropyCodec::hyper_analyze(const Var& y) const { return ha2_(ag::leaky_relu(ha1_(y), 0.2)); }

Var EntropyCodec::hyper_synthesize(const Var& z_hat) const { return hs2_(ag::leaky_relu(hs1_(z_hat), 0.2)); }

std::pair<Var, Var> EntropyCodec::predict_params(const Var& hyper_features, const std::vector<Var>& prev_slices,
                                                 int slice, const Var* anchor_masked) const {
    if (slice < 0 || slice >= cfg_.slices) throw std::invalid_argument("predict_params: slice out of range");
    if (static_cast<int>(prev_slices.size()) != slice)
        throw std::invalid_argument("predict_params: slice " + std::to_string(slice) + " needs exactly " +
                                    std::to_string(slice) + " earlier slices");
    std::vector<Var> parts{hyper_features};
    parts.insert(parts.end(), prev_slices.begin(), prev_slices.end());
    if (anchor_masked != nullptr) parts.push_back(*anchor_masked);
    Var x = parts.size() == 1 ? parts[0] : ag::concat_channels(parts);
    const size_t k = static_cast<size_t>(slice);
    const nn::Conv2d& c1 = anchor_masked ? ctx_n1_[k] : ctx_a1_[k];
    const nn::Conv2d& c2 = anchor_masked ? ctx_n2_[k] : ctx_a2_[k];
    Var out = c2(ag::leaky_relu(c1(x), 0.2));
    const int sc = cfg_.feature_channels / cfg_.slices;
    Var mu = ag::slice_channels(out, 0, sc);
    Var sigma = ag::add_scalar(ag::softplus(ag::slice_channels(out, sc, 2 * sc)), cfg_.sigma_min);
    return {mu, sigma};
}

TrainForward EntropyCodec::train_forward(const Var& latent, Rng& rng, int image_h, int image_w) const {
    const int batch = latent->shape()[0];
    Var y = analyze(latent);
    const int h = y->shape()[2], w = y->shape()[3];
    Var z = hyper_analyze(y);
    Var z_tilde = quantize_noise(z, rng);
    Var lik = prior_.likelihood(z_tilde);
    Var hyper_bits = ag::mul_scalar(ag::neg(ag::sum(ag::log(ag::clamp_min(lik, cfg_.likelihood_floor)))), kLog2e);
    Var psi = hyper_synthesize(z_tilde);
    Var y_tilde = quantize_noise(y, rng);

    const int sc = cfg_.feature_channels / cfg_.slices;
    Var anchor_mask = ag::constant(parity_mask(batch, h, w, true));
    Var nonanchor_mask = ag::constant(parity_mask(batch, h, w, false));
    Var feature_bits;
    std::vector<Var> prev;
    for (int k = 0; k < cfg_.slices; ++k) {
        Var slice_y = ag::slice_channels(y_tilde, k * sc, (k + 1) * sc);
        auto [mu_a, sg_a] = predict_params(psi, prev, k, nullptr);
        Var masked = ag::mul(slice_y, anchor_mask);
        auto [mu_n, sg_n] = predict_params(psi, prev, k, &masked);
        Var bits_a = ag::sum(ag::mul(gaussian_bits_elem(slice_y, mu_a, sg_a, cfg_.likelihood_floor), anchor_mask));
        Var bits_n = ag::sum(ag::mul(gaussian_bits_elem(slice_y, mu_n, sg_n, cfg_.likelihood_floor), nonanchor_mask));
        Var bits_k = ag::add(bits_a, bits_n);
        feature_bits = feature_bits ? ag::add(feature_bits, bits_k) : bits_k;
        prev.push_back(slice_y);
    }

    TrainForward out;
    const double denom = static_cast<double>(batch) * image_h * image_w;
    out.bpp = ag::mul_scalar(ag::add(feature_bits, hyper_bits), 1.0 / denom);
    out.latent_hat = synthesize(y_tilde);
    out.feature_bits = feature_bits->val.item();
    out.hyper_bits = hyper_bits->val.item();
    return out;
}

Tensor EntropyCodec::feature_passes(const Tensor& hyper_features, int h, int w, const CodeFn& code) const {
    const int sc = cfg_.feature_channels / cfg_.slices;
    auto [anchors, nonanchors] = checkerboard_partition(h, w);
    Tensor y_hat(Shape{1, cfg_.feature_channels, h, w}, 0.0);
    Var psi = ag::constant(hyper_features);
    std::vector<Var> prev;
    for (int k = 0; k < cfg_.slices; ++k) {
        auto [mu_a, sg_a] = predict_params(psi, prev, k, nullptr);
        for (int c = 0; c < sc; ++c)
            for (const auto& [i, j] : anchors)
                y_hat.at(0, k * sc + c, i, j) = code(k, true, c, i, j, mu_a->val.at(0, c, i, j), sg_a->val.at(0, c, i, j));
        // non-anchor positions of the current slice are still zero here, so
        // this tensor is exactly the anchor-masked context
        Var masked = ag::constant(channel_slice(y_hat, k * sc, (k + 1) * sc));
        auto [mu_n, sg_n] = predict_params(psi, prev, k, &masked);
        for (int c = 0; c < sc; ++c)
            for (const auto& [i, j] : nonanchors)
                y_hat.at(0, k * sc + c, i, j) = code(k, false, c, i, j, mu_n->val.at(0, c, i, j), sg_n->val.at(0, c, i, j));
        prev.push_back(ag::constant(channel_slice(y_hat, k * sc, (k + 1) * sc)));
    }
    return y_hat;
}

EntropyCodec::Symbols EntropyCodec::quantize_for_coding(const Tensor& latent) const {
    if (latent.rank() != 4 || latent.dim(0) != 1)
        throw std::invalid_argument("EntropyCodec: coding paths take a single latent (1,C,h,w)");
    Tensor y = analyze(ag::constant(latent))->val;
    Tensor z = hyper_analyze(ag::constant(y))->val;
    Symbols sym;
    sym.hyper = round_half_away(z);
    Tensor psi = hyper_synthesize(ag::constant(sym.hyper))->val;
    sym.features = Tensor(Shape{1, cfg_.feature_channels, y.dim(2), y.dim(3)});
    const int sc = cfg_.feature_channels / cfg_.slices;
    sym.features_deq = feature_passes(psi, y.dim(2), y.dim(3), [&](int k, bool, int c, int i, int j, double mu, double) {
        const double q = std::round(y.at(0, k * sc + c, i, j) - mu);
        sym.features.at(0, k * sc + c, i, j) = q;
        return q + mu;
    });
    return sym;
}

BitAllocationMap EntropyCodec::bit_allocation_map(const Tensor& latent) const {
    if (latent.rank() != 4 || latent.dim(0) != 1)
        throw std::invalid_argument("EntropyCodec: coding paths take a single latent (1,C,h,w)");
    Tensor y = analyze(ag::constant(latent))->val;
    Tensor z = hyper_analyze(ag::constant(y))->val;
    Tensor qz = round_half_away(z);
    BitAllocationMap out;
    for (int c = 0; c < qz.dim(1); ++c)
        for (int i = 0; i < qz.dim(2); ++i)
            for (int j = 0; j < qz.dim(3); ++j)
                out.hyper_bits += -std::log2(std::max(prior_.pmf(c, qz.at(0, c, i, j)), cfg_.likelihood_floor));
    Tensor psi = hyper_synthesize(ag::constant(qz))->val;
    out.bits = Tensor(Shape{y.dim(2), y.dim(3)}, 0.0);
    const int sc = cfg_.feature_channels / cfg_.slices;
    feature_passes(psi, y.dim(2), y.dim(3), [&](int k, bool, int c, int i, int j, double mu, double sigma) {
        const double deq = std::round(y.at(0, k * sc + c, i, j) - mu) + mu;
        out.bits.at(i, j) += gaussian_bits_scalar(deq, mu, sigma, cfg_.likelihood_floor);
        return deq;
    });
    out.feature_bits = out.bits.sum();
    return out;
}

Bitstream EntropyCodec::compress(const Tensor& latent, int image_h, int image_w,
                                 const std::optional<Caption>& caption) const {
    if (latent.rank() != 4 || latent.dim(0) != 1)
        throw std::invalid_argument("EntropyCodec: coding paths take a single latent (1,C,h,w)");
    Tensor y = analyze(ag::constant(latent))->val;
    Tensor z = hyper_analyze(ag::constant(y))->val;
    Tensor qz = round_half_away(z);

    Bitstream bs;
    bs.height = static_cast<uint16_t>(image_h);
    bs.width = static_cast<uint16_t>(image_w);
    bs.feature_channels = static_cast<uint16_t>(cfg_.feature_channels);
    bs.slices = static_cast<uint8_t>(cfg_.slices);

    {
        RangeEncoder enc;
        for (int c = 0; c < qz.dim(1); ++c) {
            const FreqTable table = prior_freq_table(prior_, c);
            for (int i = 0; i < qz.dim(2); ++i)
                for (int j = 0; j < qz.dim(3); ++j) table.encode(enc, std::llround(qz.at(0, c, i, j)));
        }
        bs.hyper_segment = enc.finish();
    }

    Tensor psi = hyper_synthesize(ag::constant(qz))->val;
    std::vector<RangeEncoder> anchor_enc(static_cast<size_t>(cfg_.slices));
    std::vector<RangeEncoder> nonanchor_enc(static_cast<size_t>(cfg_.slices));
    const int sc = cfg_.feature_channels / cfg_.slices;
    feature_passes(psi, y.dim(2), y.dim(3), [&](int k, bool anchor, int c, int i, int j, double mu, double sigma) {
        const int64_t q = std::llround(std::round(y.at(0, k * sc + c, i, j) - mu));
        gaussian_freq_table(sigma, cfg_.likelihood_floor).encode(anchor ? anchor_enc[static_cast<size_t>(k)] : nonanchor_enc[static_cast<size_t>(k)], q);
        return static_cast<double>(q) + mu;
    });
    for (int k = 0; k < cfg_.slices; ++k) {
        bs.anchor_segments.push_back(anchor_enc[static_cast<size_t>(k)].finish());
        bs.nonanchor_segments.push_back(nonanchor_enc[static_cast<size_t>(k)].finish());
    }

    if (caption) {
        bs.flags |= Bitstream::kFlagCaption;
        bs.caption_payload = deflate_bytes(caption->text);
    }
    return bs;
}

Tensor EntropyCodec::decode_hyper(const Bitstream& bs, int h_z, int w_z) const {
    Tensor qz(Shape{1, cfg_.hyper_channels, h_z, w_z});
    RangeDecoder dec(bs.hyper_segment.data(), bs.hyper_segment.size());
    for (int c = 0; c < cfg_.hyper_channels; ++c) {
        const FreqTable table = prior_freq_table(prior_, c);
        for (int i = 0; i < h_z; ++i)
            for (int j = 0; j < w_z; ++j) qz.at(0, c, i, j) = static_cast<double>(table.decode(dec));
    }
    return qz;
}

Tensor EntropyCodec::decompress_features(const Bitstream& bs) const {
    if (bs.feature_channels != cfg_.feature_channels || bs.slices != cfg_.slices)
        throw std::invalid_argument("EntropyCodec: stream layout (" + std::to_string(bs.feature_channels) + " channels, " +
                                    std::to_string(bs.slices) + " slices) does not match this codec");
    const int down = cfg_.latent_downsample * 2;  // latent stride times analysis stride
    if (bs.height % (down * 2) != 0 || bs.width % (down * 2) != 0)
        throw std::invalid_argument("EntropyCodec: stream dimensions not divisible by the transform stride");
    const int h = bs.height / down, w = bs.width / down;
    Tensor qz = decode_hyper(bs, h / 2, w / 2);
    Tensor psi = hyper_synthesize(ag::constant(qz))->val;

    std::vector<std::unique_ptr<RangeDecoder>> anchor_dec, nonanchor_dec;
    for (int k = 0; k < cfg_.slices; ++k) {
        const auto& a = bs.anchor_segments[static_cast<size_t>(k)];
        const auto& n = bs.nonanchor_segments[static_cast<size_t>(k)];
        anchor_dec.push_back(std::make_unique<RangeDecoder>(a.data(), a.size()));
        nonanchor_dec.push_back(std::make_unique<RangeDecoder>(n.data(), n.size()));
    }
    return feature_passes(psi, h, w, [&](int k, bool anchor, int, int, int, double mu, double sigma) {
        RangeDecoder& dec = anchor ? *anchor_dec[static_cast<size_t>(k)] : *nonanchor_dec[static_cast<size_t>(k)];
        return static_cast<double>(gaussian_freq_table(sigma, cfg_.likelihood_floor).decode(dec)) + mu;
    });
}

Tensor EntropyCodec::decompress(const Bitstream& bs) const {
    return synthesize(ag::constant(decompress_features(bs)))->val;
}

nn::ParamList EntropyCodec::params() const {
    nn::ParamList p;
    p.merge("ga", ga_in_.params("in"));
    p.merge("ga", ga_rb1_.params("rb1"));
    p.merge("ga", ga_down_.params("down"));
    p.merge("ga", ga_rb2_.params("rb2"));
    p.merge("gs", gs_rb1_.params("rb1"));
    p.merge("gs", gs_up_.params("up"));
    p.merge("gs", gs_rb2_.params("rb2"));
    p.merge("gs", gs_out_.params("out"));
    p.merge("ha", ha1_.params("c1"));
    p.merge("ha", ha2_.params("c2"));
    p.merge("hs", hs1_.params("c1"));
    p.merge("hs", hs2_.params("c2"));
    for (int k = 0; k < cfg_.slices; ++k) {
        const std::string base = "ctx.s" + std::to_string(k);
        const size_t i = static_cast<size_t>(k);
        p.merge(base, ctx_a1_[i].params("a1"));
        p.merge(base, ctx_a2_[i].params("a2"));
        p.merge(base, ctx_n1_[i].params("n1"));
        p.merge(base, ctx_n2_[i].params("n2"));
    }
    for (const auto& [name, v] : prior_.params().items) p.add(name, v);
    return p;
}

void EntropyCodec::save(const std::string& path) const {
    Checkpoint ck;
    ck.meta = meta;
    ck.meta["kind"] = "codec";
    ck.meta["config"] = {{"latent_channels", cfg_.latent_channels},
                         {"latent_downsample", cfg_.latent_downsample},
                         {"feature_channels", cfg_.feature_channels},
                         {"hyper_channels", cfg_.hyper_channels},
                         {"slices", cfg_.slices},
                         {"context_mid", cfg_.context_mid},
                         {"sigma_min", cfg_.sigma_min},
                         {"likelihood_floor", cfg_.likelihood_floor}};
    // f64 blobs: decode must reproduce the encoder's tables bit-exactly
    ck.put_params(params(), Checkpoint::Dtype::f64);
    ck.save(path);
}

EntropyCodec EntropyCodec::load_file(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "codec")
        throw std::runtime_error("EntropyCodec: " + path + " is not a codec checkpoint");
    const auto& c = ck.meta.at("config");
    CodecConfig cfg;
    cfg.latent_channels = c.at("latent_channels");
    cfg.latent_downsample = c.at("latent_downsample");
    cfg.feature_channels = c.at("feature_channels");
    cfg.hyper_channels = c.at("hyper_channels");
    cfg.slices = c.at("slices");
    cfg.context_mid = c.at("context_mid");
    cfg.sigma_min = c.at("sigma_min");
    cfg.likelihood_floor = c.at("likelihood_floor");
    EntropyCodec codec(cfg, 0);
    ck.load_params(codec.params());
    codec.meta = ck.meta;
    return codec;
}

}  // namespace slim
