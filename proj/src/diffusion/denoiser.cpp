#include "slim/diffusion/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace slim {

using ag::Var;

TextEncoder::TextEncoder(int vocab_size, int dim, int max_len, uint64_t seed)
    : vocab_(vocab_size), dim_(dim), max_len_(max_len) {
    Rng rng(seed);
    auto randt = [&](Shape s, double scale) {
        Tensor t(std::move(s));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
        return t;
    };
    embed_ = randt(Shape{vocab_, dim_}, 1.0);
    pos_ = randt(Shape{max_len_, dim_}, 0.3);
    mix_ = randt(Shape{dim_, dim_}, 1.0 / std::sqrt(static_cast<double>(dim_)));
}

Tensor TextEncoder::encode(const std::vector<int>& token_ids) const {
    Tensor out(Shape{max_len_, dim_});
    for (int i = 0; i < max_len_; ++i) {
        int tok = i < static_cast<int>(token_ids.size()) ? token_ids[static_cast<size_t>(i)] : 0;
        if (tok < 0 || tok >= vocab_)
            throw std::out_of_range("TextEncoder: token id " + std::to_string(tok) + " outside vocabulary of " +
                                    std::to_string(vocab_));
        for (int d = 0; d < dim_; ++d) {
            double acc = 0.0;
            for (int e = 0; e < dim_; ++e) acc += (embed_.at(tok, e) + pos_.at(i, e)) * mix_.at(e, d);
            out.at(i, d) = std::tanh(acc);
        }
    }
    return out;
}

Denoiser::Denoiser(const DenoiserConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg.text_vocab <= 0) throw std::invalid_argument("Denoiser: text_vocab must be set");
    Rng rng(seed);
    const int cb = cfg.base_channels;
    t1_ = nn::Linear(cfg.time_dim, cb, rng);
    t2_ = nn::Linear(cb, cb, rng);
    in_ = nn::Conv2d(cfg.latent_channels, cb, 3, 1, 1, rng);
    b1a_ = nn::Conv2d(cb, cb, 3, 1, 1, rng);
    b1b_ = nn::Conv2d(cb, cb, 3, 1, 1, rng);
    b2a_ = nn::Conv2d(cb, cb, 3, 1, 1, rng);
    b2b_ = nn::Conv2d(cb, cb, 3, 1, 1, rng);
    wq_ = nn::Linear(cb, cfg.attn_dim, rng);
    wk_ = nn::Linear(cfg.text_dim, cfg.attn_dim, rng);
    wv_ = nn::Linear(cfg.text_dim, cfg.attn_dim, rng);
    wo_ = nn::Linear(cfg.attn_dim, cb, rng);
    out_ = nn::Conv2d(cb, cfg.latent_channels, 3, 1, 1, rng);
    ctrl_in_ = nn::Conv2d(cfg.latent_channels, cb, 3, 1, 1, rng);
    ctrl_mid_ = nn::Conv2d(cb, cb, 3, 1, 1, rng);
    fuse1_ = nn::Conv2d::zeros(cb, cb, 1, 1, 0);
    fuse2_ = nn::Conv2d::zeros(cb, cb, 1, 1, 0);
    text_seed_ = rng.next_u64();
    text_ = TextEncoder(cfg.text_vocab, cfg.text_dim, cfg.text_len, text_seed_);
}

Var Denoiser::time_bias(int t) const {
    const int half = cfg_.time_dim / 2;
    Tensor e(Shape{1, cfg_.time_dim});
    for (int j = 0; j < half; ++j) {
        const double w = std::exp(-std::log(10000.0) * j / std::max(1, half - 1));
        e.at(0, j) = std::sin(t * w);
        e.at(0, half + j) = std::cos(t * w);
    }
    return t2_(ag::gelu(t1_(ag::constant(std::move(e)))));
}

Var Denoiser::cross_attention(const Var& h, const Tensor& caption) const {
    const Shape s = h->shape();
    const int hw = s[2] * s[3];
    if (caption.rank() != 2 || caption.dim(0) != cfg_.text_len || caption.dim(1) != cfg_.text_dim)
        throw std::invalid_argument("Denoiser: caption embedding must be (" + std::to_string(cfg_.text_len) + "," +
                                    std::to_string(cfg_.text_dim) + ")");
    Var flat = ag::transpose2d(ag::reshape(h, Shape{s[1], hw}));  // (hw, C)
    Var q = wq_(flat);
    Var cap = ag::constant(caption);
    Var k = wk_(cap), v = wv_(cap);
    Var scores = ag::mul_scalar(ag::matmul(q, ag::transpose2d(k)), 1.0 / std::sqrt(static_cast<double>(cfg_.attn_dim)));
    Var mixed = wo_(ag::matmul(ag::softmax_rows(scores), v));  // (hw, C)
    return ag::add(h, ag::reshape(ag::transpose2d(mixed), s));
}

Var Denoiser::predict_noise(const Var& z_t, int t, const Tensor& caption, const Var* control,
                            const NoiseSchedule& sched) const {
    sched.check_t(t);
    const Shape& s = z_t->shape();
    if (s.size() != 4 || s[0] != 1 || s[1] != cfg_.latent_channels)
        throw std::invalid_argument("Denoiser: expected z_t (1," + std::to_string(cfg_.latent_channels) + ",h,w), got " +
                                    shape_str(s));
    if (control && (*control)->shape() != s)
        throw std::invalid_argument("Denoiser: control dims " + shape_str((*control)->shape()) +
                                    " do not match z_t " + shape_str(s));
    Var tb = time_bias(t);
    Var h = ag::gelu(in_(z_t));
    Var ctrl;
    if (control) ctrl = ag::gelu(ctrl_mid_(ag::gelu(ctrl_in_(*control))));

    h = ag::add(h, b1b_(ag::gelu(b1a_(ag::add_bc(h, tb)))));
    if (control) h = ag::add(h, fuse1_(ctrl));
    h = cross_attention(h, caption);
    h = ag::add(h, b2b_(ag::gelu(b2a_(ag::add_bc(h, tb)))));
    if (control) h = ag::add(h, fuse2_(ctrl));
    return out_(h);
}

Var Denoiser::denoise_loss(const Var& z, const Tensor& caption, const Var* control, const NoiseSchedule& sched,
                           Rng& rng) const {
    const int t = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(sched.T)));
    Tensor eps(z->shape());
    for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = rng.normal();
    Var eps_c = ag::constant(std::move(eps));
    Var z_t = forward_noise(z, t, eps_c, sched);
    return ag::mse(eps_c, predict_noise(z_t, t, caption, control, sched));
}

Var Denoiser::enhance(const Var& z_hat, const Tensor& caption, const NoiseSchedule& sched, int steps, double strength,
                      Rng& rng, bool use_control) const {
    if (steps < 1) throw std::invalid_argument("Denoiser::enhance: steps must be >= 1");
    if (strength <= 0.0 || strength > 1.0) throw std::invalid_argument("Denoiser::enhance: strength must be in (0,1]");
    const int tau = static_cast<int>(std::lround(strength * sched.T));
    if (tau == 0) return z_hat;

    std::vector<int> ladder;  // strictly decreasing tau -> 0
    for (int i = 0; i <= steps; ++i) {
        const int t = static_cast<int>(std::lround(static_cast<double>(tau) * (steps - i) / steps));
        if (ladder.empty() || t < ladder.back()) ladder.push_back(t);
    }

    Tensor eps(z_hat->shape());
    for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = rng.normal();
    Tensor z_t = forward_noise(z_hat->val, tau, eps, sched);

    for (size_t i = 0; i + 1 < ladder.size(); ++i) {
        const int t = ladder[i], tn = ladder[i + 1];
        const bool last = i + 2 == ladder.size();
        Var z_t_v = ag::constant(z_t);
        if (last) {
            // only this step keeps its graph (truncated backprop); gradients
            // reach the input latent through the control branch
            Var ctrl_live = z_hat;
            Var e = predict_noise(z_t_v, t, caption, use_control ? &ctrl_live : nullptr, sched);
            Var z0 = ag::mul_scalar(ag::sub(z_t_v, ag::mul_scalar(e, sched.sqrt_one_m_ab(t))), 1.0 / sched.sqrt_ab(t));
            if (tn == 0) return z0;
            return ag::add(ag::mul_scalar(z0, sched.sqrt_ab(tn)), ag::mul_scalar(e, sched.sqrt_one_m_ab(tn)));
        }
        Var ctrl_det = ag::constant(z_hat->val);
        Var e = predict_noise(z_t_v, t, caption, use_control ? &ctrl_det : nullptr, sched);
        const double sa = sched.sqrt_ab(t), sb = sched.sqrt_one_m_ab(t);
        const double sa2 = sched.sqrt_ab(tn), sb2 = sched.sqrt_one_m_ab(tn);
        for (int64_t j = 0; j < z_t.numel(); ++j) {
            const double z0 = (z_t[j] - sb * e->val[j]) / sa;
            z_t[j] = sa2 * z0 + sb2 * e->val[j];
        }
    }
    throw std::logic_error("Denoiser::enhance: empty step ladder");  // unreachable: ladder has >= 2 entries
}

Tensor Denoiser::enhance(const Tensor& z_hat, const Tensor& caption, const NoiseSchedule& sched, int steps,
                         double strength, Rng& rng, bool use_control) const {
    return enhance(ag::constant(z_hat), caption, sched, steps, strength, rng, use_control)->val;
}

nn::ParamList Denoiser::base_params() const {
    nn::ParamList p;
    p.merge("time", t1_.params("l1"));
    p.merge("time", t2_.params("l2"));
    p.merge("base", in_.params("in"));
    p.merge("base", b1a_.params("b1a"));
    p.merge("base", b1b_.params("b1b"));
    p.merge("base", b2a_.params("b2a"));
    p.merge("base", b2b_.params("b2b"));
    p.merge("attn", wq_.params("q"));
    p.merge("attn", wk_.params("k"));
    p.merge("attn", wv_.params("v"));
    p.merge("attn", wo_.params("o"));
    p.merge("base", out_.params("out"));
    return p;
}

nn::ParamList Denoiser::control_params() const {
    nn::ParamList p;
    p.merge("ctrl", ctrl_in_.params("in"));
    p.merge("ctrl", ctrl_mid_.params("mid"));
    p.merge("ctrl", fuse1_.params("fuse1"));
    p.merge("ctrl", fuse2_.params("fuse2"));
    return p;
}

nn::ParamList Denoiser::params() const {
    nn::ParamList p = base_params();
    for (const auto& [n, v] : control_params().items) p.add(n, v);
    return p;
}

nlohmann::json Denoiser::config_json() const {
    return {{"latent_channels", cfg_.latent_channels},
            {"base_channels", cfg_.base_channels},
            {"text_vocab", cfg_.text_vocab},
            {"text_dim", cfg_.text_dim},
            {"text_len", cfg_.text_len},
            {"attn_dim", cfg_.attn_dim},
            {"time_dim", cfg_.time_dim},
            {"text_seed", text_seed_}};
}

Denoiser Denoiser::from_config_json(const nlohmann::json& c) {
    DenoiserConfig cfg;
    cfg.latent_channels = c.at("latent_channels");
    cfg.base_channels = c.at("base_channels");
    cfg.text_vocab = c.at("text_vocab");
    cfg.text_dim = c.at("text_dim");
    cfg.text_len = c.at("text_len");
    cfg.attn_dim = c.at("attn_dim");
    cfg.time_dim = c.at("time_dim");
    Denoiser d(cfg, 0);
    d.text_seed_ = c.at("text_seed");
    d.text_ = TextEncoder(cfg.text_vocab, cfg.text_dim, cfg.text_len, d.text_seed_);
    return d;
}

void Denoiser::save(const std::string& path) const {
    Checkpoint ck;
    ck.meta = meta;
    ck.meta["kind"] = "denoiser";
    ck.meta["config"] = config_json();
    ck.put_params(params(), Checkpoint::Dtype::f64);
    ck.save(path);
}

Denoiser Denoiser::load_file(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "denoiser")
        throw std::runtime_error("Denoiser: " + path + " is not a denoiser checkpoint");
    Denoiser d = from_config_json(ck.meta.at("config"));
    ck.load_params(d.params());
    d.meta = ck.meta;
    return d;
}

Denoiser pretrain_denoiser(const std::vector<Tensor>& latents, const std::vector<std::vector<int>>& captions,
                           const NoiseSchedule& sched, const DenoiserConfig& mcfg, const DenoiserTrainConfig& cfg) {
    if (latents.empty()) throw std::invalid_argument("pretrain_denoiser: empty latent set");
    if (latents.size() != captions.size())
        throw std::invalid_argument("pretrain_denoiser: latent/caption count mismatch");
    Denoiser den(mcfg, cfg.seed);
    std::vector<Tensor> embedded;
    embedded.reserve(captions.size());
    for (const auto& toks : captions) embedded.push_back(den.embed_caption(toks));

    nn::AdamW opt(den.base_params().vars(), cfg.lr);
    Rng rng(cfg.seed);
    for (int step = 0; step < cfg.steps; ++step) {
        const size_t idx = rng.below(latents.size());
        Var loss = den.denoise_loss(ag::constant(latents[idx]), embedded[idx], nullptr, sched, rng);
        if (!std::isfinite(loss->val.item()))
            throw std::runtime_error("pretrain_denoiser: non-finite loss at step " + std::to_string(step));
        opt.zero_grad();
        ag::backward(loss);
        opt.step();
    }
    den.freeze_base();

    Rng vrng(cfg.seed + 9001);
    const size_t n_val = std::min<size_t>(latents.size(), 32);
    double val = 0.0;
    for (size_t i = 0; i < n_val; ++i)
        val += den.denoise_loss(ag::constant(latents[i]), embedded[i], nullptr, sched, vrng)->val.item();
    den.meta["validated_denoise_loss"] = val / static_cast<double>(n_val);
    den.meta["train_steps"] = cfg.steps;
    den.meta["seed"] = cfg.seed;
    den.meta["schedule_T"] = sched.T;
    return den;
}

}  // namespace slim
