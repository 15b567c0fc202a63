#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gradcheck.hpp"
#include "slim/diffusion/denoiser.hpp"

using namespace slim;

namespace {

DenoiserConfig tiny_config() {
    DenoiserConfig cfg;
    cfg.latent_channels = 2;
    cfg.base_channels = 8;
    cfg.text_vocab = 6;
    cfg.text_dim = 4;
    cfg.text_len = 3;
    cfg.attn_dim = 4;
    cfg.time_dim = 4;
    return cfg;
}

Tensor random_tensor(Rng& rng, Shape s, double scale = 1.0) {
    Tensor t(std::move(s));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("linear schedule invariants") {
    NoiseSchedule s = NoiseSchedule::linear(200, 1e-4, 0.02);
    CHECK(s.T == 200);
    CHECK(s.alpha_bar[0] == 1.0);  // exact
    for (int t = 1; t <= s.T; ++t) {
        CHECK(s.beta[static_cast<size_t>(t)] > 0.0);
        CHECK(s.beta[static_cast<size_t>(t)] < 1.0);
        CHECK(s.alpha_bar[static_cast<size_t>(t)] < s.alpha_bar[static_cast<size_t>(t - 1)]);
    }
    CHECK(s.beta[1] == doctest::Approx(1e-4));
    CHECK(s.beta[200] == doctest::Approx(0.02));
    CHECK_THROWS_AS(NoiseSchedule::linear(0), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.5, 0.1), std::invalid_argument);
}

TEST_CASE("forward noise: identity at t=0, range guard, linearity") {
    NoiseSchedule s = NoiseSchedule::linear(200, 1e-4, 0.02);
    Rng rng(1);
    Tensor z = random_tensor(rng, Shape{1, 4, 4, 4});
    Tensor eps = random_tensor(rng, Shape{1, 4, 4, 4});
    Tensor z0 = forward_noise(z, 0, eps, s);
    for (int64_t i = 0; i < z.numel(); ++i) CHECK(z0[i] == z[i]);

    CHECK_THROWS_AS(forward_noise(z, -1, eps, s), std::out_of_range);
    CHECK_THROWS_AS(forward_noise(z, 201, eps, s), std::out_of_range);
    CHECK_THROWS_AS(forward_noise(z, 5, random_tensor(rng, Shape{1, 4, 4, 2}), s), std::invalid_argument);

    const int t = 77;
    Tensor two_z = z;
    for (int64_t i = 0; i < two_z.numel(); ++i) two_z[i] *= 2.0;
    Tensor a = forward_noise(two_z, t, eps, s);
    Tensor b = forward_noise(z, t, eps, s);
    const double sa = std::sqrt(s.alpha_bar[t]);
    for (int64_t i = 0; i < z.numel(); ++i) CHECK(a[i] - b[i] == doctest::Approx(sa * z[i]).epsilon(1e-12));
}

TEST_CASE("forward noise at t=T matches N(0,1) moments by Monte Carlo") {
    // long schedule so alpha_bar_T is ~0 and z_T is essentially pure noise
    NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    CHECK(s.alpha_bar[static_cast<size_t>(s.T)] < 1e-4);
    Rng rng(42);
    Tensor z = random_tensor(rng, Shape{1, 1, 2, 2});
    const int draws = 2500;  // x4 elements = 1e4 samples
    double sum = 0.0, sum2 = 0.0;
    int64_t n = 0;
    for (int d = 0; d < draws; ++d) {
        Tensor eps = random_tensor(rng, Shape{1, 1, 2, 2});
        Tensor zt = forward_noise(z, s.T, eps, s);
        for (int64_t i = 0; i < zt.numel(); ++i) {
            sum += zt[i];
            sum2 += zt[i] * zt[i];
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sum2 / static_cast<double>(n) - mean * mean;
    const double mean_bound = 3.0 / std::sqrt(static_cast<double>(n));          // 3-sigma of the sample mean
    const double var_bound = 3.0 * std::sqrt(2.0 / static_cast<double>(n));     // 3-sigma of the sample variance
    CHECK(std::abs(mean - 0.0) < mean_bound + 0.01);
    CHECK(std::abs(var - 1.0) < var_bound + 0.01);
}

TEST_CASE("zero-initialized control leaves the base prediction unchanged") {
    Denoiser den(tiny_config(), 77);
    NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
    Rng rng(3);
    ag::Var z_t = ag::constant(random_tensor(rng, Shape{1, 2, 4, 4}));
    ag::Var ctrl = ag::constant(random_tensor(rng, Shape{1, 2, 4, 4}));
    Tensor cap = den.embed_caption({2, 3, 4});
    Tensor base = den.predict_noise(z_t, 10, cap, nullptr, s)->val;
    Tensor with = den.predict_noise(z_t, 10, cap, &ctrl, s)->val;
    REQUIRE(base.same_shape(with));
    for (int64_t i = 0; i < base.numel(); ++i) CHECK(base[i] == with[i]);
    CHECK(base.all_finite());
}

TEST_CASE("predict_noise validates shapes and caption tokens") {
    Denoiser den(tiny_config(), 5);
    NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
    Rng rng(4);
    ag::Var z_t = ag::constant(random_tensor(rng, Shape{1, 2, 4, 4}));
    Tensor cap = den.embed_caption({1});
    CHECK_THROWS_AS(den.predict_noise(ag::constant(Tensor(Shape{1, 3, 4, 4})), 1, cap, nullptr, s), std::invalid_argument);
    ag::Var bad_ctrl = ag::constant(Tensor(Shape{1, 2, 2, 2}));
    CHECK_THROWS_AS(den.predict_noise(z_t, 1, cap, &bad_ctrl, s), std::invalid_argument);
    CHECK_THROWS_AS(den.predict_noise(z_t, 999, cap, nullptr, s), std::out_of_range);
    CHECK_THROWS_AS(den.embed_caption({99}), std::out_of_range);
}

TEST_CASE("denoise loss formula oracles") {
    // oracle predictor (eps itself) gives exactly 0; zero predictor ~1
    Rng rng(8);
    double zero_pred = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        Tensor eps = random_tensor(rng, Shape{1, 2, 4, 4});
        ag::Var e = ag::constant(eps);
        CHECK(ag::mse(e, e)->val.item() == 0.0);
        zero_pred += ag::mse(e, ag::constant(Tensor(eps.shape(), 0.0)))->val.item();
    }
    CHECK(zero_pred / 200 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("denoise loss is finite, positive, and reaches the control branch") {
    Denoiser den(tiny_config(), 9);
    NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
    Rng rng(10);
    ag::Var z = ag::constant(random_tensor(rng, Shape{1, 2, 4, 4}));
    ag::Var ctrl = ag::constant(random_tensor(rng, Shape{1, 2, 4, 4}));
    Tensor cap = den.embed_caption({2, 3});
    ag::Var loss = den.denoise_loss(z, cap, &ctrl, s, rng);
    CHECK(loss->val.item() > 0.0);
    CHECK(std::isfinite(loss->val.item()));
    ag::backward(loss);
    int with_grad = 0;
    for (const auto& [name, v] : den.control_params().items)
        if (v->grad_ready) ++with_grad;
    CHECK(with_grad > 0);
}

TEST_CASE("denoise loss gradients match finite differences") {
    Denoiser den(tiny_config(), 13);
    NoiseSchedule s = NoiseSchedule::linear(20, 1e-3, 0.05);
    Rng data_rng(14);
    Tensor z = random_tensor(data_rng, Shape{1, 2, 3, 3});
    Tensor ctrl_t = random_tensor(data_rng, Shape{1, 2, 3, 3});
    Tensor cap = den.embed_caption({2, 4});
    ag::Var zv = ag::constant(z);
    ag::Var ctrl = ag::leaf(ctrl_t);
    auto make = [&] {
        Rng rng(99);  // identical t and eps on every rebuild
        return den.denoise_loss(zv, cap, &ctrl, s, rng);
    };
    std::vector<ag::Var> leaves{ctrl};
    for (const auto& [name, v] : den.params().items) {
        if (name == "base.in.b" || name == "base.out.b" || name == "time.l2.b" || name == "attn.q.b" ||
            name == "attn.o.b" || name == "ctrl.mid.b" || name == "ctrl.fuse1.w" || name == "ctrl.fuse2.b")
            leaves.push_back(v);
    }
    CHECK(leaves.size() == 9);
    CHECK(testutil::gradcheck(make, leaves, 1e-5) < 1e-4);
}

TEST_CASE("enhance: determinism, dims, zero-strength limit, control identity") {
    Denoiser den(tiny_config(), 21);
    NoiseSchedule s = NoiseSchedule::linear(200, 1e-4, 0.02);
    Rng rng(22);
    Tensor z_hat = random_tensor(rng, Shape{1, 2, 4, 4});
    Tensor cap = den.embed_caption({2, 3, 4});

    Rng r1(5), r2(5);
    Tensor a = den.enhance(z_hat, cap, s, 4, 0.3, r1);
    Tensor b = den.enhance(z_hat, cap, s, 4, 0.3, r2);
    REQUIRE(a.same_shape(z_hat));
    CHECK(a.all_finite());
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

    // tau = round(0.001 * 200) = 0: exact identity
    Rng r3(5);
    Tensor id = den.enhance(z_hat, cap, s, 4, 0.001, r3);
    for (int64_t i = 0; i < id.numel(); ++i) CHECK(id[i] == z_hat[i]);

    // zero-init control: sampler with control == control-free sampler exactly
    Rng r4(5), r5(5);
    Tensor with = den.enhance(z_hat, cap, s, 6, 0.4, r4, true);
    Tensor without = den.enhance(z_hat, cap, s, 6, 0.4, r5, false);
    for (int64_t i = 0; i < with.numel(); ++i) CHECK(with[i] == without[i]);

    CHECK_THROWS_AS(den.enhance(z_hat, cap, s, 0, 0.3, rng), std::invalid_argument);
    CHECK_THROWS_AS(den.enhance(z_hat, cap, s, 4, 1.5, rng), std::invalid_argument);
    // more steps than timesteps: ladder dedupes, still returns cleanly
    Rng r6(5);
    CHECK(den.enhance(z_hat, cap, s, 50, 0.05, r6).all_finite());
}

TEST_CASE("pretrain overfits one latent and freezes the base") {
    DenoiserConfig mcfg = tiny_config();
    NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
    Rng rng(31);
    std::vector<Tensor> latents{random_tensor(rng, Shape{1, 2, 4, 4})};
    std::vector<std::vector<int>> caps{{2, 3}};
    DenoiserTrainConfig cfg;
    cfg.steps = 10000;
    cfg.lr = 3e-3;
    cfg.seed = 7;
    Denoiser den = pretrain_denoiser(latents, caps, s, mcfg, cfg);
    const double val = den.meta.at("validated_denoise_loss");
    CHECK(val < 0.5);  // well under the zero-predictor baseline of ~1
    for (const auto& [name, v] : den.base_params().items) CHECK_FALSE(v->requires_grad);
    for (const auto& [name, v] : den.control_params().items) {
        CHECK(v->requires_grad);
        if (name.find("fuse") != std::string::npos)
            for (int64_t i = 0; i < v->val.numel(); ++i) CHECK(v->val[i] == 0.0);
    }

    // seeded determinism
    Denoiser den2 = pretrain_denoiser(latents, caps, s, mcfg, cfg);
    for (size_t i = 0; i < den.params().items.size(); ++i) {
        const Tensor& p1 = den.params().items[i].second->val;
        const Tensor& p2 = den2.params().items[i].second->val;
        for (int64_t j = 0; j < p1.numel(); ++j) CHECK(p1[j] == p2[j]);
    }
}

TEST_CASE("checkpoint round trip preserves predictions exactly") {
    Denoiser den(tiny_config(), 55);
    den.meta["validated_denoise_loss"] = 0.123;
    NoiseSchedule s = NoiseSchedule::linear(50, 1e-4, 0.02);
    Rng rng(56);
    ag::Var z_t = ag::constant(random_tensor(rng, Shape{1, 2, 4, 4}));
    ag::Var ctrl = ag::constant(random_tensor(rng, Shape{1, 2, 4, 4}));
    Tensor cap = den.embed_caption({2, 5});

    const std::string path = (std::filesystem::temp_directory_path() / "slim_denoiser_test.ckpt").string();
    den.save(path);
    Denoiser back = Denoiser::load_file(path);
    std::remove(path.c_str());

    CHECK(back.meta.at("validated_denoise_loss") == doctest::Approx(0.123));
    Tensor a = den.predict_noise(z_t, 7, cap, &ctrl, s)->val;
    Tensor b = back.predict_noise(z_t, 7, back.embed_caption({2, 5}), &ctrl, s)->val;
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}
