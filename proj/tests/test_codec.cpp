#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gradcheck.hpp"
#include "slim/codec/codec.hpp"
#include "slim/core/zlib_util.hpp"

using namespace slim;

namespace {

CodecConfig tiny_config() {
    CodecConfig cfg;
    cfg.latent_channels = 4;
    cfg.feature_channels = 8;
    cfg.hyper_channels = 4;
    cfg.slices = 2;
    cfg.context_mid = 12;
    return cfg;
}

Tensor random_latent(Rng& rng, int b, int c, int h, int w, double scale) {
    Tensor t(Shape{b, c, h, w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("checkerboard partition counts and parity") {
    auto [a4, n4] = checkerboard_partition(4, 4);
    CHECK(a4.size() == 8);
    CHECK(n4.size() == 8);
    for (const auto& [i, j] : a4) CHECK((i + j) % 2 == 0);
    for (const auto& [i, j] : n4) CHECK((i + j) % 2 == 1);

    auto [a1, n1] = checkerboard_partition(1, 1);
    CHECK(a1.size() == 1);
    CHECK(n1.empty());

    auto [a3, n3] = checkerboard_partition(3, 3);
    CHECK(a3.size() == 5);
    CHECK(n3.size() == 4);
}

TEST_CASE("eval quantization is mean-centered rounding, half away from zero") {
    // decimals chosen to be exactly representable so the 0.5 tie actually
    // reaches the rounding rule
    Tensor v(Shape{1, 1, 1, 4}, std::vector<double>{1.4, 1.375, -0.5, 2.5});
    Tensor mu(Shape{1, 1, 1, 4}, std::vector<double>{0.0, 0.875, 0.0, 0.0});
    Tensor q = quantize_eval(v, mu);
    CHECK(q[0] == doctest::Approx(1.0));
    CHECK(q[1] == doctest::Approx(1.875));  // round(0.5) + mean, tie away from zero
    CHECK(q[2] == doctest::Approx(-1.0));
    CHECK(q[3] == doctest::Approx(3.0));
}

TEST_CASE("train quantization adds bounded noise and passes gradients through") {
    Rng rng(5);
    Tensor v(Shape{2, 3, 4, 4});
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = rng.normal();
    ag::Var x = ag::leaf(v);
    ag::Var noisy = quantize_noise(x, rng);
    for (int64_t i = 0; i < v.numel(); ++i) {
        CHECK(std::abs(noisy->val[i] - v[i]) < 0.5 + 1e-12);
    }
    ag::backward(ag::sum(noisy));
    for (int64_t i = 0; i < v.numel(); ++i) CHECK(x->grad[i] == doctest::Approx(1.0));
}

TEST_CASE("unit gaussian zero symbol costs 1.3851 bits") {
    const double floor = 1.0 / 32768.0;
    CHECK(gaussian_bits_scalar(0.0, 0.0, 1.0, floor) == doctest::Approx(1.3851).epsilon(1e-3));
    ag::Var v = ag::constant(Tensor(Shape{1}, 0.0));
    ag::Var mu = ag::constant(Tensor(Shape{1}, 0.0));
    ag::Var sg = ag::constant(Tensor(Shape{1}, 1.0));
    CHECK(gaussian_bits_elem(v, mu, sg, floor)->val[0] == doctest::Approx(gaussian_bits_scalar(0.0, 0.0, 1.0, floor)));
}

TEST_CASE("estimated bits fall below the floor cap for far outliers") {
    const double floor = 1.0 / 32768.0;
    CHECK(gaussian_bits_scalar(40.0, 0.0, 0.1, floor) == doctest::Approx(15.0));
    CHECK(gaussian_bits_scalar(0.3, 0.0, 2.0, floor) < 15.0);
}

TEST_CASE("gaussian bits gradients match finite differences") {
    Rng rng(11);
    Tensor v(Shape{1, 2, 3, 3}), m(Shape{1, 2, 3, 3}), s(Shape{1, 2, 3, 3});
    for (int64_t i = 0; i < v.numel(); ++i) {
        v[i] = 2.0 * rng.normal();
        m[i] = rng.normal();
        s[i] = 0.4 + rng.uniform(0.0, 1.5);
    }
    ag::Var lv = ag::leaf(v), lm = ag::leaf(m), ls = ag::leaf(s);
    auto make = [&] { return ag::sum(gaussian_bits_elem(lv, lm, ls, 1.0 / 32768.0)); };
    CHECK(testutil::gradcheck(make, {lv, lm, ls}) < 1e-4);
}

TEST_CASE("rate estimate gradients match finite differences through the full codec") {
    EntropyCodec codec(tiny_config(), 303);
    Rng data_rng(7);
    Tensor latent = random_latent(data_rng, 1, 4, 4, 4, 1.0);
    ag::Var x = ag::leaf(latent, false);
    auto make = [&] {
        Rng noise(42);  // same noise draw on every rebuild
        TrainForward fwd = codec.train_forward(x, noise, 16, 16);
        return ag::add(fwd.bpp, ag::mse(fwd.latent_hat, ag::constant(latent)));
    };
    // spot-check a cross-section of parameter tensors, including the prior
    nn::ParamList all = codec.params();
    std::vector<ag::Var> leaves;
    for (const auto& [name, v] : all.items) {
        if (name == "ga.in.b" || name == "gs.out.b" || name == "ha.c2.b" || name == "hs.c2.b" ||
            name == "ctx.s0.a2.b" || name == "ctx.s1.n2.b" || name == "prior.ch0.h1" || name == "prior.ch1.b2" ||
            name == "prior.ch2.a1" || name == "prior.ch3.h3")
            leaves.push_back(v);
    }
    CHECK(leaves.size() == 10);
    CHECK(testutil::gradcheck(make, leaves, 1e-5) < 1e-4);
}

TEST_CASE("train forward reports finite positive rate and matching shapes") {
    EntropyCodec codec(tiny_config(), 21);
    Rng rng(3);
    Tensor latent = random_latent(rng, 2, 4, 8, 8, 1.0);
    TrainForward fwd = codec.train_forward(ag::constant(latent), rng, 32, 32);
    CHECK(fwd.bpp->val.item() > 0.0);
    CHECK(std::isfinite(fwd.bpp->val.item()));
    CHECK(fwd.latent_hat->shape() == latent.shape());
    CHECK(fwd.feature_bits > 0.0);
    CHECK(fwd.hyper_bits > 0.0);
}

TEST_CASE("compress and decompress reproduce the coded symbols exactly") {
    for (uint64_t seed : {101u, 202u, 303u}) {
        EntropyCodec codec(tiny_config(), seed);
        Rng rng(seed * 7 + 1);
        for (int t = 0; t < 10; ++t) {
            Tensor latent = random_latent(rng, 1, 4, 8, 8, 1.5);
            EntropyCodec::Symbols sym = codec.quantize_for_coding(latent);
            Bitstream bs = codec.compress(latent, 32, 32);
            Tensor y_hat = codec.decompress_features(bs);
            REQUIRE(y_hat.same_shape(sym.features_deq));
            for (int64_t i = 0; i < y_hat.numel(); ++i) CHECK(y_hat[i] == sym.features_deq[i]);
            // full latent path is then a deterministic transform of y_hat
            Tensor rec = codec.decompress(bs);
            Tensor ref = codec.synthesize(ag::constant(sym.features_deq))->val;
            for (int64_t i = 0; i < rec.numel(); ++i) CHECK(rec[i] == ref[i]);
        }
    }
}

TEST_CASE("decode-order causality: parameters ignore symbols coded later") {
    EntropyCodec codec(tiny_config(), 404);
    Rng rng(12);
    Tensor latent = random_latent(rng, 1, 4, 8, 8, 1.0);

    // Corrupt a suffix of one coded segment and confirm that every pass the
    // decoder schedules before that segment's pass is bit-identical: if any
    // later-coded symbol leaked into an earlier context, these would diverge.
    Bitstream clean = codec.compress(latent, 32, 32);
    Tensor ref = codec.decompress_features(clean);
    Rng probe_rng(77);
    int probes = 0;
    const int sc = codec.config().feature_channels / codec.config().slices;
    auto [anchors, nonanchors] = checkerboard_partition(4, 4);
    for (int trial = 0; trial < 40 && probes < 1000; ++trial) {
        Bitstream dirty = clean;
        const int k = static_cast<int>(probe_rng.below(static_cast<uint64_t>(codec.config().slices)));
        const bool hit_anchor = probe_rng.below(2) == 0;
        auto& seg = hit_anchor ? dirty.anchor_segments[static_cast<size_t>(k)]
                               : dirty.nonanchor_segments[static_cast<size_t>(k)];
        if (seg.size() < 2) continue;
        const size_t cut = 1 + probe_rng.below(seg.size() - 1);
        for (size_t b = cut; b < seg.size(); ++b) seg[b] ^= static_cast<uint8_t>(1 + probe_rng.below(255));
        Tensor dec = codec.decompress_features(dirty);
        // symbols outside the corrupted segment's pass are decoded from their
        // own untouched segments up to the contexts; everything in earlier
        // slices and the earlier parity pass of slice k must be bit-identical
        for (int c = 0; c < k * sc; ++c)
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    CHECK(dec.at(0, c, i, j) == ref.at(0, c, i, j));
                    ++probes;
                }
        if (!hit_anchor) {
            for (int c = k * sc; c < (k + 1) * sc; ++c)
                for (const auto& [i, j] : anchors) {
                    CHECK(dec.at(0, c, i, j) == ref.at(0, c, i, j));
                    ++probes;
                }
        }
    }
    CHECK(probes >= 1000);
}

TEST_CASE("parameter prediction never sees the current slice in the anchor pass") {
    EntropyCodec codec(tiny_config(), 505);
    Rng rng(9);
    const int h = 4, w = 4;
    ag::Var psi = ag::constant(random_latent(rng, 1, 8, h, w, 1.0));
    ag::Var slice0 = ag::constant(random_latent(rng, 1, 4, h, w, 1.0));
    auto [mu1, sg1] = codec.predict_params(psi, {slice0}, 1, nullptr);
    // a different earlier-slice tensor must change the prediction...
    ag::Var slice0b = ag::constant(random_latent(rng, 1, 4, h, w, 1.0));
    auto [mu2, sg2] = codec.predict_params(psi, {slice0b}, 1, nullptr);
    double diff = 0.0;
    for (int64_t i = 0; i < mu1->val.numel(); ++i) diff += std::abs(mu1->val[i] - mu2->val[i]);
    CHECK(diff > 1e-6);
    // ...while the anchor network has no input slot for the slice being coded
    CHECK_THROWS_AS(codec.predict_params(psi, {}, 1, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(codec.predict_params(psi, {slice0, slice0b}, 1, nullptr), std::invalid_argument);
}

TEST_CASE("actual segment size tracks the rate estimate") {
    EntropyCodec codec(CodecConfig{}, 606);  // full-size: overhead amortizes
    Rng rng(31);
    double rel_sum = 0.0;
    const int n = 20;
    for (int t = 0; t < n; ++t) {
        Tensor latent = random_latent(rng, 1, 4, 16, 16, 1.5);
        BitAllocationMap est = codec.bit_allocation_map(latent);
        Bitstream bs = codec.compress(latent, 32, 32);
        int64_t seg_bits = 8 * static_cast<int64_t>(bs.hyper_segment.size());
        for (const auto& s : bs.anchor_segments) seg_bits += 8 * static_cast<int64_t>(s.size());
        for (const auto& s : bs.nonanchor_segments) seg_bits += 8 * static_cast<int64_t>(s.size());
        const double estimate = est.feature_bits + est.hyper_bits;
        CHECK(estimate > 0.0);
        rel_sum += std::abs(static_cast<double>(seg_bits) - estimate) / estimate;
    }
    CHECK(rel_sum / n < 0.10);
}

TEST_CASE("bit allocation map sums to the feature estimate") {
    EntropyCodec codec(tiny_config(), 707);
    Rng rng(8);
    Tensor latent = random_latent(rng, 1, 4, 8, 8, 1.0);
    BitAllocationMap m = codec.bit_allocation_map(latent);
    CHECK(m.bits.shape() == Shape{4, 4});
    CHECK(m.bits.sum() == doctest::Approx(m.feature_bits));
    CHECK(m.bits.min() >= 0.0);
    CHECK(m.hyper_bits > 0.0);
}

TEST_CASE("bitstream container round trip with caption") {
    EntropyCodec codec(tiny_config(), 808);
    Rng rng(4);
    Tensor latent = random_latent(rng, 1, 4, 8, 8, 1.0);
    Caption cap;
    cap.text = "a photo of a circle";
    Bitstream bs = codec.compress(latent, 32, 32, cap);
    CHECK((bs.flags & Bitstream::kFlagCaption) != 0);

    auto bytes = bs.serialize();
    Bitstream back = Bitstream::parse(bytes);
    CHECK(back.height == 32);
    CHECK(back.width == 32);
    CHECK(back.feature_channels == 8);
    CHECK(back.slices == 2);
    CHECK(inflate_bytes(back.caption_payload) == cap.text);
    Tensor a = codec.decompress(bs);
    Tensor b = codec.decompress(back);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

    const std::string path = (std::filesystem::temp_directory_path() / "slim_codec_test.bin").string();
    bs.write_file(path);
    Bitstream from_disk = Bitstream::read_file(path);
    CHECK(from_disk.serialize() == bytes);
    std::remove(path.c_str());
}

TEST_CASE("bitstream rejects malformed input with precise errors") {
    EntropyCodec codec(tiny_config(), 909);
    Rng rng(6);
    Bitstream bs = codec.compress(random_latent(rng, 1, 4, 8, 8, 1.0), 32, 32);
    auto bytes = bs.serialize();

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(Bitstream::parse(bad_magic), doctest::Contains("bad magic"), std::runtime_error);

    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_WITH_AS(Bitstream::parse(bad_version), doctest::Contains("version"), std::runtime_error);

    // cut inside the second slice's payload: the error must name the slice
    size_t cut = 14 + bs.hyper_segment.size() + 8 + bs.anchor_segments[0].size() + bs.nonanchor_segments[0].size() + 6;
    auto truncated = std::vector<uint8_t>(bytes.begin(), bytes.begin() + static_cast<int64_t>(cut));
    CHECK_THROWS_WITH_AS(Bitstream::parse(truncated), doctest::Contains("slice 1"), std::runtime_error);

    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_WITH_AS(Bitstream::parse(trailing), doctest::Contains("trailing"), std::runtime_error);

    Bitstream wrong_layout = bs;
    wrong_layout.feature_channels = 16;
    CHECK_THROWS_AS(codec.decompress(wrong_layout), std::invalid_argument);
}

TEST_CASE("save and load preserve the coded stream bit for bit") {
    EntropyCodec codec(tiny_config(), 1010);
    Rng rng(13);
    Tensor latent = random_latent(rng, 1, 4, 8, 8, 1.2);
    Bitstream before = codec.compress(latent, 32, 32);

    const std::string path = (std::filesystem::temp_directory_path() / "slim_codec_ckpt.bin").string();
    codec.save(path);
    EntropyCodec loaded = EntropyCodec::load_file(path);
    std::remove(path.c_str());

    CHECK(loaded.compress(latent, 32, 32).serialize() == before.serialize());
    Tensor a = codec.decompress(before);
    Tensor b = loaded.decompress(before);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("analyze rejects bad latent shapes") {
    EntropyCodec codec(tiny_config(), 1);
    CHECK_THROWS_AS(codec.analyze(ag::constant(Tensor(Shape{1, 3, 8, 8}))), std::invalid_argument);
    CHECK_THROWS_AS(codec.analyze(ag::constant(Tensor(Shape{1, 4, 7, 8}))), std::invalid_argument);
    CHECK_THROWS_AS(codec.compress(Tensor(Shape{2, 4, 8, 8}), 32, 32), std::invalid_argument);
}
