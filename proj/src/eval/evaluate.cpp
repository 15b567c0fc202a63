#include "slim/eval/evaluate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "slim/core/image_io.hpp"
#include "slim/core/zlib_util.hpp"
#include "slim/data/caption.hpp"

namespace slim {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

struct PerImage {
    double bpp = 0.0;
    bool correct = false;
    double encode_ms = 0.0;
    double decode_ms = 0.0;
};

PerImage run_one(const EntropyCodec& codec, const Denoiser& den, const Autoencoder& vae, const TaskClassifier& clf,
                 const NoiseSchedule& sched, const LabeledImage& img, size_t idx, const EvalConfig& cfg) {
    const int H = img.height(), W = img.width();
    const Tensor image = img.pixels.reshaped({1, 3, H, W});
    const Tensor latent = vae.encode(image);

    std::optional<Caption> caption;
    if (cfg.send_caption) {
        RoIMask mask = gradcam_mask(img, clf, true);
        caption = make_roi_caption(img, mask, default_class_names());
    }

    PerImage out;
    double t0 = now_ms();
    Bitstream bs = codec.compress(latent, H, W, caption);
    out.encode_ms = now_ms() - t0;
    out.bpp = bs.bpp();

    t0 = now_ms();
    Tensor z_hat = codec.decompress(bs);
    if (cfg.enhance) {
        // the decoder only sees the transmitted caption bytes
        std::vector<int> tokens;
        if (bs.flags & Bitstream::kFlagCaption) tokens = tokenize_caption(inflate_bytes(bs.caption_payload));
        Rng rng(cfg.seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(idx + 1));
        z_hat = den.enhance(z_hat, den.embed_caption(tokens), sched, cfg.enhance_steps, cfg.enhance_strength, rng);
    }
    Tensor x_hat = vae.decode(z_hat);
    const int pred = clf.predict(x_hat)[0];
    out.decode_ms = now_ms() - t0;
    out.correct = pred == img.label;
    return out;
}

}  // namespace

EvalReport evaluate_model(const EntropyCodec& codec, const Denoiser& den, const Autoencoder& vae,
                          const TaskClassifier& clf, const NoiseSchedule& sched,
                          const std::vector<LabeledImage>& images, const EvalConfig& cfg) {
    if (images.empty()) throw std::invalid_argument("evaluate_model: empty evaluation set");
    EvalReport r;
    r.variant = cfg.variant;
    r.lambda_r = cfg.lambda_r;
    r.n_images = static_cast<int>(images.size());
    int correct = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        PerImage p = run_one(codec, den, vae, clf, sched, images[i], i, cfg);
        r.bpp += p.bpp;
        r.encode_ms += p.encode_ms;
        r.decode_ms += p.decode_ms;
        correct += p.correct ? 1 : 0;
    }
    const double inv = 1.0 / static_cast<double>(images.size());
    r.bpp *= inv;
    r.encode_ms *= inv;
    r.decode_ms *= inv;
    r.top1 = static_cast<double>(correct) * inv;
    return r;
}

void write_report_csv(const std::string& path, const std::vector<EvalReport>& rows, bool include_timing) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_report_csv: cannot open " + path);
    f << "variant,lambda_r,bpp,top1,encode_ms,decode_ms\n";
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.variant.c_str(), r.lambda_r, r.bpp,
                      r.top1, include_timing ? r.encode_ms : 0.0, include_timing ? r.decode_ms : 0.0);
        f << buf;
    }
}

std::string format_report_table(const std::vector<EvalReport>& rows) {
    std::string out = "variant          lambda_r      bpp     top1  enc_ms  dec_ms  images\n";
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-16s %8.4g %8.4f %8.4f %7.2f %7.2f %7d\n", r.variant.c_str(), r.lambda_r,
                      r.bpp, r.top1, r.encode_ms, r.decode_ms, r.n_images);
        out += buf;
    }
    return out;
}

RateAccuracyCurve curve_from_reports(const std::vector<EvalReport>& rows, const std::string& label) {
    RateAccuracyCurve c;
    c.label = label;
    for (const auto& r : rows)
        if (r.variant == label) c.points.push_back({r.bpp, r.top1});
    return c;
}

BitAllocationMap export_bitmap(const EntropyCodec& codec, const Autoencoder& vae, const LabeledImage& image,
                               const std::string& png_path, const std::string& raw_path) {
    const Tensor img = image.pixels.reshaped({1, 3, image.height(), image.width()});
    BitAllocationMap map = codec.bit_allocation_map(vae.encode(img));
    Tensor gray = map.bits;
    const double mx = gray.max();
    if (mx > 0.0)
        for (int64_t i = 0; i < gray.numel(); ++i) gray[i] /= mx;
    write_png_gray(png_path, gray);

    std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
    if (!raw) throw std::runtime_error("export_bitmap: cannot open " + raw_path);
    const uint32_t h = static_cast<uint32_t>(map.bits.dim(0)), w = static_cast<uint32_t>(map.bits.dim(1));
    raw.write(reinterpret_cast<const char*>(&h), 4);
    raw.write(reinterpret_cast<const char*>(&w), 4);
    raw.write(reinterpret_cast<const char*>(map.bits.data()), static_cast<std::streamsize>(map.bits.numel() * 8));
    return map;
}

Tensor read_bitmap_raw(const std::string& raw_path) {
    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) throw std::runtime_error("read_bitmap_raw: cannot open " + raw_path);
    uint32_t h = 0, w = 0;
    raw.read(reinterpret_cast<char*>(&h), 4);
    raw.read(reinterpret_cast<char*>(&w), 4);
    Tensor t({static_cast<int>(h), static_cast<int>(w)});
    raw.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    if (!raw) throw std::runtime_error("read_bitmap_raw: truncated file " + raw_path);
    return t;
}

TimingReport time_codec(const EntropyCodec& codec, const Denoiser& den, const Autoencoder& vae,
                        const TaskClassifier& clf, const NoiseSchedule& sched, const std::vector<LabeledImage>& images,
                        int reps, int warmup, const EvalConfig& cfg) {
    if (images.empty()) throw std::invalid_argument("time_codec: empty image set");
    if (reps < 1) throw std::invalid_argument("time_codec: reps must be >= 1");
    std::vector<double> enc, dec;
    for (int r = -warmup; r < reps; ++r) {
        double e = 0.0, d = 0.0;
        for (size_t i = 0; i < images.size(); ++i) {
            PerImage p = run_one(codec, den, vae, clf, sched, images[i], i, cfg);
            e += p.encode_ms;
            d += p.decode_ms;
        }
        if (r >= 0) {
            enc.push_back(e / static_cast<double>(images.size()));
            dec.push_back(d / static_cast<double>(images.size()));
        }
    }
    auto mean_std = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s2 = 0.0;
        for (double x : v) s2 += (x - m) * (x - m);
        return std::pair<double, double>(m, std::sqrt(s2 / static_cast<double>(v.size())));
    };
    TimingReport out;
    out.reps = reps;
    std::tie(out.encode_mean_ms, out.encode_std_ms) = mean_std(enc);
    std::tie(out.decode_mean_ms, out.decode_std_ms) = mean_std(dec);
    return out;
}

}  // namespace slim
