#pragma once

#include <string>
#include <vector>

#include "slim/codec/codec.hpp"
#include "slim/data/gradcam.hpp"
#include "slim/diffusion/denoiser.hpp"
#include "slim/eval/bdrate.hpp"
#include "slim/train/classifier.hpp"
#include "slim/vae/autoencoder.hpp"

namespace slim {

struct EvalConfig {
    bool enhance = true;
    int enhance_steps = 10;
    double enhance_strength = 0.3;
    bool send_caption = true;  // embed the RoI caption in the stream
    uint64_t seed = 0;
    std::string variant = "slim";
    double lambda_r = 1.0;
};

// One rate point: means over the evaluated images.
struct EvalReport {
    std::string variant;
    double lambda_r = 0.0;
    double bpp = 0.0;      // actual stream bits (caption included) per pixel
    double top1 = 0.0;     // fraction of correct top-1 predictions
    double encode_ms = 0.0;
    double decode_ms = 0.0;
    int n_images = 0;
};

// Full pipeline per image: encode to a real bitstream, decode, optionally
// enhance, reconstruct, classify. Deterministic given cfg.seed; timing fields
// are the only run-to-run variation.
EvalReport evaluate_model(const EntropyCodec& codec, const Denoiser& den, const Autoencoder& vae,
                          const TaskClassifier& clf, const NoiseSchedule& sched,
                          const std::vector<LabeledImage>& images, const EvalConfig& cfg);

// Machine-readable report: header `variant,lambda_r,bpp,top1,encode_ms,decode_ms`.
// `include_timing` off zeroes the timing columns for byte-reproducible output.
void write_report_csv(const std::string& path, const std::vector<EvalReport>& rows, bool include_timing = true);
std::string format_report_table(const std::vector<EvalReport>& rows);

// Rate points of consecutive reports with the same variant label.
RateAccuracyCurve curve_from_reports(const std::vector<EvalReport>& rows, const std::string& label);

// Writes the estimated-bits map of one image as a max-normalized grayscale
// PNG plus a raw file (u32 h, u32 w little-endian, then h*w float64 values).
// Returns the map itself.
BitAllocationMap export_bitmap(const EntropyCodec& codec, const Autoencoder& vae, const LabeledImage& image,
                               const std::string& png_path, const std::string& raw_path);
Tensor read_bitmap_raw(const std::string& raw_path);

struct TimingReport {
    double encode_mean_ms = 0.0, encode_std_ms = 0.0;
    double decode_mean_ms = 0.0, decode_std_ms = 0.0;
    int reps = 0;
};

// Wall-clock codec timing over `reps` repetitions of the full set after
// `warmup` untimed passes. Decode includes enhancement when enabled.
TimingReport time_codec(const EntropyCodec& codec, const Denoiser& den, const Autoencoder& vae,
                        const TaskClassifier& clf, const NoiseSchedule& sched, const std::vector<LabeledImage>& images,
                        int reps, int warmup, const EvalConfig& cfg);

}  // namespace slim
