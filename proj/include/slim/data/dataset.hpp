#pragma once

#include <string>
#include <vector>

#include "slim/core/tensor.hpp"

namespace slim {

struct LabeledImage {
    Tensor pixels;  // (3, H, W) in [0,1]
    int label = 0;
    std::string id;

    int height() const { return pixels.dim(1); }
    int width() const { return pixels.dim(2); }
};

struct RoIMask {
    Tensor values;  // (H, W) in [0,1]
    std::string source_id;
};

// Axis-aligned foreground region recorded by the synthetic generator; used by
// test oracles to check where saliency and bits should concentrate.
struct ForegroundBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)

    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct SyntheticDataset {
    std::vector<LabeledImage> images;
    std::vector<ForegroundBox> boxes;
    int num_classes = 0;
};

inline constexpr int kDownsampleFactor = 4;

// Manifest format: one `id,relative_path,label` row per image.
std::vector<LabeledImage> load_dataset(const std::string& root, const std::string& manifest, int num_classes);

void save_dataset(const std::vector<LabeledImage>& images, const std::string& root);

SyntheticDataset generate_synthetic_dataset(int n, int classes, int size, uint64_t seed);

// Divides by (max + 1e-8); an identically-zero heatmap stays zero.
Tensor normalize_mask(const Tensor& heat);

// Exact area-average downsampling with fractional pixel coverage.
RoIMask resize_mask_to_latent(const RoIMask& mask, int latent_h, int latent_w);

Tensor bilinear_resize(const Tensor& src, int oh, int ow);  // (H,W) -> (oh,ow)

// Mask cache: u32 H, u32 W (little-endian), then H*W float32 values.
void write_mask_cache(const std::string& path, const Tensor& mask);
Tensor read_mask_cache(const std::string& path);

}  // namespace slim
