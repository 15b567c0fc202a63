#include "slim/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "slim/core/image_io.hpp"
#include "slim/core/rng.hpp"

namespace slim {

namespace fs = std::filesystem;

std::vector<LabeledImage> load_dataset(const std::string& root, const std::string& manifest, int num_classes) {
    std::ifstream is(manifest);
    if (!is) throw std::runtime_error("load_dataset: cannot open manifest " + manifest);
    std::vector<LabeledImage> out;
    std::string line;
    int row = 0;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, rel, label_str;
        if (!std::getline(ls, id, ',') || !std::getline(ls, rel, ',') || !std::getline(ls, label_str))
            throw std::runtime_error("load_dataset: malformed manifest row " + std::to_string(row) + ": '" + line + "'");
        int label = 0;
        try {
            label = std::stoi(label_str);
        } catch (const std::exception&) {
            throw std::runtime_error("load_dataset: row " + std::to_string(row) + " (" + id + "): bad label '" +
                                     label_str + "'");
        }
        if (label < 0 || label >= num_classes)
            throw std::runtime_error("load_dataset: row " + std::to_string(row) + " (" + id + "): label " +
                                     std::to_string(label) + " out of range [0," + std::to_string(num_classes) + ")");
        const fs::path p = fs::path(root) / rel;
        if (!fs::exists(p))
            throw std::runtime_error("load_dataset: row " + std::to_string(row) + " (" + id + "): missing file " +
                                     p.string());
        LabeledImage img;
        img.id = id;
        img.label = label;
        img.pixels = read_png_rgb(p.string());
        out.push_back(std::move(img));
    }
    std::sort(out.begin(), out.end(), [](const LabeledImage& a, const LabeledImage& b) { return a.id < b.id; });
    return out;
}

void save_dataset(const std::vector<LabeledImage>& images, const std::string& root) {
    fs::create_directories(fs::path(root) / "images");
    std::ofstream mf(fs::path(root) / "manifest.csv");
    if (!mf) throw std::runtime_error("save_dataset: cannot write manifest under " + root);
    for (const auto& img : images) {
        const std::string rel = "images/" + img.id + ".png";
        write_png_rgb((fs::path(root) / rel).string(), img.pixels);
        mf << img.id << "," << rel << "," << img.label << "\n";
    }
}

namespace {

// Smooth value-noise background: random coarse grid, bilinear-interpolated.
Tensor textured_background(int size, Rng& rng) {
    const int g = 8;
    Tensor coarse(Shape{3, g + 1, g + 1});
    for (int64_t i = 0; i < coarse.numel(); ++i) coarse[i] = 0.25 + 0.35 * rng.uniform();
    Tensor bg(Shape{3, size, size});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < size; ++y) {
            const double fy = static_cast<double>(y) * g / size;
            const int y0 = static_cast<int>(fy);
            const double ty = fy - y0;
            for (int x = 0; x < size; ++x) {
                const double fx = static_cast<double>(x) * g / size;
                const int x0 = static_cast<int>(fx);
                const double tx = fx - x0;
                auto cv = [&](int yy, int xx) { return coarse[(static_cast<int64_t>(c) * (g + 1) + yy) * (g + 1) + xx]; };
                const double v = (1 - ty) * ((1 - tx) * cv(y0, x0) + tx * cv(y0, x0 + 1)) +
                                 ty * ((1 - tx) * cv(y0 + 1, x0) + tx * cv(y0 + 1, x0 + 1));
                bg[(static_cast<int64_t>(c) * size + y) * size + x] = v;
            }
        }
    }
    return bg;
}

// Foreground membership for the 10 shape classes, in unit coords of the box.
bool in_shape(int cls, double u, double v) {
    const double du = u - 0.5, dv = v - 0.5;
    const double r = std::sqrt(du * du + dv * dv);
    switch (cls % 10) {
        case 0: return r <= 0.5;                                             // circle
        case 1: return true;                                                 // square
        case 2: return v >= 0.1 && std::abs(du) <= 0.5 * (v - 0.1) / 0.9;    // triangle
        case 3: return std::abs(du) <= 0.16 || std::abs(dv) <= 0.16;         // cross
        case 4: return r <= 0.5 && r >= 0.28;                                // ring
        case 5: return std::abs(dv) <= 0.18;                                 // horizontal bar
        case 6: return std::abs(du) <= 0.18;                                 // vertical bar
        case 7: return std::abs(du) + std::abs(dv) <= 0.5;                   // diamond
        case 8: return std::abs(du - dv) <= 0.12 || std::abs(du + dv) <= 0.12;  // X
        case 9: {                                                            // dot grid
            const double pu = std::fmod(u * 3.0, 1.0) - 0.5;
            const double pv = std::fmod(v * 3.0, 1.0) - 0.5;
            return std::sqrt(pu * pu + pv * pv) <= 0.3;
        }
    }
    return false;
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(int n, int classes, int size, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_synthetic_dataset: n must be >= 1");
    if (size % kDownsampleFactor != 0)
        throw std::invalid_argument("generate_synthetic_dataset: size " + std::to_string(size) +
                                    " not divisible by downsample factor " + std::to_string(kDownsampleFactor));
    Rng rng(seed);
    SyntheticDataset ds;
    ds.num_classes = classes;
    for (int i = 0; i < n; ++i) {
        const int cls = i % classes;
        LabeledImage img;
        img.label = cls;
        {
            std::ostringstream os;
            os << "syn" << std::setw(5) << std::setfill('0') << i;
            img.id = os.str();
        }
        img.pixels = textured_background(size, rng);
        // bright, saturated foreground color far from the background range
        double col[3];
        const int hue = static_cast<int>(rng.below(6));
        for (int c = 0; c < 3; ++c) col[c] = ((hue >> c) & 1) ? 0.95 : 0.05;
        if (hue == 0) col[0] = 0.95;  // avoid all-dark
        const int ext = size / 3 + static_cast<int>(rng.below(size / 6 + 1));
        const int x0 = 2 + static_cast<int>(rng.below(std::max(1, size - ext - 4)));
        const int y0 = 2 + static_cast<int>(rng.below(std::max(1, size - ext - 4)));
        ForegroundBox box{x0, y0, x0 + ext, y0 + ext};
        for (int y = box.y0; y < box.y1; ++y)
            for (int x = box.x0; x < box.x1; ++x) {
                const double u = (x - box.x0 + 0.5) / ext;
                const double v = (y - box.y0 + 0.5) / ext;
                if (in_shape(cls, u, v))
                    for (int c = 0; c < 3; ++c) img.pixels[(static_cast<int64_t>(c) * size + y) * size + x] = col[c];
            }
        ds.images.push_back(std::move(img));
        ds.boxes.push_back(box);
    }
    return ds;
}

Tensor normalize_mask(const Tensor& heat) {
    Tensor out = heat;
    const double mx = out.max();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i] / (mx + 1e-8), 0.0, 1.0);
    return out;
}

RoIMask resize_mask_to_latent(const RoIMask& mask, int latent_h, int latent_w) {
    if (latent_h < 1 || latent_w < 1) throw std::invalid_argument("resize_mask_to_latent: dims must be >= 1");
    const int H = mask.values.dim(0), W = mask.values.dim(1);
    RoIMask out;
    out.source_id = mask.source_id;
    out.values = Tensor(Shape{latent_h, latent_w});
    const double sy = static_cast<double>(H) / latent_h;
    const double sx = static_cast<double>(W) / latent_w;
    for (int oy = 0; oy < latent_h; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        for (int ox = 0; ox < latent_w; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            double acc = 0.0, area = 0.0;
            for (int y = static_cast<int>(y0); y < static_cast<int>(std::ceil(y1)); ++y) {
                const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                for (int x = static_cast<int>(x0); x < static_cast<int>(std::ceil(x1)); ++x) {
                    const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                    acc += wy * wx * mask.values[static_cast<int64_t>(y) * W + x];
                    area += wy * wx;
                }
            }
            out.values[static_cast<int64_t>(oy) * latent_w + ox] = acc / area;
        }
    }
    return out;
}

Tensor bilinear_resize(const Tensor& src, int oh, int ow) {
    const int H = src.dim(0), W = src.dim(1);
    Tensor out(Shape{oh, ow});
    for (int y = 0; y < oh; ++y) {
        // align-corners-free sampling
        const double fy = std::clamp((y + 0.5) * H / oh - 0.5, 0.0, static_cast<double>(H - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, H - 1);
        const double ty = fy - y0;
        for (int x = 0; x < ow; ++x) {
            const double fx = std::clamp((x + 0.5) * W / ow - 0.5, 0.0, static_cast<double>(W - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, W - 1);
            const double tx = fx - x0;
            const double v = (1 - ty) * ((1 - tx) * src[static_cast<int64_t>(y0) * W + x0] + tx * src[static_cast<int64_t>(y0) * W + x1]) +
                             ty * ((1 - tx) * src[static_cast<int64_t>(y1) * W + x0] + tx * src[static_cast<int64_t>(y1) * W + x1]);
            out[static_cast<int64_t>(y) * ow + x] = v;
        }
    }
    return out;
}

void write_mask_cache(const std::string& path, const Tensor& mask) {
    if (mask.rank() != 2) throw std::invalid_argument("write_mask_cache: expected (H,W)");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_mask_cache: cannot open " + path);
    const uint32_t h = static_cast<uint32_t>(mask.dim(0)), w = static_cast<uint32_t>(mask.dim(1));
    os.write(reinterpret_cast<const char*>(&h), 4);
    os.write(reinterpret_cast<const char*>(&w), 4);
    std::vector<float> f(static_cast<size_t>(mask.numel()));
    for (int64_t i = 0; i < mask.numel(); ++i) f[static_cast<size_t>(i)] = static_cast<float>(mask[i]);
    os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
}

Tensor read_mask_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_mask_cache: cannot open " + path);
    uint32_t h = 0, w = 0;
    is.read(reinterpret_cast<char*>(&h), 4);
    is.read(reinterpret_cast<char*>(&w), 4);
    Tensor out(Shape{static_cast<int>(h), static_cast<int>(w)});
    std::vector<float> f(static_cast<size_t>(out.numel()));
    is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
    if (!is) throw std::runtime_error("read_mask_cache: truncated file " + path);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = f[static_cast<size_t>(i)];
    return out;
}

}  // namespace slim
