#pragma once

#include <string>

#include "slim/core/tensor.hpp"

namespace slim {

// 8-bit PNG helpers. Pixels are (3,H,W) or (H,W) tensors with values in [0,1].
Tensor read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const Tensor& rgb);
void write_png_gray(const std::string& path, const Tensor& gray);

}  // namespace slim
