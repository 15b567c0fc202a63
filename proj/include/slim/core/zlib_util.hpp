#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slim {

std::vector<uint8_t> deflate_bytes(const std::string& text, int level = 9);
std::string inflate_bytes(const std::vector<uint8_t>& data);

}  // namespace slim
