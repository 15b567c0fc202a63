#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slim {

// On-wire layout (big-endian): magic "SLIM", version u8, H u16, W u16,
// C_y u16, S u8, flags u8 (bit 0: caption present), hyper u32 length + bytes,
// then per slice: anchor u32 length + bytes, non-anchor u32 length + bytes;
// if the caption flag is set: u16 length + DEFLATE-compressed UTF-8 bytes.
struct Bitstream {
    static constexpr uint8_t kVersion = 1;
    static constexpr uint8_t kFlagCaption = 0x01;

    uint16_t height = 0;
    uint16_t width = 0;
    uint16_t feature_channels = 0;
    uint8_t slices = 0;
    uint8_t flags = 0;
    std::vector<uint8_t> hyper_segment;
    std::vector<std::vector<uint8_t>> anchor_segments;
    std::vector<std::vector<uint8_t>> nonanchor_segments;
    std::vector<uint8_t> caption_payload;

    std::vector<uint8_t> serialize() const;
    static Bitstream parse(const std::vector<uint8_t>& bytes);

    int64_t total_bits() const { return static_cast<int64_t>(serialize().size()) * 8; }
    double bpp() const { return static_cast<double>(total_bits()) / (static_cast<double>(height) * width); }

    void write_file(const std::string& path) const;
    static Bitstream read_file(const std::string& path);
};

}  // namespace slim
