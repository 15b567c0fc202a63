#pragma once

#include <cstdint>
#include <vector>

namespace slim {

// 32-bit renormalizing range coder with carry propagation. Frequencies are
// 16-bit: every encode/decode call takes (cumulative, freq, total) with
// total <= 65536 and freq >= 1. Streams are byte-aligned per segment.
class RangeEncoder {
public:
    void encode(uint32_t cum, uint32_t freq, uint32_t total);
    void encode_raw_byte(uint8_t b) { encode(b, 1, 256); }
    void encode_raw_u32(uint32_t v);
    std::vector<uint8_t> finish();

private:
    void shift_low();

    uint64_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint8_t cache_ = 0;
    uint64_t pending_ = 0;
    bool first_ = true;
    bool finished_ = false;
    std::vector<uint8_t> out_;
};

class RangeDecoder {
public:
    RangeDecoder(const uint8_t* data, size_t size);

    // Returns a value in [0,total); the caller locates the symbol whose
    // [cum, cum+freq) interval contains it, then calls advance().
    uint32_t decode_target(uint32_t total);
    void advance(uint32_t cum, uint32_t freq, uint32_t total);
    uint8_t decode_raw_byte();
    uint32_t decode_raw_u32();

private:
    uint8_t next_byte();

    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    uint64_t overrun_ = 0;  // zero-fill reads past the end are tolerated only for the coder tail
    uint32_t range_ = 0xFFFFFFFFu;
    uint32_t code_ = 0;
};

}  // namespace slim
