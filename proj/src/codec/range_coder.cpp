#include "slim/codec/range_coder.hpp"

#include <stdexcept>

namespace slim {

namespace {
constexpr uint32_t kTopValue = 1u << 24;
constexpr uint32_t kMaxTotal = 1u << 16;
}  // namespace

void RangeEncoder::encode(uint32_t cum, uint32_t freq, uint32_t total) {
    if (finished_) throw std::logic_error("RangeEncoder: encode after finish");
    if (freq == 0 || total == 0 || total > kMaxTotal || cum + freq > total)
        throw std::invalid_argument("RangeEncoder: invalid frequency interval");
    const uint32_t r = range_ / total;
    low_ += static_cast<uint64_t>(cum) * r;
    range_ = freq * r;
    while (range_ < kTopValue) {
        shift_low();
        range_ <<= 8;
    }
}

void RangeEncoder::encode_raw_u32(uint32_t v) {
    for (int i = 3; i >= 0; --i) encode_raw_byte(static_cast<uint8_t>(v >> (8 * i)));
}

void RangeEncoder::shift_low() {
    if (low_ < 0xFF000000ULL || (low_ >> 32) != 0) {
        const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
        if (!first_) out_.push_back(static_cast<uint8_t>(cache_ + carry));
        first_ = false;
        for (; pending_ > 0; --pending_) out_.push_back(static_cast<uint8_t>(0xFFu + carry));
        cache_ = static_cast<uint8_t>(low_ >> 24);
    } else {
        ++pending_;
    }
    low_ = (low_ << 8) & 0xFFFFFFFFULL;
}

std::vector<uint8_t> RangeEncoder::finish() {
    if (finished_) throw std::logic_error("RangeEncoder: finish called twice");
    finished_ = true;
    // Any value in [low, low+range) decodes correctly and range >= 2^24 here,
    // so round low up to a multiple of 2^24: the final bytes become zero and
    // can be dropped, since the decoder zero-fills past the end of a segment.
    low_ = ((low_ + kTopValue - 1) / kTopValue) * kTopValue;
    for (int i = 0; i < 5; ++i) shift_low();
    while (!out_.empty() && out_.back() == 0) out_.pop_back();
    return std::move(out_);
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
    if (pos_ < size_) return data_[pos_++];
    // the encoder's final flush bytes may legitimately be truncated to zeros
    ++overrun_;
    return 0;
}

uint32_t RangeDecoder::decode_target(uint32_t total) {
    if (total == 0 || total > kMaxTotal) throw std::invalid_argument("RangeDecoder: invalid total");
    const uint32_t r = range_ / total;
    const uint32_t t = code_ / r;
    return t < total ? t : total - 1;
}

void RangeDecoder::advance(uint32_t cum, uint32_t freq, uint32_t total) {
    const uint32_t r = range_ / total;
    code_ -= cum * r;
    range_ = freq * r;
    while (range_ < kTopValue) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

uint8_t RangeDecoder::decode_raw_byte() {
    const uint32_t t = decode_target(256);
    advance(t, 1, 256);
    return static_cast<uint8_t>(t);
}

uint32_t RangeDecoder::decode_raw_u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | decode_raw_byte();
    return v;
}

}  // namespace slim
