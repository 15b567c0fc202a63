#include "slim/codec/bitstream.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace slim {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'I', 'M'};

void push_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void push_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Cursor {
    const std::vector<uint8_t>& data;
    size_t pos = 0;

    void need(size_t n, const std::string& what) {
        if (pos + n > data.size())
            throw std::runtime_error("bitstream: truncated while reading " + what + " (need " + std::to_string(n) +
                                     " bytes at offset " + std::to_string(pos) + ")");
    }
    uint8_t u8(const std::string& what) {
        need(1, what);
        return data[pos++];
    }
    uint16_t u16(const std::string& what) {
        need(2, what);
        uint16_t v = static_cast<uint16_t>((data[pos] << 8) | data[pos + 1]);
        pos += 2;
        return v;
    }
    uint32_t u32(const std::string& what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | data[pos + static_cast<size_t>(i)];
        pos += 4;
        return v;
    }
    std::vector<uint8_t> bytes(size_t n, const std::string& what) {
        need(n, what);
        std::vector<uint8_t> out(data.begin() + static_cast<int64_t>(pos), data.begin() + static_cast<int64_t>(pos + n));
        pos += n;
        return out;
    }
};

}  // namespace

std::vector<uint8_t> Bitstream::serialize() const {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    push_u16(out, height);
    push_u16(out, width);
    push_u16(out, feature_channels);
    out.push_back(slices);
    out.push_back(flags);
    push_u32(out, static_cast<uint32_t>(hyper_segment.size()));
    out.insert(out.end(), hyper_segment.begin(), hyper_segment.end());
    for (uint8_t s = 0; s < slices; ++s) {
        push_u32(out, static_cast<uint32_t>(anchor_segments[s].size()));
        out.insert(out.end(), anchor_segments[s].begin(), anchor_segments[s].end());
        push_u32(out, static_cast<uint32_t>(nonanchor_segments[s].size()));
        out.insert(out.end(), nonanchor_segments[s].begin(), nonanchor_segments[s].end());
    }
    if (flags & kFlagCaption) {
        push_u16(out, static_cast<uint16_t>(caption_payload.size()));
        out.insert(out.end(), caption_payload.begin(), caption_payload.end());
    }
    return out;
}

Bitstream Bitstream::parse(const std::vector<uint8_t>& bytes) {
    Cursor c{bytes};
    c.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw std::runtime_error("bitstream: bad magic, not a SLIM stream");
    c.pos = 4;
    const uint8_t version = c.u8("version");
    if (version != kVersion)
        throw std::runtime_error("bitstream: unsupported version " + std::to_string(version) + " (expected " +
                                 std::to_string(kVersion) + ")");
    Bitstream bs;
    bs.height = c.u16("height");
    bs.width = c.u16("width");
    bs.feature_channels = c.u16("feature channels");
    bs.slices = c.u8("slice count");
    bs.flags = c.u8("flags");
    bs.hyper_segment = c.bytes(c.u32("hyper length"), "hyper segment");
    for (uint8_t s = 0; s < bs.slices; ++s) {
        const std::string tag = "slice " + std::to_string(s);
        bs.anchor_segments.push_back(c.bytes(c.u32(tag + " anchor length"), tag + " anchor segment"));
        bs.nonanchor_segments.push_back(c.bytes(c.u32(tag + " non-anchor length"), tag + " non-anchor segment"));
    }
    if (bs.flags & kFlagCaption) bs.caption_payload = c.bytes(c.u16("caption length"), "caption payload");
    if (c.pos != bytes.size())
        throw std::runtime_error("bitstream: " + std::to_string(bytes.size() - c.pos) + " trailing bytes");
    return bs;
}

void Bitstream::write_file(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("bitstream: cannot open for writing " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("bitstream: write failed " + path);
}

Bitstream Bitstream::read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("bitstream: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse(bytes);
}

}  // namespace slim
