#include "slim/core/zlib_util.hpp"

#include <zlib.h>

#include <stdexcept>

namespace slim {

std::vector<uint8_t> deflate_bytes(const std::string& text, int level) {
    uLongf bound = compressBound(static_cast<uLong>(text.size()));
    std::vector<uint8_t> out(bound);
    const int rc = compress2(out.data(), &bound, reinterpret_cast<const Bytef*>(text.data()),
                             static_cast<uLong>(text.size()), level);
    if (rc != Z_OK) throw std::runtime_error("zlib: compress failed, rc=" + std::to_string(rc));
    out.resize(bound);
    return out;
}

std::string inflate_bytes(const std::vector<uint8_t>& data) {
    uLongf cap = static_cast<uLongf>(data.size() * 8 + 64);
    for (int attempt = 0; attempt < 8; ++attempt) {
        std::string out(cap, '\0');
        uLongf n = cap;
        const int rc = uncompress(reinterpret_cast<Bytef*>(out.data()), &n, data.data(), static_cast<uLong>(data.size()));
        if (rc == Z_OK) {
            out.resize(n);
            return out;
        }
        if (rc != Z_BUF_ERROR) throw std::runtime_error("zlib: uncompress failed, rc=" + std::to_string(rc));
        cap *= 2;
    }
    throw std::runtime_error("zlib: uncompress exceeded size limit");
}

}  // namespace slim
