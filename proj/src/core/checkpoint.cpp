#include "slim/core/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace slim {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'C', 'K'};
constexpr uint8_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const uint32_t n = read_pod<uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& t, Dtype dtype) {
    blobs_[name] = Blob{t, dtype};
}

const Tensor& Checkpoint::get(const std::string& name) const {
    auto it = blobs_.find(name);
    if (it == blobs_.end()) throw std::out_of_range("checkpoint: no blob named '" + name + "'");
    return it->second.tensor;
}

void Checkpoint::put_params(const nn::ParamList& params, Dtype dtype) {
    for (const auto& [n, v] : params.items) put(n, v->val, dtype);
}

void Checkpoint::load_params(const nn::ParamList& params) const {
    for (const auto& [n, v] : params.items) {
        const Tensor& t = get(n);
        if (!t.same_shape(v->val))
            throw std::runtime_error("checkpoint: shape mismatch for '" + n + "': " + shape_str(t.shape()) + " vs " +
                                     shape_str(v->val.shape()));
        v->val = t;
    }
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_pod<uint8_t>(os, kVersion);
    write_string(os, meta.dump());
    write_pod<uint32_t>(os, static_cast<uint32_t>(blobs_.size()));
    for (const auto& [name, blob] : blobs_) {
        write_string(os, name);
        write_pod<uint8_t>(os, static_cast<uint8_t>(blob.dtype));
        write_pod<uint8_t>(os, static_cast<uint8_t>(blob.tensor.rank()));
        for (int d : blob.tensor.shape()) write_pod<uint32_t>(os, static_cast<uint32_t>(d));
        if (blob.dtype == Dtype::f64) {
            os.write(reinterpret_cast<const char*>(blob.tensor.data()),
                     static_cast<std::streamsize>(blob.tensor.numel() * sizeof(double)));
        } else {
            std::vector<float> f(static_cast<size_t>(blob.tensor.numel()));
            for (int64_t i = 0; i < blob.tensor.numel(); ++i) f[static_cast<size_t>(i)] = static_cast<float>(blob.tensor[i]);
            os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
        }
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint8_t version = read_pod<uint8_t>(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
    Checkpoint ck;
    ck.meta = nlohmann::json::parse(read_string(is));
    const uint32_t count = read_pod<uint32_t>(is);
    for (uint32_t k = 0; k < count; ++k) {
        const std::string name = read_string(is);
        const Dtype dtype = static_cast<Dtype>(read_pod<uint8_t>(is));
        const uint8_t rank = read_pod<uint8_t>(is);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_pod<uint32_t>(is));
        Tensor t(shape);
        if (dtype == Dtype::f64) {
            is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
        } else {
            std::vector<float> f(static_cast<size_t>(t.numel()));
            is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(f[static_cast<size_t>(i)]);
        }
        if (!is) throw std::runtime_error("checkpoint: truncated blob '" + name + "' in " + path);
        ck.blobs_[name] = Blob{std::move(t), dtype};
    }
    return ck;
}

}  // namespace slim
