#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "slim/core/nn.hpp"
#include "slim/core/tensor.hpp"

#include <json.hpp>

namespace slim {

// Versioned checkpoint container: JSON metadata header plus named parameter
// blobs (little-endian float32 or float64).
class Checkpoint {
public:
    enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

    nlohmann::json meta;

    void put(const std::string& name, const Tensor& t, Dtype dtype = Dtype::f32);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return blobs_.count(name) > 0; }
    size_t blob_count() const { return blobs_.size(); }

    void put_params(const nn::ParamList& params, Dtype dtype = Dtype::f32);
    // Loads into existing leaves; shape mismatch or missing blob throws.
    void load_params(const nn::ParamList& params) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

private:
    struct Blob {
        Tensor tensor;
        Dtype dtype;
    };
    std::map<std::string, Blob> blobs_;
};

}  // namespace slim
