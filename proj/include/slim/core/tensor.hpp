#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace slim {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles, rank 0..4.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
            throw std::invalid_argument("Tensor: data size does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 4-D accessor (b, c, h, w).
    double& at(int b, int c, int h, int w) {
        return data_[static_cast<size_t>(((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    double at(int b, int c, int h, int w) const {
        return data_[static_cast<size_t>(((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    // 2-D accessor.
    double& at(int r, int c) { return data_[static_cast<size_t>(static_cast<int64_t>(r) * shape_[1] + c)]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(static_cast<int64_t>(r) * shape_[1] + c)]; }

    double item() const {
        if (numel() != 1) throw std::logic_error("Tensor::item on tensor with numel != 1");
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw std::invalid_argument("Tensor::reshaped: numel mismatch " + shape_str(shape_) + " -> " + shape_str(s));
        Tensor out;
        out.shape_ = std::move(s);
        out.data_ = data_;
        return out;
    }

    bool all_finite() const;
    double min() const;
    double max() const;
    double sum() const;
    double mean() const { return numel() ? sum() / static_cast<double>(numel()) : 0.0; }

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace slim
