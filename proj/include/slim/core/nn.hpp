#pragma once

#include <string>
#include <utility>
#include <vector>

#include "slim/core/autograd.hpp"
#include "slim/core/rng.hpp"

namespace slim {
namespace nn {

using ag::Var;

// Flat named-parameter registry used for optimizers and checkpoints.
struct ParamList {
    std::vector<std::pair<std::string, Var>> items;

    void add(const std::string& name, const Var& v) { items.emplace_back(name, v); }
    void merge(const std::string& prefix, const ParamList& other) {
        for (const auto& [n, v] : other.items) items.emplace_back(prefix + "." + n, v);
    }
    std::vector<Var> vars() const {
        std::vector<Var> out;
        out.reserve(items.size());
        for (const auto& [n, v] : items) out.push_back(v);
        return out;
    }
    void set_requires_grad(bool on) {
        for (auto& [n, v] : items) v->requires_grad = on;
    }
    int64_t numel() const {
        int64_t n = 0;
        for (const auto& [k, v] : items) n += v->val.numel();
        return n;
    }
};

Tensor kaiming_init(const Shape& shape, int fan_in, Rng& rng, double gain = 1.0);

struct Conv2d {
    Var w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng, double gain = 1.0);
    static Conv2d zeros(int cin, int cout, int k, int stride, int pad);
    Var operator()(const Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
    ParamList params(const std::string& name) const;
};

struct ConvTranspose2d {
    Var w, b;
    int stride = 1, pad = 0, out_pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int cin, int cout, int k, int stride, int pad, int out_pad, Rng& rng, double gain = 1.0);
    Var operator()(const Var& x) const { return ag::conv_transpose2d(x, w, b, stride, pad, out_pad); }
    ParamList params(const std::string& name) const;
};

struct Linear {
    Var w, b;

    Linear() = default;
    Linear(int in, int out, Rng& rng, double gain = 1.0);
    Var operator()(const Var& x) const { return ag::linear(x, w, b); }
    ParamList params(const std::string& name) const;
};

// Three convs with two GELUs and a skip connection.
struct ResidualBottleneck {
    Conv2d c1, c2, c3;

    ResidualBottleneck() = default;
    ResidualBottleneck(int ch, int mid, Rng& rng);
    Var operator()(const Var& x) const;
    ParamList params(const std::string& name) const;
};

// Three convs with two leaky ReLUs and a skip; first conv strides down,
// the skip is a strided 1x1 conv.
struct ResidualDown {
    Conv2d c1, c2, c3, skip;

    ResidualDown() = default;
    ResidualDown(int cin, int cout, Rng& rng);
    Var operator()(const Var& x) const;
    ParamList params(const std::string& name) const;
};

// Mirror of ResidualDown with a transposed first conv.
struct ResidualUp {
    ConvTranspose2d c1;
    Conv2d c2, c3;
    ConvTranspose2d skip;

    ResidualUp() = default;
    ResidualUp(int cin, int cout, Rng& rng);
    Var operator()(const Var& x) const;
    ParamList params(const std::string& name) const;
};

// AdamW with decoupled weight decay.
class AdamW {
public:
    explicit AdamW(std::vector<Var> params, double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8, double weight_decay = 0.0);

    void zero_grad();
    void step();
    void set_lr(double lr) { lr_ = lr; }
    int64_t steps_done() const { return t_; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_, wd_;
    int64_t t_ = 0;
};

}  // namespace nn
}  // namespace slim
