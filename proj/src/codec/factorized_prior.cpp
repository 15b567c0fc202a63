#include "slim/codec/factorized_prior.hpp"

#include <cmath>

namespace slim {

using ag::Var;

FactorizedPrior::FactorizedPrior(int channels, Rng& rng) : channels_(channels) {
    const int kH = kHidden;
    for (int c = 0; c < channels; ++c) {
        auto randt = [&](Shape s, double lo, double hi) {
            Tensor t(std::move(s));
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
            return t;
        };
        // softplus(0.54) ~= 1.0: start near an identity-scale monotone map
        h1_.push_back(ag::leaf(randt(Shape{1, kH}, 0.3, 0.8)));
        b1_.push_back(ag::leaf(randt(Shape{kH}, -0.5, 0.5)));
        a1_.push_back(ag::leaf(Tensor(Shape{1, kH}, 0.0)));
        h2_.push_back(ag::leaf(randt(Shape{kH, kH}, -0.6, 0.0)));
        b2_.push_back(ag::leaf(randt(Shape{kH}, -0.5, 0.5)));
        a2_.push_back(ag::leaf(Tensor(Shape{1, kH}, 0.0)));
        h3_.push_back(ag::leaf(randt(Shape{kH, 1}, -0.4, 0.2)));
        b3_.push_back(ag::leaf(Tensor(Shape{1}, 0.0)));
    }
}

Var FactorizedPrior::cdf_column(const Var& col, int channel) const {
    const int64_t n = col->val.numel();
    Var ones = ag::constant(Tensor(Shape{static_cast<int>(n), 1}, 1.0));
    auto gate = [&](const Var& u, const Var& a_raw) {
        Var a_full = ag::matmul(ones, ag::tanh(a_raw));
        return ag::add(u, ag::mul(a_full, ag::tanh(u)));
    };
    Var u = ag::linear(col, ag::softplus(h1_[static_cast<size_t>(channel)]), b1_[static_cast<size_t>(channel)]);
    u = gate(u, a1_[static_cast<size_t>(channel)]);
    u = ag::linear(u, ag::softplus(h2_[static_cast<size_t>(channel)]), b2_[static_cast<size_t>(channel)]);
    u = gate(u, a2_[static_cast<size_t>(channel)]);
    u = ag::linear(u, ag::softplus(h3_[static_cast<size_t>(channel)]), b3_[static_cast<size_t>(channel)]);
    return ag::sigmoid(u);
}

Var FactorizedPrior::likelihood(const ag::Var& x) const {
    const Shape& s = x->shape();
    if (s.size() != 4 || s[1] != channels_)
        throw std::invalid_argument("FactorizedPrior::likelihood: expected (B," + std::to_string(channels_) + ",h,w)");
    std::vector<Var> scattered;
    for (int c = 0; c < channels_; ++c) {
        Var col = ag::channel_as_column(x, c);
        Var upper = cdf_column(ag::add_scalar(col, 0.5), c);
        Var lower = cdf_column(ag::add_scalar(col, -0.5), c);
        scattered.push_back(ag::column_scatter_channel(ag::sub(upper, lower), s, c));
    }
    Var out = scattered[0];
    for (size_t i = 1; i < scattered.size(); ++i) out = ag::add(out, scattered[static_cast<size_t>(i)]);
    return out;
}

double FactorizedPrior::cdf(int channel, double x) const {
    const int kH = kHidden;
    const size_t c = static_cast<size_t>(channel);
    auto softplus = [](double v) { return v > 30 ? v : std::log1p(std::exp(v)); };
    double u[kHidden];
    for (int j = 0; j < kH; ++j) u[j] = softplus(h1_[c]->val[j]) * x + b1_[c]->val[j];
    for (int j = 0; j < kH; ++j) u[j] += std::tanh(a1_[c]->val[j]) * std::tanh(u[j]);
    double v[kHidden];
    for (int j = 0; j < kH; ++j) {
        double acc = b2_[c]->val[j];
        for (int i = 0; i < kH; ++i) acc += softplus(h2_[c]->val.at(i, j)) * u[i];
        v[j] = acc;
    }
    for (int j = 0; j < kH; ++j) v[j] += std::tanh(a2_[c]->val[j]) * std::tanh(v[j]);
    double w = b3_[c]->val[0];
    for (int i = 0; i < kH; ++i) w += softplus(h3_[c]->val[i]) * v[i];
    return 1.0 / (1.0 + std::exp(-w));
}

nn::ParamList FactorizedPrior::params() const {
    nn::ParamList p;
    for (int c = 0; c < channels_; ++c) {
        const std::string base = "prior.ch" + std::to_string(c);
        const size_t i = static_cast<size_t>(c);
        p.add(base + ".h1", h1_[i]);
        p.add(base + ".b1", b1_[i]);
        p.add(base + ".a1", a1_[i]);
        p.add(base + ".h2", h2_[i]);
        p.add(base + ".b2", b2_[i]);
        p.add(base + ".a2", a2_[i]);
        p.add(base + ".h3", h3_[i]);
        p.add(base + ".b3", b3_[i]);
    }
    return p;
}

}  // namespace slim
