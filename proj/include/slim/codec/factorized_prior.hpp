#pragma once

#include "slim/core/nn.hpp"
#include "slim/core/rng.hpp"

namespace slim {

// Learned non-parametric factorized prior: one monotone scalar CDF per
// channel, built from softplus-positive weight layers with tanh gating and a
// final sigmoid. Supplies differentiable likelihoods for rate estimation and
// deterministic pmf tables for entropy coding.
class FactorizedPrior {
public:
    FactorizedPrior() = default;
    FactorizedPrior(int channels, Rng& rng);

    int channels() const { return channels_; }

    // Elementwise likelihood c(x+0.5) - c(x-0.5) on a (B,C,h,w) input.
    ag::Var likelihood(const ag::Var& x) const;

    // Scalar CDF evaluated without the tape; bit-exact with the Var path.
    double cdf(int channel, double x) const;
    double pmf(int channel, double x) const { return cdf(channel, x + 0.5) - cdf(channel, x - 0.5); }

    nn::ParamList params() const;

private:
    ag::Var cdf_column(const ag::Var& col, int channel) const;

    int channels_ = 0;
    static constexpr int kHidden = 3;
    // per channel: h1 (1,kH), b1 (kH), a1 (kH); h2 (kH,kH), b2 (kH), a2 (kH); h3 (kH,1), b3 (1)
    std::vector<ag::Var> h1_, b1_, a1_, h2_, b2_, a2_, h3_, b3_;
};

}  // namespace slim
