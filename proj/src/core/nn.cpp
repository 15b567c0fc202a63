#include "slim/core/nn.hpp"

#include <cmath>

namespace slim {
namespace nn {

Tensor kaiming_init(const Shape& shape, int fan_in, Rng& rng, double gain) {
    Tensor t(shape);
    const double std = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = std * rng.normal();
    return t;
}

Conv2d::Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng, double gain) : stride(stride), pad(pad) {
    w = ag::leaf(kaiming_init(Shape{cout, cin, k, k}, cin * k * k, rng, gain));
    b = ag::leaf(Tensor(Shape{cout}, 0.0));
}

Conv2d Conv2d::zeros(int cin, int cout, int k, int stride, int pad) {
    Conv2d c;
    c.stride = stride;
    c.pad = pad;
    c.w = ag::leaf(Tensor(Shape{cout, cin, k, k}, 0.0));
    c.b = ag::leaf(Tensor(Shape{cout}, 0.0));
    return c;
}

ParamList Conv2d::params(const std::string& name) const {
    ParamList p;
    p.add(name + ".w", w);
    p.add(name + ".b", b);
    return p;
}

ConvTranspose2d::ConvTranspose2d(int cin, int cout, int k, int stride, int pad, int out_pad, Rng& rng, double gain)
    : stride(stride), pad(pad), out_pad(out_pad) {
    w = ag::leaf(kaiming_init(Shape{cin, cout, k, k}, cin * k * k, rng, gain));
    b = ag::leaf(Tensor(Shape{cout}, 0.0));
}

ParamList ConvTranspose2d::params(const std::string& name) const {
    ParamList p;
    p.add(name + ".w", w);
    p.add(name + ".b", b);
    return p;
}

Linear::Linear(int in, int out, Rng& rng, double gain) {
    w = ag::leaf(kaiming_init(Shape{in, out}, in, rng, gain));
    b = ag::leaf(Tensor(Shape{out}, 0.0));
}

ParamList Linear::params(const std::string& name) const {
    ParamList p;
    p.add(name + ".w", w);
    p.add(name + ".b", b);
    return p;
}

ResidualBottleneck::ResidualBottleneck(int ch, int mid, Rng& rng)
    : c1(ch, mid, 1, 1, 0, rng), c2(mid, mid, 3, 1, 1, rng), c3(mid, ch, 1, 1, 0, rng, 0.1) {}

Var ResidualBottleneck::operator()(const Var& x) const {
    Var h = ag::gelu(c1(x));
    h = ag::gelu(c2(h));
    h = c3(h);
    return ag::add(x, h);
}

ParamList ResidualBottleneck::params(const std::string& name) const {
    ParamList p;
    p.merge(name + ".c1", c1.params("c"));
    p.merge(name + ".c2", c2.params("c"));
    p.merge(name + ".c3", c3.params("c"));
    return p;
}

ResidualDown::ResidualDown(int cin, int cout, Rng& rng)
    : c1(cin, cout, 3, 2, 1, rng), c2(cout, cout, 3, 1, 1, rng), c3(cout, cout, 3, 1, 1, rng, 0.1),
      skip(cin, cout, 1, 2, 0, rng) {}

Var ResidualDown::operator()(const Var& x) const {
    Var h = ag::leaky_relu(c1(x), 0.2);
    h = ag::leaky_relu(c2(h), 0.2);
    h = c3(h);
    return ag::add(skip(x), h);
}

ParamList ResidualDown::params(const std::string& name) const {
    ParamList p;
    p.merge(name + ".c1", c1.params("c"));
    p.merge(name + ".c2", c2.params("c"));
    p.merge(name + ".c3", c3.params("c"));
    p.merge(name + ".skip", skip.params("c"));
    return p;
}

ResidualUp::ResidualUp(int cin, int cout, Rng& rng)
    : c1(cin, cout, 3, 2, 1, 1, rng), c2(cout, cout, 3, 1, 1, rng), c3(cout, cout, 3, 1, 1, rng, 0.1),
      skip(cin, cout, 1, 2, 0, 1, rng) {}

Var ResidualUp::operator()(const Var& x) const {
    Var h = ag::leaky_relu(c1(x), 0.2);
    h = ag::leaky_relu(c2(h), 0.2);
    h = c3(h);
    return ag::add(skip(x), h);
}

ParamList ResidualUp::params(const std::string& name) const {
    ParamList p;
    p.merge(name + ".c1", c1.params("c"));
    p.merge(name + ".c2", c2.params("c"));
    p.merge(name + ".c3", c3.params("c"));
    p.merge(name + ".skip", skip.params("c"));
    return p;
}

AdamW::AdamW(std::vector<Var> params, double lr, double beta1, double beta2, double eps, double weight_decay)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
    for (const auto& p : params_) {
        m_.emplace_back(p->shape(), 0.0);
        v_.emplace_back(p->shape(), 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) {
        p->grad = Tensor();
        p->grad_ready = false;
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
        Var& p = params_[k];
        if (!p->grad_ready) continue;
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (int64_t i = 0; i < p->val.numel(); ++i) {
            const double g = p->grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p->val[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p->val[i]);
        }
    }
}

}  // namespace nn
}  // namespace slim
