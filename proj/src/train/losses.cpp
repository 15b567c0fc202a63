#include "slim/train/losses.hpp"

#include <stdexcept>

namespace slim {

using ag::Var;

Var masked_mse(const Var& a, const Var& b, const Var& mask) {
    if (a->shape() != b->shape())
        throw std::invalid_argument("masked_mse: shapes differ " + shape_str(a->shape()) + " vs " + shape_str(b->shape()));
    const Shape& ms = mask->shape();
    const Shape& as = a->shape();
    const bool same = ms == as;
    const bool bcast = ms.size() == 4 && as.size() == 4 && ms[0] == as[0] && ms[1] == 1 && ms[2] == as[2] && ms[3] == as[3];
    if (!same && !bcast)
        throw std::invalid_argument("masked_mse: mask " + shape_str(ms) + " not broadcastable over " + shape_str(as));
    return ag::mse(ag::mul(a, mask), ag::mul(b, mask));
}

Var guide_loss(const Var& z, const Var& z_hat, const Var& mask_latent) {
    return masked_mse(z, z_hat, mask_latent);
}

namespace {

// Unit-normalize each spatial position's channel vector, LPIPS-style.
Var channel_unit_normalize(const Var& act) {
    Var norm = ag::sqrt(ag::add_scalar(ag::sum_channels(ag::square(act)), 1e-8));  // (B,1,h,w)
    Var recip = ag::div(ag::constant(Tensor(norm->shape(), 1.0)), norm);
    return ag::mul(act, recip);
}

}  // namespace

Var roi_loss(const Var& x, const Var& x_hat, const Var& mask, const TaskClassifier& clf) {
    Var pixel = masked_mse(x, x_hat, mask);
    Var mx = ag::mul(x, mask);
    Var mx_hat = ag::mul(x_hat, mask);
    std::vector<Var> acts_a, acts_b;
    clf.trunk_with_activations(mx, acts_a);
    clf.trunk_with_activations(mx_hat, acts_b);
    Var perceptual;
    for (size_t i = 0; i < acts_a.size(); ++i) {
        Var d = ag::mse(channel_unit_normalize(acts_a[i]), channel_unit_normalize(acts_b[i]));
        perceptual = perceptual ? ag::add(perceptual, d) : d;
    }
    perceptual = ag::mul_scalar(perceptual, 1.0 / static_cast<double>(acts_a.size()));
    return ag::add(pixel, perceptual);
}

Var task_loss(const Var& x_hat, const std::vector<int>& labels, const TaskClassifier& clf) {
    for (int y : labels)
        if (y < 0 || y >= clf.num_classes())
            throw std::out_of_range("task_loss: label " + std::to_string(y) + " outside [0," +
                                    std::to_string(clf.num_classes()) + ")");
    return ag::softmax_cross_entropy(clf.forward(x_hat), labels);
}

}  // namespace slim
