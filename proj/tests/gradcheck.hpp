#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "slim/core/autograd.hpp"

namespace slim::testutil {

// Central finite-difference oracle. `make_loss` must rebuild the scalar graph
// from the current leaf values on every call. Returns the max relative error
// between autograd and finite-difference gradients over all leaf elements.
inline double gradcheck(const std::function<ag::Var()>& make_loss, const std::vector<ag::Var>& leaves,
                        double h = 1e-5) {
    ag::Var loss = make_loss();
    for (const auto& l : leaves) {
        l->grad = Tensor();
        l->grad_ready = false;
    }
    ag::backward(loss);
    double worst = 0.0;
    for (const auto& l : leaves) {
        for (int64_t i = 0; i < l->val.numel(); ++i) {
            const double orig = l->val[i];
            l->val[i] = orig + h;
            const double fp = make_loss()->val.item();
            l->val[i] = orig - h;
            const double fm = make_loss()->val.item();
            l->val[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = l->grad_ready ? l->grad[i] : 0.0;
            const double denom = std::max({1.0, std::abs(fd), std::abs(ad)});
            worst = std::max(worst, std::abs(fd - ad) / denom);
        }
    }
    return worst;
}

}  // namespace slim::testutil
