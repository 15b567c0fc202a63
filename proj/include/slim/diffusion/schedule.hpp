#pragma once

#include <vector>

#include "slim/core/autograd.hpp"

namespace slim {

// DDPM-style variance schedule indexed 0..T, where index 0 means clean:
// alpha_bar[0] == 1 exactly and alpha_bar is strictly decreasing.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // beta[0] = 0 placeholder, beta[1..T]
    std::vector<double> alpha_bar;  // cumulative product of (1 - beta)

    static NoiseSchedule linear(int T = 200, double beta_start = 1e-4, double beta_end = 0.02);

    double sqrt_ab(int t) const;       // sqrt(alpha_bar[t])
    double sqrt_one_m_ab(int t) const; // sqrt(1 - alpha_bar[t])
    void check_t(int t) const;
};

// z_t = sqrt(alpha_bar_t) * z + sqrt(1 - alpha_bar_t) * eps
Tensor forward_noise(const Tensor& z, int t, const Tensor& eps, const NoiseSchedule& sched);
ag::Var forward_noise(const ag::Var& z, int t, const ag::Var& eps, const NoiseSchedule& sched);

}  // namespace slim
