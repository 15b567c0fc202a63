#include "slim/diffusion/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace slim {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
    if (beta_start <= 0.0 || beta_end >= 1.0 || beta_end < beta_start)
        throw std::invalid_argument("NoiseSchedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<size_t>(T) + 1, 0.0);
    s.alpha_bar.resize(static_cast<size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        s.beta[static_cast<size_t>(t)] =
            T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
        s.alpha_bar[static_cast<size_t>(t)] = s.alpha_bar[static_cast<size_t>(t - 1)] * (1.0 - s.beta[static_cast<size_t>(t)]);
    }
    return s;
}

void NoiseSchedule::check_t(int t) const {
    if (t < 0 || t > T)
        throw std::out_of_range("NoiseSchedule: timestep " + std::to_string(t) + " outside [0," + std::to_string(T) + "]");
}

double NoiseSchedule::sqrt_ab(int t) const {
    check_t(t);
    return std::sqrt(alpha_bar[static_cast<size_t>(t)]);
}

double NoiseSchedule::sqrt_one_m_ab(int t) const {
    check_t(t);
    return std::sqrt(1.0 - alpha_bar[static_cast<size_t>(t)]);
}

Tensor forward_noise(const Tensor& z, int t, const Tensor& eps, const NoiseSchedule& sched) {
    if (!z.same_shape(eps)) throw std::invalid_argument("forward_noise: z and eps shapes differ");
    const double a = sched.sqrt_ab(t), b = sched.sqrt_one_m_ab(t);
    if (t == 0) return z;  // alpha_bar[0] == 1: exact identity
    Tensor out = z;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * z[i] + b * eps[i];
    return out;
}

ag::Var forward_noise(const ag::Var& z, int t, const ag::Var& eps, const NoiseSchedule& sched) {
    if (z->shape() != eps->shape()) throw std::invalid_argument("forward_noise: z and eps shapes differ");
    const double a = sched.sqrt_ab(t), b = sched.sqrt_one_m_ab(t);
    if (t == 0) return z;  // alpha_bar[0] == 1: exact identity
    return ag::add(ag::mul_scalar(z, a), ag::mul_scalar(eps, b));
}

}  // namespace slim
