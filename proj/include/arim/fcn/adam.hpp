#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace arim::fcn {

struct AdamConfig {
    double learning_rate = 1e-5;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
};

/// One Adam update with bias correction. Weight decay enters as an L2 term,
/// g + wd * w, before the moment updates. `step` counts from 1.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, const AdamConfig& config,
               AdamState& state, std::uint64_t step) {
    if (step < 1) throw std::invalid_argument("adam step count starts at 1");
    if (grads.size() != params.size()) throw std::invalid_argument("gradient and parameter sizes differ");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("adam state does not match parameter count");

    const double b1 = config.beta1, b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double w = static_cast<double>(params[i]);
        const double g = static_cast<double>(grads[i]) + config.weight_decay * w;
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] = static_cast<T>(w - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
}

}  // namespace arim::fcn
