#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "chaingan/nn.hpp"

namespace chaingan {

// Raised when training produces non-finite numbers; the CLI maps it to its
// own exit code.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
struct AdamState {
    Tensor<T> m;
    Tensor<T> v;
    std::int64_t t = 0;

    AdamState() = default;
    explicit AdamState(Shape s) : m(s), v(s) {}
};

// Bias-corrected Adam update, applied in place.
template <typename T>
void adam_step(AdamState<T>& state, Parameter<T>& param, const Tensor<T>& grad, double alpha,
               double beta1, double beta2, double eps) {
    if (grad.shape() != param.value.shape())
        throw std::invalid_argument("adam_step: grad " + grad.shape().str() + " vs param " +
                                    param.value.shape().str() + " for " + param.name);
    if (!grad.all_finite())
        throw DivergenceError("adam_step: non-finite gradient for " + param.name);
    if (state.m.shape() != param.value.shape()) state = AdamState<T>(param.value.shape());
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::int64_t i = 0; i < param.value.numel(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double m = beta1 * static_cast<double>(state.m[i]) + (1.0 - beta1) * g;
        const double v = beta2 * static_cast<double>(state.v[i]) + (1.0 - beta2) * g * g;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(v);
        const double step = alpha * (m / bc1) / (std::sqrt(v / bc2) + eps);
        param.value[i] = static_cast<T>(static_cast<double>(param.value[i]) - step);
    }
}

} // namespace chaingan
