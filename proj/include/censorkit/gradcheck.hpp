#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "censorkit/common.hpp"
#include "censorkit/nn.hpp"
#include "censorkit/tensor.hpp"

namespace censorkit {

inline constexpr double kGradCheckStep = 1e-5;
// Inputs whose ReLU pre-activations sit within this margin of the kink are
// rejected; central differences are invalid there.
inline constexpr double kKinkMargin = 1e-4;

enum class GradCheckLoss { squared_error, binary_log_loss };

// Worst relative error between analytic gradients and central finite
// differences over an arbitrary scalar objective. The denominator guards
// against tiny gradients with max(|analytic|, |numeric|, 1e-8).
inline double grad_check_fn(const std::vector<Tensor*>& params,
                            const std::vector<Tensor>& analytic,
                            const std::function<double()>& loss_fn,
                            double step = kGradCheckStep) {
    if (params.size() != analytic.size())
        throw ShapeError("grad_check_fn: analytic gradient list size mismatch");
    double worst = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p.data[i];
            p.data[i] = saved + step;
            const double plus = loss_fn();
            p.data[i] = saved - step;
            const double minus = loss_fn();
            p.data[i] = saved;
            const double numeric = (plus - minus) / (2.0 * step);
            const double a = analytic[t].data[i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

// Gradient check for a plain network under one of the simple losses.
inline double grad_check(Network& net, GradCheckLoss loss, const Tensor& input,
                         const Tensor& target, double step = kGradCheckStep) {
    const auto loss_value = [&]() -> double {
        const Tensor out = net.forward(input);
        return loss == GradCheckLoss::squared_error ? squared_error(out, target)
                                                    : binary_log_loss(out, target);
    };

    net.zero_grads();
    const Tensor out = net.forward(input);
    const Tensor dout = loss == GradCheckLoss::squared_error
                            ? squared_error_grad(out, target)
                            : binary_log_loss_grad(out, target);
    net.backward(dout);

    std::vector<Tensor> analytic;
    for (Tensor* g : net.grad_tensors()) analytic.push_back(*g);
    return grad_check_fn(net.param_tensors(), analytic, loss_value, step);
}

// Draws inputs until no ReLU pre-activation lies within the kink margin.
inline Tensor sample_input_away_from_kinks(
    Network& net, const std::function<Tensor()>& sampler, double margin = kKinkMargin,
    int max_tries = 200) {
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        Tensor candidate = sampler();
        net.forward(candidate);
        if (net.relu_kink_margin() > margin) return candidate;
    }
    throw Error("could not sample an input clear of ReLU kinks");
}

}  // namespace censorkit
