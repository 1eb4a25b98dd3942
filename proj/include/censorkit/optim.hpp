#pragma once

#include <cmath>
#include <vector>

#include "censorkit/common.hpp"
#include "censorkit/tensor.hpp"

namespace censorkit {

// Ascent (+1) drives the adversary, descent (-1) the actor.
enum class StepDirection : int { ascent = +1, descent = -1 };

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moments are laid out to
// match the parameter tensors one-to-one.
class AdamState {
public:
    AdamState() = default;

    AdamState(const std::vector<Tensor*>& params, AdamConfig cfg = {}) : cfg_(cfg) {
        for (const Tensor* p : params) {
            first_moment_.emplace_back(p->shape);
            second_moment_.emplace_back(p->shape);
        }
    }

    std::size_t step_count() const { return steps_; }
    const AdamConfig& config() const { return cfg_; }
    const Tensor& first_moment(std::size_t i) const { return first_moment_[i]; }
    const Tensor& second_moment(std::size_t i) const { return second_moment_[i]; }

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
              StepDirection direction) {
        if (params.size() != first_moment_.size() || grads.size() != params.size())
            throw ShapeError("adam: parameter list does not match state");
        ++steps_;
        const double b1 = cfg_.beta1, b2 = cfg_.beta2;
        const double corr1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double corr2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        const double sign = direction == StepDirection::ascent ? 1.0 : -1.0;
        for (std::size_t t = 0; t < params.size(); ++t) {
            Tensor& p = *params[t];
            const Tensor& g = *grads[t];
            if (!p.same_shape(g) || !p.same_shape(first_moment_[t]))
                throw ShapeError("adam: gradient shape mismatch");
            Tensor& m = first_moment_[t];
            Tensor& v = second_moment_[t];
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = g.data[i];
                if (!std::isfinite(gi)) throw DivergedError("NaN gradient in adam step");
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                const double m_hat = m.data[i] / corr1;
                const double v_hat = v.data[i] / corr2;
                p.data[i] +=
                    sign * cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
            }
        }
    }

private:
    AdamConfig cfg_;
    std::size_t steps_ = 0;
    std::vector<Tensor> first_moment_;
    std::vector<Tensor> second_moment_;
};

inline void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
                     double learning_rate, StepDirection direction) {
    if (params.size() != grads.size()) throw ShapeError("sgd: list size mismatch");
    const double sign = direction == StepDirection::ascent ? 1.0 : -1.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        const Tensor& g = *grads[t];
        if (!p.same_shape(g)) throw ShapeError("sgd: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g.data[i])) throw DivergedError("NaN gradient in sgd step");
            p.data[i] += sign * learning_rate * g.data[i];
        }
    }
}

}  // namespace censorkit
