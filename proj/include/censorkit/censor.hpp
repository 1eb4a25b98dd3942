#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "censorkit/common.hpp"
#include "censorkit/gradcheck.hpp"
#include "censorkit/nn.hpp"
#include "censorkit/optim.hpp"
#include "censorkit/tensor.hpp"

namespace censorkit {

// A minibatch of rows. y entries may be -1 (unlabeled) to support
// semi-supervised prediction loss; s is always required.
struct Batch {
    Tensor x;                 // [n, d]
    std::vector<int8_t> y;    // empty, or length n with values in {-1, 0, 1}
    std::vector<int8_t> s;    // length n, values in {0, 1}
};

struct LossBreakdown {
    double c = 0.0;      // reconstruction cost, >= 0
    double d = 0.0;      // dependence (mean adversary log-likelihood), <= 0
    double e = 0.0;      // prediction cost, >= 0
    double total = 0.0;  // alpha*c + beta*d + gamma*e
};

// Encoder/decoder/predictor form the actor (theta); the adversary holds phi.
// Decoder exists iff alpha > 0, predictor iff gamma > 0.
struct CensorModel {
    Network encoder;
    std::optional<Network> decoder;
    std::optional<Network> predictor;
    Network adversary;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;

    std::vector<Tensor*> actor_params() {
        std::vector<Tensor*> out = encoder.param_tensors();
        if (decoder) {
            auto d = decoder->param_tensors();
            out.insert(out.end(), d.begin(), d.end());
        }
        if (predictor) {
            auto p = predictor->param_tensors();
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    }

    std::vector<Tensor*> actor_grads() {
        std::vector<Tensor*> out = encoder.grad_tensors();
        if (decoder) {
            auto d = decoder->grad_tensors();
            out.insert(out.end(), d.begin(), d.end());
        }
        if (predictor) {
            auto p = predictor->grad_tensors();
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    }

    std::vector<Tensor*> adversary_params() { return adversary.param_tensors(); }
    std::vector<Tensor*> adversary_grads() { return adversary.grad_tensors(); }

    std::vector<Tensor*> all_params() {
        std::vector<Tensor*> out = actor_params();
        auto a = adversary_params();
        out.insert(out.end(), a.begin(), a.end());
        return out;
    }

    void zero_grads() {
        encoder.zero_grads();
        if (decoder) decoder->zero_grads();
        if (predictor) predictor->zero_grads();
        adversary.zero_grads();
    }

    void validate(const Batch& batch) const {
        if (batch.x.rank() != 2) throw ShapeError("batch features must be [n, d]");
        const std::size_t n = batch.x.shape[0];
        if (batch.s.size() != n) throw ShapeError("batch s length mismatch");
        if (!batch.y.empty() && batch.y.size() != n)
            throw ShapeError("batch y length mismatch");
        if (alpha > 0.0 && !decoder) throw ConfigError("alpha > 0 requires a decoder");
        if (gamma > 0.0 && !predictor) throw ConfigError("gamma > 0 requires a predictor");
    }
};

inline Tensor encode(CensorModel& model, const Tensor& x) {
    return model.encoder.forward(x);
}

namespace detail {

// Column tensor of the labeled-row mask applied later; targets as doubles.
inline Tensor labels_to_tensor(const std::vector<int8_t>& v) {
    Tensor t({v.size(), 1});
    for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<double>(v[i]);
    return t;
}

// Mean of s*log(p) + (1-s)*log(1-p), with clamped probabilities.
inline double mean_log_likelihood(const Tensor& probs, const std::vector<int8_t>& s) {
    const std::size_t n = s.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = clamp_prob(probs.data[i]);
        acc += s[i] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return acc / static_cast<double>(n);
}

inline Tensor mean_log_likelihood_grad(const Tensor& probs, const std::vector<int8_t>& s) {
    const std::size_t n = s.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    Tensor g(probs.shape);
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = probs.data[i];
        if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) {
            g.data[i] = 0.0;
            continue;
        }
        g.data[i] = s[i] == 1 ? inv_n / raw : -inv_n / (1.0 - raw);
    }
    return g;
}

// Mean binary log-loss over labeled rows only (y >= 0).
inline double masked_log_loss(const Tensor& probs, const std::vector<int8_t>& y) {
    double acc = 0.0;
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0) continue;
        ++labeled;
        const double p = clamp_prob(probs.data[i]);
        acc -= y[i] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    if (labeled == 0) throw MetricError("prediction cost: no labeled rows in batch");
    return acc / static_cast<double>(labeled);
}

inline Tensor masked_log_loss_grad(const Tensor& probs, const std::vector<int8_t>& y) {
    std::size_t labeled = 0;
    for (int8_t v : y)
        if (v >= 0) ++labeled;
    if (labeled == 0) throw MetricError("prediction cost: no labeled rows in batch");
    const double inv_n = 1.0 / static_cast<double>(labeled);
    Tensor g(probs.shape);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0) continue;
        const double raw = probs.data[i];
        if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) continue;
        g.data[i] = y[i] == 1 ? -inv_n / raw : inv_n / (1.0 - raw);
    }
    return g;
}

inline void add_into(Tensor& acc, const Tensor& t) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += t.data[i];
}

inline void scale(Tensor& t, double f) {
    for (double& v : t.data) v *= f;
}

}  // namespace detail

// Mean over the batch of ||x - Dec(Enc(x))||_2^2.
inline double reconstruction_cost(CensorModel& model, const Batch& batch) {
    model.validate(batch);
    if (!model.decoder) throw ConfigError("reconstruction cost requires a decoder");
    const Tensor r = model.encoder.forward(batch.x);
    const Tensor xhat = model.decoder->forward(r);
    return squared_error(xhat, batch.x);
}

// Mean adversary log-likelihood of s given R (Eq. of the dependence term):
// nonpositive; the adversary ascends it, the actor descends it.
inline double dependence_cost(CensorModel& model, const Batch& batch) {
    model.validate(batch);
    const Tensor r = model.encoder.forward(batch.x);
    const Tensor shat = model.adversary.forward(r);
    return detail::mean_log_likelihood(shat, batch.s);
}

// Mean binary log-loss of the predictor against y over labeled rows.
inline double prediction_cost(CensorModel& model, const Batch& batch) {
    model.validate(batch);
    if (!model.predictor) throw ConfigError("prediction cost requires a predictor");
    if (batch.y.empty()) throw MetricError("prediction cost: batch has no labels");
    const Tensor r = model.encoder.forward(batch.x);
    const Tensor yhat = model.predictor->forward(r);
    return detail::masked_log_loss(yhat, batch.y);
}

struct StepEval {
    LossBreakdown loss;
    double adversary_accuracy = 0.0;
};

namespace detail {

inline double accuracy_from_scores(const Tensor& scores, const std::vector<int8_t>& s) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const int pred = scores.data[i] > 0.5 ? 1 : 0;
        if (pred == s[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(s.size());
}

// Shared forward pass; optionally accumulates every gradient in the model.
// Gradients of L land in all slots: actor updates then read theta slots,
// adversary updates read phi slots.
inline StepEval joint_pass(CensorModel& model, const Batch& batch, bool with_grads) {
    model.validate(batch);
    const std::size_t n = batch.x.shape[0];
    if (n == 0) throw ShapeError("empty batch");
    if (with_grads) model.zero_grads();

    LossBreakdown out;
    const Tensor r = model.encoder.forward(batch.x);
    Tensor grad_r(r.shape);

    if (model.alpha > 0.0) {
        const Tensor xhat = model.decoder->forward(r);
        out.c = squared_error(xhat, batch.x);
        if (with_grads) {
            Tensor dxhat = squared_error_grad(xhat, batch.x);
            detail::scale(dxhat, model.alpha);
            detail::add_into(grad_r, model.decoder->backward(dxhat));
        }
    }

    double adv_acc = 0.0;
    {
        const Tensor shat = model.adversary.forward(r);
        out.d = detail::mean_log_likelihood(shat, batch.s);
        adv_acc = detail::accuracy_from_scores(shat, batch.s);
        if (with_grads && model.beta > 0.0) {
            Tensor dshat = detail::mean_log_likelihood_grad(shat, batch.s);
            detail::scale(dshat, model.beta);
            detail::add_into(grad_r, model.adversary.backward(dshat));
        }
    }

    if (model.gamma > 0.0) {
        if (batch.y.empty()) throw MetricError("prediction cost: batch has no labels");
        const Tensor yhat = model.predictor->forward(r);
        out.e = detail::masked_log_loss(yhat, batch.y);
        if (with_grads) {
            Tensor dyhat = detail::masked_log_loss_grad(yhat, batch.y);
            detail::scale(dyhat, model.gamma);
            detail::add_into(grad_r, model.predictor->backward(dyhat));
        }
    }

    if (with_grads) model.encoder.backward(grad_r);

    out.total = model.alpha * out.c + model.beta * out.d + model.gamma * out.e;
    if (!std::isfinite(out.total)) throw DivergedError("non-finite joint loss");
    return {out, adv_acc};
}

}  // namespace detail

inline LossBreakdown joint_loss(CensorModel& model, const Batch& batch) {
    return detail::joint_pass(model, batch, false).loss;
}

// Computes the joint loss and fills every parameter gradient slot.
inline StepEval joint_backward(CensorModel& model, const Batch& batch) {
    return detail::joint_pass(model, batch, true);
}

inline double adversary_batch_accuracy(CensorModel& model, const Batch& batch) {
    const Tensor r = model.encoder.forward(batch.x);
    const Tensor shat = model.adversary.forward(r);
    return detail::accuracy_from_scores(shat, batch.s);
}

// Finite-difference check of the joint loss over every parameter (theta and
// phi together). Returns the worst relative error.
inline double joint_grad_check(CensorModel& model, const Batch& batch,
                               double step = kGradCheckStep) {
    joint_backward(model, batch);
    std::vector<Tensor> analytic;
    std::vector<Tensor*> grads = model.actor_grads();
    auto adv = model.adversary_grads();
    grads.insert(grads.end(), adv.begin(), adv.end());
    for (Tensor* g : grads) analytic.push_back(*g);
    const auto loss_value = [&]() -> double { return joint_loss(model, batch).total; };
    return grad_check_fn(model.all_params(), analytic, loss_value, step);
}

// ---------------------------------------------------------------------------
// Standard architecture: symmetric ReLU autoencoder with the representation
// at the central hidden layer, a logistic regressor as predictor, and a ReLU
// MLP adversary with a sigmoid output.
// ---------------------------------------------------------------------------

struct CensorModelSpec {
    std::size_t input_dim = 0;
    int encoder_layers = 1;    // hidden layers on each side of the bottleneck
    int hidden_units = 16;     // width of every hidden layer (= representation size)
    int adversary_layers = 1;  // hidden layers in the adversary
    double alpha = 0.05;
    double beta = 1.0;
    double gamma = 1.0;
};

inline CensorModel build_censor_model(const CensorModelSpec& spec, Rng& rng) {
    if (spec.input_dim == 0) throw ConfigError("model: input_dim must be positive");
    if (spec.encoder_layers < 1 || spec.hidden_units < 1 || spec.adversary_layers < 1)
        throw ConfigError("model: layer and unit counts must be >= 1");
    if (spec.alpha < 0 || spec.beta < 0 || spec.gamma < 0)
        throw ConfigError("model: loss weights must be >= 0");

    const auto d = spec.input_dim;
    const auto h = static_cast<std::size_t>(spec.hidden_units);

    CensorModel model;
    model.alpha = spec.alpha;
    model.beta = spec.beta;
    model.gamma = spec.gamma;

    std::size_t prev = d;
    for (int i = 0; i < spec.encoder_layers; ++i) {
        model.encoder.affine(prev, h).relu();
        prev = h;
    }

    if (spec.alpha > 0.0) {
        Network dec;
        for (int i = 0; i < spec.encoder_layers - 1; ++i) dec.affine(h, h).relu();
        dec.affine(h, d);  // linear output: features are real-valued
        model.decoder = std::move(dec);
    }

    if (spec.gamma > 0.0) {
        Network pred;
        pred.affine(h, 1).sigmoid();
        model.predictor = std::move(pred);
    }

    for (int i = 0; i < spec.adversary_layers; ++i) model.adversary.affine(h, h).relu();
    model.adversary.affine(h, 1).sigmoid();

    model.encoder.init_params(rng);
    if (model.decoder) model.decoder->init_params(rng);
    if (model.predictor) model.predictor->init_params(rng);
    model.adversary.init_params(rng);
    return model;
}

// Serialize encoder, decoder, predictor, adversary parameters in that order.
inline std::vector<Tensor*> model_param_tensors(CensorModel& model) {
    return model.all_params();
}

}  // namespace censorkit
