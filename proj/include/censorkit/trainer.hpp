#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "censorkit/censor.hpp"
#include "censorkit/common.hpp"
#include "censorkit/data.hpp"
#include "censorkit/optim.hpp"

namespace censorkit {

enum class Schedule { strict_alternation, gated };
enum class OptimizerKind { adam, sgd };
enum class Side { adversary, actor };

struct TrainConfig {
    int batch_size = 32;
    int max_steps = 1000;
    std::uint64_t seed = 0;
    Schedule schedule = Schedule::strict_alternation;
    double adversary_upper_acc = 0.9;  // skip adversary updates above this
    double actor_lower_acc = 0.6;      // skip actor updates below this
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 1e-3;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
        if (!(0.5 <= actor_lower_acc && actor_lower_acc <= adversary_upper_acc &&
              adversary_upper_acc <= 1.0))
            throw ConfigError(
                "train: thresholds must satisfy 0.5 <= actorLowerAcc <= "
                "adversaryUpperAcc <= 1");
        if (learning_rate <= 0) throw ConfigError("train: learning_rate must be positive");
    }
};

struct StepRecord {
    int step = 0;  // 1-based
    Side side = Side::adversary;
    bool skipped = false;  // gated schedule declined the update
    LossBreakdown loss;    // pre-update loss on the minibatch
    double adversary_accuracy = 0.0;
};

struct TrainTrace {
    std::vector<StepRecord> steps;
};

class TrainingDiverged : public DivergedError {
public:
    TrainingDiverged(const std::string& what, TrainTrace trace)
        : DivergedError(what), trace_(std::move(trace)) {}
    const TrainTrace& trace() const { return trace_; }

private:
    TrainTrace trace_;
};

namespace detail {

// Alternating minimax loop shared by the tabular and image pipelines.
// The adapter computes per-minibatch loss + adversary accuracy while filling
// gradients, and applies one optimizer step per side on request.
template <typename Adapter>
TrainTrace run_minimax(Adapter& adapter, std::size_t n_rows, const TrainConfig& cfg) {
    cfg.validate();
    if (n_rows == 0) throw ConfigError("train: empty training set");

    TrainTrace trace;
    Rng shuffle_rng(cfg.seed);
    std::vector<std::size_t> order(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) order[i] = i;
    std::size_t cursor = n_rows;  // forces a shuffle before the first batch

    bool update_adversary = true;  // Algorithm-1 boolean U, adversary first
    for (int step = 1; step <= cfg.max_steps; ++step) {
        if (cursor >= n_rows) {
            shuffle_rng.shuffle(order);
            cursor = 0;
        }
        const std::size_t take =
            std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n_rows - cursor);
        const std::vector<std::size_t> rows(order.begin() + cursor,
                                            order.begin() + cursor + take);
        cursor += take;

        StepRecord rec;
        rec.step = step;
        rec.side = update_adversary ? Side::adversary : Side::actor;
        try {
            const StepEval ev = adapter.step_eval(rows);
            rec.loss = ev.loss;
            rec.adversary_accuracy = ev.adversary_accuracy;

            bool apply = true;
            if (cfg.schedule == Schedule::gated) {
                if (update_adversary && ev.adversary_accuracy > cfg.adversary_upper_acc)
                    apply = false;
                if (!update_adversary && ev.adversary_accuracy < cfg.actor_lower_acc)
                    apply = false;
            }
            rec.skipped = !apply;
            if (apply) {
                if (update_adversary) adapter.adversary_apply();
                else adapter.actor_apply();
            }
        } catch (const DivergedError& e) {
            trace.steps.push_back(rec);
            throw TrainingDiverged(std::string("training diverged at step ") +
                                       std::to_string(step) + ": " + e.what(),
                                   std::move(trace));
        }
        trace.steps.push_back(rec);
        update_adversary = !update_adversary;
    }
    return trace;
}

}  // namespace detail

inline Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& rows) {
    Batch b;
    const std::size_t d = ds.dim();
    b.x = Tensor({rows.size(), d});
    b.s.resize(rows.size());
    if (!ds.y.empty()) b.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(ds.x.data.begin() + rows[i] * d, d, b.x.data.begin() + i * d);
        b.s[i] = ds.s[rows[i]];
        if (!ds.y.empty()) b.y[i] = ds.y[rows[i]];
    }
    return b;
}

// Owns the optimizer state for one training run over a CensorModel.
class Trainer {
public:
    Trainer(CensorModel& model, TrainConfig cfg) : model_(&model), cfg_(cfg) {
        cfg_.validate();
        AdamConfig adam;
        adam.learning_rate = cfg_.learning_rate;
        actor_opt_ = AdamState(model.actor_params(), adam);
        adversary_opt_ = AdamState(model.adversary_params(), adam);
    }

    // One strictly-alternating step: ascent on the adversary when u is true,
    // descent on the actor otherwise. Returns the pre-update loss and not-u.
    std::pair<LossBreakdown, bool> train_step(const Batch& batch, bool u) {
        const StepEval ev = joint_backward(*model_, batch);
        apply(u ? Side::adversary : Side::actor);
        return {ev.loss, !u};
    }

    // As train_step, but the update is skipped (u still toggles) when the
    // adversary's minibatch accuracy on S leaves the configured band.
    std::pair<LossBreakdown, bool> gated_train_step(const Batch& batch, bool u) {
        const StepEval ev = joint_backward(*model_, batch);
        const bool apply_update = u ? ev.adversary_accuracy <= cfg_.adversary_upper_acc
                                    : ev.adversary_accuracy >= cfg_.actor_lower_acc;
        if (apply_update) apply(u ? Side::adversary : Side::actor);
        return {ev.loss, !u};
    }

    // Runs max_steps minibatch steps with seeded per-epoch shuffling. The
    // model is left at its final parameters; divergence raises
    // TrainingDiverged carrying the partial trace.
    TrainTrace train(const Dataset& train_split) {
        struct CensorAdapter {
            Trainer* self;
            const Dataset* ds;
            StepEval step_eval(const std::vector<std::size_t>& rows) {
                return joint_backward(*self->model_, make_batch(*ds, rows));
            }
            void adversary_apply() { self->apply(Side::adversary); }
            void actor_apply() { self->apply(Side::actor); }
        };
        if (model_->gamma > 0.0 && train_split.y.empty())
            throw ConfigError("train: gamma > 0 requires labels in the training split");
        CensorAdapter adapter{this, &train_split};
        return detail::run_minimax(adapter, train_split.rows(), cfg_);
    }

    const TrainConfig& config() const { return cfg_; }

private:
    void apply(Side side) {
        const bool adv = side == Side::adversary;
        auto params = adv ? model_->adversary_params() : model_->actor_params();
        auto grads = adv ? model_->adversary_grads() : model_->actor_grads();
        const auto dir = adv ? StepDirection::ascent : StepDirection::descent;
        if (cfg_.optimizer == OptimizerKind::adam) {
            (adv ? adversary_opt_ : actor_opt_).step(params, grads, dir);
        } else {
            sgd_step(params, grads, cfg_.learning_rate, dir);
        }
        model_->encoder.mark_params_changed();
        if (model_->decoder) model_->decoder->mark_params_changed();
        if (model_->predictor) model_->predictor->mark_params_changed();
        model_->adversary.mark_params_changed();
    }

    CensorModel* model_;
    TrainConfig cfg_;
    AdamState actor_opt_;
    AdamState adversary_opt_;
};

}  // namespace censorkit
