#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "censorkit/censor.hpp"
#include "censorkit/common.hpp"
#include "censorkit/data.hpp"
#include "censorkit/metrics.hpp"
#include "censorkit/trainer.hpp"

namespace censorkit {

// ---------------------------------------------------------------------------
// Hyperparameter prior: a product of simple distributions. alpha stays fixed.
// ---------------------------------------------------------------------------

struct HyperPrior {
    int encoder_layers_min = 1, encoder_layers_max = 3;
    int hidden_units_min = 1, hidden_units_max = 100;
    int adversary_layers_min = 1, adversary_layers_max = 3;
    double alpha = 0.05;
    double beta_min = 0.0, beta_max = 50.0;
    double gamma_min = 0.0, gamma_max = 10.0;
};

struct HyperParams {
    int encoder_layers = 1;
    int hidden_units = 16;
    int adversary_layers = 1;
    double alpha = 0.05;
    double beta = 1.0;
    double gamma = 1.0;
};

inline HyperParams sample_prior(const HyperPrior& prior, Rng& rng) {
    HyperParams hp;
    hp.encoder_layers =
        static_cast<int>(rng.uniform_int(prior.encoder_layers_min, prior.encoder_layers_max));
    hp.hidden_units =
        static_cast<int>(rng.uniform_int(prior.hidden_units_min, prior.hidden_units_max));
    hp.adversary_layers = static_cast<int>(
        rng.uniform_int(prior.adversary_layers_min, prior.adversary_layers_max));
    hp.alpha = prior.alpha;
    hp.beta = rng.uniform(prior.beta_min, prior.beta_max);
    hp.gamma = rng.uniform(prior.gamma_min, prior.gamma_max);
    return hp;
}

// ---------------------------------------------------------------------------
// One experiment: build, train, evaluate on validation and test.
// ---------------------------------------------------------------------------

struct TraceSummary {
    int steps = 0;
    LossBreakdown final_loss;
    double final_adversary_accuracy = 0.0;
};

struct ExperimentRecord {
    int index = 0;
    std::uint64_t seed = 0;
    HyperParams hyperparams;
    bool failed = false;
    std::string failure;
    FairnessReport valid_metrics;
    FairnessReport test_metrics;
    TraceSummary summary;
};

inline Predictions model_predictions(CensorModel& model, const Dataset& ds) {
    if (!model.predictor) throw ConfigError("predictions require a predictor");
    const Tensor r = model.encoder.forward(ds.x);
    const Tensor scores = model.predictor->forward(r);
    Predictions p;
    p.y_hat.resize(ds.rows());
    p.scores.resize(ds.rows());
    p.y = ds.y;
    p.s = ds.s;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        p.scores[i] = scores.data[i];
        p.y_hat[i] = scores.data[i] > 0.5 ? 1 : 0;
    }
    return p;
}

inline FairnessReport evaluate_model(CensorModel& model, const Dataset& ds,
                                     const std::vector<double>& t_grid) {
    return make_fairness_report(model_predictions(model, ds), t_grid);
}

inline ExperimentRecord run_experiment(const Splits& splits, const HyperParams& hp,
                                       const TrainConfig& base_cfg, int index,
                                       std::uint64_t seed,
                                       const std::vector<double>& t_grid) {
    ExperimentRecord rec;
    rec.index = index;
    rec.seed = seed;
    rec.hyperparams = hp;
    try {
        Rng init_rng(mix_seed(seed, 1));
        CensorModelSpec spec;
        spec.input_dim = splits.train.dim();
        spec.encoder_layers = hp.encoder_layers;
        spec.hidden_units = hp.hidden_units;
        spec.adversary_layers = hp.adversary_layers;
        spec.alpha = hp.alpha;
        spec.beta = hp.beta;
        spec.gamma = hp.gamma;
        CensorModel model = build_censor_model(spec, init_rng);

        TrainConfig cfg = base_cfg;
        cfg.seed = mix_seed(seed, 2);
        Trainer trainer(model, cfg);
        const TrainTrace trace = trainer.train(splits.train);

        rec.summary.steps = static_cast<int>(trace.steps.size());
        if (!trace.steps.empty()) {
            rec.summary.final_loss = trace.steps.back().loss;
            rec.summary.final_adversary_accuracy = trace.steps.back().adversary_accuracy;
        }
        rec.valid_metrics = evaluate_model(model, splits.valid, t_grid);
        rec.test_metrics = evaluate_model(model, splits.test, t_grid);
    } catch (const DivergedError& e) {
        rec.failed = true;
        rec.failure = e.what();
    }
    return rec;
}

// Random search with per-experiment seeds derived from the master seed, so
// the record set is identical for any degree of parallelism.
inline std::vector<ExperimentRecord> run_search(const Splits& splits,
                                                const HyperPrior& prior, int n_experiments,
                                                const TrainConfig& base_cfg,
                                                std::uint64_t master_seed,
                                                const std::vector<double>& t_grid,
                                                int jobs = 1) {
    if (n_experiments < 0) throw ConfigError("search: nExperiments must be >= 0");
    std::vector<ExperimentRecord> records(static_cast<std::size_t>(n_experiments));
    if (n_experiments == 0) return records;
    jobs = std::max(1, jobs);

    std::atomic<int> next{0};
    const auto worker = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= n_experiments) return;
            const std::uint64_t seed = mix_seed(master_seed, static_cast<std::uint64_t>(i));
            Rng prior_rng(mix_seed(seed, 0));
            const HyperParams hp = sample_prior(prior, prior_rng);
            records[static_cast<std::size_t>(i)] =
                run_experiment(splits, hp, base_cfg, i, seed, t_grid);
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return records;
}

// ---------------------------------------------------------------------------
// Per-t model selection on validation; ties break toward the lower validation
// discrimination, then the lower experiment index.
// ---------------------------------------------------------------------------

inline std::vector<int> select_per_t(const std::vector<ExperimentRecord>& records,
                                     const std::vector<double>& t_grid) {
    std::vector<int> selected;
    selected.reserve(t_grid.size());
    for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
        int best = -1;
        double best_delta = 0.0, best_disc = 0.0;
        for (const auto& rec : records) {
            if (rec.failed) continue;
            const double d = rec.valid_metrics.delta_curve[ti].delta;
            const double disc = rec.valid_metrics.y_disc;
            const bool wins = best < 0 || d > best_delta ||
                              (d == best_delta && disc < best_disc);
            if (wins) {
                best = rec.index;
                best_delta = d;
                best_disc = disc;
            }
        }
        if (best < 0) throw MetricError("select: no completed experiments");
        selected.push_back(best);
    }
    return selected;
}

// ---------------------------------------------------------------------------
// Paired comparison across splits: per-t differences, mean, and a Student-t
// 95% confidence interval.
// ---------------------------------------------------------------------------

struct ArmRun {
    std::uint64_t split_seed = 0;
    std::vector<double> test_delta;  // per t-grid point
};

struct PairedComparison {
    std::vector<double> t_grid;
    std::vector<std::vector<double>> per_split_diff;  // [t][split]
    std::vector<double> mean_diff;
    std::vector<double> ci_low;
    std::vector<double> ci_high;
};

inline PairedComparison paired_compare(const std::vector<ArmRun>& a,
                                       const std::vector<ArmRun>& b,
                                       const std::vector<double>& t_grid) {
    if (a.size() != b.size() || a.empty())
        throw ConfigError("paired_compare: arm run counts differ or are empty");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].split_seed != b[i].split_seed)
            throw ConfigError("paired_compare: split seeds do not match");
        if (a[i].test_delta.size() != t_grid.size() ||
            b[i].test_delta.size() != t_grid.size())
            throw ConfigError("paired_compare: run is missing t-grid points");
    }
    const std::size_t n = a.size();
    PairedComparison out;
    out.t_grid = t_grid;
    out.per_split_diff.assign(t_grid.size(), std::vector<double>(n, 0.0));
    out.mean_diff.resize(t_grid.size());
    out.ci_low.resize(t_grid.size());
    out.ci_high.resize(t_grid.size());

    const double t_crit =
        n >= 2 ? boost::math::quantile(
                     boost::math::students_t_distribution<double>(static_cast<double>(n - 1)),
                     0.975)
               : 0.0;

    for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out.per_split_diff[ti][i] = a[i].test_delta[ti] - b[i].test_delta[ti];
            mean += out.per_split_diff[ti][i];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = out.per_split_diff[ti][i] - mean;
            var += c * c;
        }
        const double sd = n >= 2 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
        const double half = t_crit * sd / std::sqrt(static_cast<double>(n));
        out.mean_diff[ti] = mean;
        out.ci_low[ti] = mean - half;
        out.ci_high[ti] = mean + half;
    }
    return out;
}

// ---------------------------------------------------------------------------
// beta/(beta+gamma) study with Spearman rank correlation.
// ---------------------------------------------------------------------------

struct RatioPoint {
    int index = 0;
    double ratio = 0.0;
    double test_discrimination = 0.0;
};

struct BetaRatioStudy {
    std::vector<RatioPoint> points;
    std::optional<double> spearman;  // empty when ranks are degenerate
};

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

inline std::optional<double> pearson(const std::vector<double>& x,
                                     const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

inline std::optional<double> spearman_correlation(const std::vector<double>& x,
                                                  const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) return std::nullopt;
    return detail::pearson(detail::average_ranks(x), detail::average_ranks(y));
}

inline BetaRatioStudy beta_ratio_study(const std::vector<ExperimentRecord>& records) {
    BetaRatioStudy study;
    std::vector<double> ratios, discs;
    for (const auto& rec : records) {
        if (rec.failed) continue;
        const double denom = rec.hyperparams.beta + rec.hyperparams.gamma;
        if (denom <= 0.0) continue;
        RatioPoint pt;
        pt.index = rec.index;
        pt.ratio = rec.hyperparams.beta / denom;
        pt.test_discrimination = rec.test_metrics.y_disc;
        study.points.push_back(pt);
        ratios.push_back(pt.ratio);
        discs.push_back(pt.test_discrimination);
    }
    study.spearman = spearman_correlation(ratios, discs);
    return study;
}

}  // namespace censorkit
