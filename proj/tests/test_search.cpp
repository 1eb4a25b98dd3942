#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "censorkit/search.hpp"

using namespace censorkit;

namespace {

Splits toy_splits(std::uint64_t seed = 0) {
    SynthTabularSpec spec;
    spec.n = 240;
    spec.d = 6;
    spec.sensitive_effect = 2.0;
    spec.label_noise = 0.05;
    spec.seed = seed;
    return split(synth_tabular(spec), {0.5, 0.25, 0.25, seed});
}

TrainConfig quick_cfg() {
    TrainConfig cfg;
    cfg.max_steps = 120;
    cfg.batch_size = 16;
    return cfg;
}

HyperPrior small_prior() {
    HyperPrior prior;
    prior.hidden_units_max = 12;  // keep unit-test experiments fast
    return prior;
}

// Record with just enough filled in to drive selection and the ratio study.
ExperimentRecord fake_record(int index, double acc, double disc, double beta,
                             double gamma, const std::vector<double>& grid) {
    ExperimentRecord rec;
    rec.index = index;
    rec.hyperparams.beta = beta;
    rec.hyperparams.gamma = gamma;
    rec.valid_metrics.y_acc = acc;
    rec.valid_metrics.y_disc = disc;
    rec.valid_metrics.delta_curve = delta_curve(acc, disc, grid);
    rec.test_metrics = rec.valid_metrics;
    return rec;
}

}  // namespace

TEST_CASE("sample_prior") {
    HyperPrior prior;
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const HyperParams hp = sample_prior(prior, rng);
        CHECK(hp.alpha == 0.05);
        CHECK(hp.encoder_layers >= 1);
        CHECK(hp.encoder_layers <= 3);
        CHECK(hp.hidden_units >= 1);
        CHECK(hp.hidden_units <= 100);
        CHECK(hp.adversary_layers >= 1);
        CHECK(hp.adversary_layers <= 3);
        CHECK(hp.beta >= 0.0);
        CHECK(hp.beta <= 50.0);
        CHECK(hp.gamma >= 0.0);
        CHECK(hp.gamma <= 10.0);
    }

    SECTION("identical rng state gives an identical draw") {
        Rng a(77), b(77);
        const HyperParams ha = sample_prior(prior, a);
        const HyperParams hb = sample_prior(prior, b);
        CHECK(ha.beta == hb.beta);
        CHECK(ha.gamma == hb.gamma);
        CHECK(ha.hidden_units == hb.hidden_units);
    }
}

TEST_CASE("run_search") {
    SECTION("zero experiments give an empty record set") {
        const Splits sp = toy_splits();
        CHECK(run_search(sp, small_prior(), 0, quick_cfg(), 1, default_t_grid()).empty());
    }

    SECTION("records carry both reports with the full t grid") {
        const Splits sp = toy_splits(1);
        const auto records =
            run_search(sp, small_prior(), 3, quick_cfg(), 42, default_t_grid());
        REQUIRE(records.size() == 3);
        for (const auto& rec : records) {
            REQUIRE_FALSE(rec.failed);
            CHECK(rec.valid_metrics.delta_curve.size() == 31);
            CHECK(rec.test_metrics.delta_curve.size() == 31);
            CHECK(rec.summary.steps == 120);
        }
    }

    SECTION("results are identical across parallelism degrees") {
        const Splits sp = toy_splits(2);
        const auto a = run_search(sp, small_prior(), 6, quick_cfg(), 7, default_t_grid(), 1);
        const auto b = run_search(sp, small_prior(), 6, quick_cfg(), 7, default_t_grid(), 3);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].hyperparams.beta == b[i].hyperparams.beta);
            CHECK(a[i].hyperparams.hidden_units == b[i].hyperparams.hidden_units);
            CHECK(a[i].valid_metrics.y_acc == b[i].valid_metrics.y_acc);
            CHECK(a[i].valid_metrics.y_disc == b[i].valid_metrics.y_disc);
            CHECK(a[i].test_metrics.y_acc == b[i].test_metrics.y_acc);
            CHECK(a[i].test_metrics.y_disc == b[i].test_metrics.y_disc);
        }
    }
}

TEST_CASE("select_per_t") {
    const std::vector<double> grid = {0.0, 1.0};

    SECTION("a single record wins every t") {
        const std::vector<ExperimentRecord> records = {
            fake_record(0, 0.8, 0.2, 1, 1, grid)};
        CHECK(select_per_t(records, grid) == std::vector<int>{0, 0});
    }

    SECTION("tradeoff flips the winner as t grows") {
        const std::vector<ExperimentRecord> records = {
            fake_record(0, 0.9, 0.3, 1, 1, grid),   // t=0: 0.9, t=1: 0.6
            fake_record(1, 0.8, 0.05, 1, 1, grid)}; // t=0: 0.8, t=1: 0.75
        CHECK(select_per_t(records, grid) == std::vector<int>{0, 1});
    }

    SECTION("ties break toward lower discrimination, then lower index") {
        std::vector<ExperimentRecord> records = {
            fake_record(0, 0.8, 0.2, 1, 1, grid),
            fake_record(1, 0.8, 0.1, 1, 1, grid)};  // same delta at t=0
        CHECK(select_per_t(records, grid)[0] == 1);
        records[1].valid_metrics.y_disc = 0.2;
        records[1].valid_metrics.delta_curve = delta_curve(0.8, 0.2, grid);
        CHECK(select_per_t(records, grid)[0] == 0);
    }

    SECTION("failed records are skipped; all-failed is an error") {
        std::vector<ExperimentRecord> records = {
            fake_record(0, 0.99, 0.5, 1, 1, grid),
            fake_record(1, 0.7, 0.0, 1, 1, grid)};
        records[0].failed = true;
        CHECK(select_per_t(records, grid) == std::vector<int>{1, 1});
        records[1].failed = true;
        CHECK_THROWS_AS(select_per_t(records, grid), MetricError);
    }

    SECTION("selected validation discrimination is non-increasing in t") {
        Rng rng(4);
        const auto full_grid = default_t_grid();
        std::vector<ExperimentRecord> records;
        for (int i = 0; i < 40; ++i)
            records.push_back(fake_record(i, rng.uniform(0.5, 1.0), rng.uniform(0.0, 0.5),
                                          1, 1, full_grid));
        const auto selected = select_per_t(records, full_grid);
        for (std::size_t ti = 1; ti < selected.size(); ++ti) {
            const double prev = records[selected[ti - 1]].valid_metrics.y_disc;
            const double cur = records[selected[ti]].valid_metrics.y_disc;
            CHECK(cur <= prev);
        }
    }
}

TEST_CASE("paired_compare") {
    const std::vector<double> grid = {0.0};
    const auto arm = [&](std::uint64_t seed, std::vector<double> values) {
        std::vector<ArmRun> runs;
        for (std::size_t i = 0; i < values.size(); ++i)
            runs.push_back({seed + i, {values[i]}});
        return runs;
    };

    SECTION("hand Student-t fixture: diffs {1,2,3,4,5}") {
        const auto a = arm(0, {11, 12, 13, 14, 15});
        const auto b = arm(0, {10, 10, 10, 10, 10});
        const PairedComparison cmp = paired_compare(a, b, grid);
        CHECK(cmp.mean_diff[0] == Catch::Approx(3.0).margin(1e-12));
        CHECK(cmp.ci_low[0] == Catch::Approx(1.037).margin(1e-3));
        CHECK(cmp.ci_high[0] == Catch::Approx(4.963).margin(1e-3));
    }

    SECTION("zero variance collapses the interval") {
        const auto a = arm(0, {2, 2, 2});
        const auto b = arm(0, {1, 1, 1});
        const PairedComparison cmp = paired_compare(a, b, grid);
        CHECK(cmp.mean_diff[0] == 1.0);
        CHECK(cmp.ci_low[0] == 1.0);
        CHECK(cmp.ci_high[0] == 1.0);
    }

    SECTION("antisymmetric under swapping the arms") {
        const auto a = arm(0, {1.0, 2.5, 2.0, 0.5});
        const auto b = arm(0, {0.2, 2.6, 1.0, 0.9});
        const PairedComparison ab = paired_compare(a, b, grid);
        const PairedComparison ba = paired_compare(b, a, grid);
        CHECK(ab.mean_diff[0] == Catch::Approx(-ba.mean_diff[0]).margin(1e-12));
        CHECK(ab.ci_low[0] == Catch::Approx(-ba.ci_high[0]).margin(1e-12));
        CHECK(ab.ci_high[0] == Catch::Approx(-ba.ci_low[0]).margin(1e-12));
    }

    SECTION("mismatched split seeds are rejected") {
        const auto a = arm(0, {1, 2});
        const auto b = arm(5, {1, 2});
        CHECK_THROWS_AS(paired_compare(a, b, grid), ConfigError);
    }

    SECTION("intervals cover a known mean shift about 95% of the time") {
        Rng rng(8);
        const double mu = 0.4;
        int covered = 0;
        const int trials = 400;
        for (int trial = 0; trial < trials; ++trial) {
            std::vector<ArmRun> a, b;
            for (int i = 0; i < 5; ++i) {
                a.push_back({static_cast<std::uint64_t>(i), {mu + rng.normal() * 0.3}});
                b.push_back({static_cast<std::uint64_t>(i), {0.0}});
            }
            const PairedComparison cmp = paired_compare(a, b, grid);
            if (cmp.ci_low[0] <= mu && mu <= cmp.ci_high[0]) ++covered;
        }
        const double coverage = static_cast<double>(covered) / trials;
        CHECK(coverage > 0.90);
        CHECK(coverage < 0.99);
    }
}

TEST_CASE("beta ratio study") {
    const std::vector<double> grid = {0.0};

    SECTION("ratio arithmetic") {
        const std::vector<ExperimentRecord> records = {
            fake_record(0, 0.8, 0.3, 50.0, 10.0, grid)};
        const BetaRatioStudy study = beta_ratio_study(records);
        REQUIRE(study.points.size() == 1);
        CHECK(study.points[0].ratio == Catch::Approx(50.0 / 60.0).margin(1e-12));
    }

    SECTION("identical records leave the correlation undefined") {
        std::vector<ExperimentRecord> records;
        for (int i = 0; i < 5; ++i) records.push_back(fake_record(i, 0.8, 0.3, 2, 1, grid));
        CHECK_FALSE(beta_ratio_study(records).spearman.has_value());
    }

    SECTION("monotone decreasing discrimination gives correlation -1") {
        std::vector<ExperimentRecord> records;
        for (int i = 0; i < 6; ++i) {
            const double beta = static_cast<double>(i + 1);
            records.push_back(fake_record(i, 0.8, 0.5 / beta, beta, 1.0, grid));
        }
        REQUIRE(beta_ratio_study(records).spearman.has_value());
        CHECK(*beta_ratio_study(records).spearman == Catch::Approx(-1.0).margin(1e-12));
    }

    SECTION("zero-weight and failed records are excluded") {
        std::vector<ExperimentRecord> records = {
            fake_record(0, 0.8, 0.3, 0.0, 0.0, grid),
            fake_record(1, 0.8, 0.2, 1.0, 1.0, grid),
            fake_record(2, 0.8, 0.1, 2.0, 1.0, grid)};
        records[2].failed = true;
        CHECK(beta_ratio_study(records).points.size() == 1);
    }
}

TEST_CASE("spearman handles ties by average ranks") {
    // x has a tie; hand value: ranks x = {1.5, 1.5, 3}, y = {1, 2, 3}
    const auto rho = spearman_correlation({1.0, 1.0, 2.0}, {0.1, 0.2, 0.3});
    REQUIRE(rho.has_value());
    CHECK(*rho == Catch::Approx(0.8660254).margin(1e-6));
}
