#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "censorkit/common.hpp"
#include "censorkit/nn.hpp"
#include "censorkit/tensor.hpp"

namespace censorkit {

// Largest discrete support the all-binary-functions oracle will accept.
inline constexpr std::size_t kOracleSupportCap = 4096;
// Support sizes up to this bound are handled by explicit enumeration of all
// 2^k hypotheses (complements included); beyond it the positive-part form of
// the same supremum is used.
inline constexpr std::size_t kEnumerationCap = 16;
inline constexpr int kDiscretizeBins = 8;

struct Predictions {
    std::vector<int8_t> y_hat;   // binary decisions
    std::vector<double> scores;  // optional, empty if absent
    std::vector<int8_t> y;       // optional true labels
    std::vector<int8_t> s;       // sensitive values

    void validate() const {
        const std::size_t n = y_hat.size();
        if (n == 0) throw MetricError("predictions: empty");
        if (s.size() != n) throw MetricError("predictions: s length mismatch");
        if (!y.empty() && y.size() != n) throw MetricError("predictions: y length mismatch");
        if (!scores.empty() && scores.size() != n)
            throw MetricError("predictions: scores length mismatch");
        for (int8_t v : y_hat)
            if (v != 0 && v != 1) throw MetricError("predictions: yHat must be 0/1");
    }
};

// |mean(yHat | s=0) - mean(yHat | s=1)|; both groups must be nonempty.
inline double discrimination(const Predictions& p) {
    p.validate();
    double sum0 = 0.0, sum1 = 0.0;
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < p.y_hat.size(); ++i) {
        if (p.s[i] == 1) {
            sum1 += p.y_hat[i];
            ++n1;
        } else {
            sum0 += p.y_hat[i];
            ++n0;
        }
    }
    if (n0 == 0 || n1 == 0)
        throw MetricError("discrimination undefined: a sensitive group is empty");
    return std::fabs(sum0 / static_cast<double>(n0) - sum1 / static_cast<double>(n1));
}

inline double accuracy(const Predictions& p) {
    p.validate();
    if (p.y.empty()) throw MetricError("accuracy: true labels missing");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < p.y_hat.size(); ++i)
        if (p.y_hat[i] == p.y[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(p.y_hat.size());
}

// The accuracy/discrimination tradeoff objective.
inline double delta(double y_acc, double y_disc, double t) {
    if (t < 0) throw MetricError("delta: t must be >= 0");
    return y_acc - t * y_disc;
}

struct DeltaPoint {
    double t = 0.0;
    double delta = 0.0;
};

inline std::vector<double> default_t_grid() {
    std::vector<double> t(31);
    for (int i = 0; i <= 30; ++i) t[i] = 3.0 * static_cast<double>(i) / 30.0;
    return t;
}

inline std::vector<DeltaPoint> delta_curve(double y_acc, double y_disc,
                                           const std::vector<double>& t_grid) {
    std::vector<DeltaPoint> curve;
    curve.reserve(t_grid.size());
    for (double t : t_grid) curve.push_back({t, delta(y_acc, y_disc, t)});
    return curve;
}

// ---------------------------------------------------------------------------
// Empirical H-divergence.
//
// Over a finite support with the class of all binary functions the supremum
// sup_eta 2[mean_A eta - mean_B eta] is enumerated hypothesis by hypothesis
// (the class is symmetric, so complements appear as their own bitmasks and no
// absolute value is taken). For supports too large to enumerate but within
// the cap, the identical value 2 * sum_v max(0, pA(v) - pB(v)) is used.
// ---------------------------------------------------------------------------

enum class HypothesisClass { all_binary_functions, axis_thresholds };

namespace detail {

struct SupportCounts {
    std::vector<double> freq_a;  // empirical frequency per support value
    std::vector<double> freq_b;
};

inline SupportCounts tabulate(const std::vector<std::int64_t>& a,
                              const std::vector<std::int64_t>& b) {
    if (a.empty() || b.empty())
        throw MetricError("h-divergence: both samples must be nonempty");
    std::map<std::int64_t, std::pair<std::size_t, std::size_t>> counts;
    for (std::int64_t v : a) counts[v].first++;
    for (std::int64_t v : b) counts[v].second++;
    SupportCounts out;
    out.freq_a.reserve(counts.size());
    out.freq_b.reserve(counts.size());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    for (const auto& [value, c] : counts) {
        out.freq_a.push_back(static_cast<double>(c.first) / na);
        out.freq_b.push_back(static_cast<double>(c.second) / nb);
    }
    return out;
}

}  // namespace detail

// Samples are codes in a common discrete space.
inline double empirical_h_divergence(const std::vector<std::int64_t>& a,
                                     const std::vector<std::int64_t>& b) {
    const auto support = detail::tabulate(a, b);
    const std::size_t k = support.freq_a.size();
    if (k > kOracleSupportCap)
        throw MetricError("h-divergence oracle intractable: support of " +
                          std::to_string(k) + " distinct values exceeds " +
                          std::to_string(kOracleSupportCap));

    if (k <= kEnumerationCap) {
        std::vector<double> diff(k);
        for (std::size_t v = 0; v < k; ++v)
            diff[v] = support.freq_a[v] - support.freq_b[v];
        double best = 0.0;  // the empty hypothesis scores 0
        for (std::uint64_t mask = 1; mask < (1ULL << k); ++mask) {
            double gap = 0.0;
            for (std::size_t v = 0; v < k; ++v)
                if (mask & (1ULL << v)) gap += diff[v];
            best = std::max(best, 2.0 * gap);
        }
        return best;
    }

    double gap = 0.0;
    for (std::size_t v = 0; v < k; ++v)
        gap += std::max(0.0, support.freq_a[v] - support.freq_b[v]);
    return 2.0 * gap;
}

// 1-D thresholds x >= tau and their complements.
inline double empirical_h_divergence_1d(const std::vector<double>& a,
                                        const std::vector<double>& b) {
    if (a.empty() || b.empty())
        throw MetricError("h-divergence: both samples must be nonempty");
    std::vector<double> cuts = a;
    cuts.insert(cuts.end(), b.begin(), b.end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double best = 0.0;  // tau = +inf gives the all-zeros hypothesis
    for (double tau : cuts) {
        double mean_a = 0.0, mean_b = 0.0;
        for (double v : a) mean_a += v >= tau ? 1.0 : 0.0;
        for (double v : b) mean_b += v >= tau ? 1.0 : 0.0;
        const double gap = mean_a / na - mean_b / nb;
        best = std::max(best, 2.0 * std::max(gap, -gap));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Discretization for the oracle: each dimension is quantized into 8
// equal-width bins over its observed range, and the joint bin vector is
// interned into a dense code (first-appearance order).
// ---------------------------------------------------------------------------

inline std::vector<std::int64_t> discretize(const Tensor& reps,
                                            int bins = kDiscretizeBins) {
    if (reps.rank() != 2) throw MetricError("discretize: expected [n, k] representations");
    const std::size_t n = reps.shape[0], k = reps.shape[1];
    if (n == 0) throw MetricError("discretize: empty sample");
    std::vector<double> lo(k, std::numeric_limits<double>::infinity());
    std::vector<double> hi(k, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            lo[j] = std::min(lo[j], reps.at(i, j));
            hi[j] = std::max(hi[j], reps.at(i, j));
        }
    }
    std::map<std::vector<int>, std::int64_t> interned;
    std::vector<std::int64_t> codes(n);
    std::vector<int> key(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double width = hi[j] - lo[j];
            int bin = 0;
            if (width > 0.0) {
                bin = static_cast<int>(static_cast<double>(bins) *
                                       (reps.at(i, j) - lo[j]) / width);
                bin = std::min(bins - 1, std::max(0, bin));
            }
            key[j] = bin;
        }
        auto it = interned.find(key);
        if (it == interned.end())
            it = interned.emplace(key, static_cast<std::int64_t>(interned.size())).first;
        codes[i] = it->second;
    }
    return codes;
}

// ---------------------------------------------------------------------------
// Lemma-2 certificate: y_disc <= (1/2) d_H over the discretized
// representations, using the all-binary-functions class (which contains any
// classifier that factors through the discretized representation).
// ---------------------------------------------------------------------------

struct Lemma2Certificate {
    double y_disc = 0.0;
    double half_divergence = 0.0;
    bool holds = false;

    double margin() const { return half_divergence - y_disc; }
};

inline Lemma2Certificate lemma2_certificate(const Predictions& p, const Tensor& reps) {
    p.validate();
    if (reps.rank() != 2 || reps.shape[0] != p.y_hat.size())
        throw MetricError("lemma2: representations do not align with predictions");
    const std::vector<std::int64_t> codes = discretize(reps);
    std::vector<std::int64_t> group0, group1;
    for (std::size_t i = 0; i < codes.size(); ++i)
        (p.s[i] == 1 ? group1 : group0).push_back(codes[i]);
    if (group0.empty() || group1.empty())
        throw MetricError("lemma2 undefined: a sensitive group is empty");

    Lemma2Certificate cert;
    cert.y_disc = discrimination(p);
    cert.half_divergence = empirical_h_divergence(group0, group1) / 2.0;
    cert.holds = cert.y_disc <= cert.half_divergence + 1e-12;
    return cert;
}

// Thresholds the adversary at 0.5 (ties to class 0) to form one hypothesis
// and reports its group gap, oriented nonnegative via the class symmetry.
inline double adversary_proxy_divergence(Network& adversary, const Tensor& reps,
                                         const std::vector<int8_t>& s) {
    if (reps.rank() != 2 || reps.shape[0] != s.size())
        throw MetricError("proxy divergence: representations do not align with s");
    const Tensor scores = adversary.forward(reps);
    double sum0 = 0.0, sum1 = 0.0;
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double h = scores.data[i] > 0.5 ? 1.0 : 0.0;
        if (s[i] == 1) {
            sum1 += h;
            ++n1;
        } else {
            sum0 += h;
            ++n0;
        }
    }
    if (n0 == 0 || n1 == 0)
        throw MetricError("proxy divergence undefined: a sensitive group is empty");
    const double gap = sum0 / static_cast<double>(n0) - sum1 / static_cast<double>(n1);
    return 2.0 * std::max(gap, -gap);
}

// ---------------------------------------------------------------------------
// FairnessReport
// ---------------------------------------------------------------------------

struct FairnessReport {
    double y_acc = 0.0;
    double y_disc = 0.0;
    std::vector<DeltaPoint> delta_curve;
    std::optional<double> h_divergence;
    std::optional<double> lemma2_margin;
};

inline FairnessReport make_fairness_report(const Predictions& p,
                                           const std::vector<double>& t_grid) {
    FairnessReport r;
    r.y_acc = accuracy(p);
    r.y_disc = discrimination(p);
    r.delta_curve = delta_curve(r.y_acc, r.y_disc, t_grid);
    return r;
}

}  // namespace censorkit
