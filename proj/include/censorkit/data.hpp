#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "censorkit/common.hpp"
#include "censorkit/tensor.hpp"

namespace censorkit {

// ---------------------------------------------------------------------------
// CSV primitives: comma-separated, header row, UTF-8, double-quote escaping.
// ---------------------------------------------------------------------------

namespace csv {

inline std::vector<std::string> parse_line(const std::string& line, std::size_t row_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted)
        throw IngestionError("row " + std::to_string(row_no) + ": unterminated quote");
    fields.push_back(cur);
    return fields;
}

inline std::string quote_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

// Reads all rows; strips trailing CR. First row is the header.
inline std::vector<std::vector<std::string>> read_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IngestionError("cannot open CSV file: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::size_t row_no = 0;
    while (std::getline(is, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && is.peek() == EOF) break;
        rows.push_back(parse_line(line, row_no));
    }
    if (rows.empty()) throw IngestionError("empty CSV file: " + path);
    return rows;
}

// Round-trip-exact double formatting.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace csv

inline double parse_double_field(const std::string& s, std::size_t row_no,
                                 const std::string& column) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw IngestionError("row " + std::to_string(row_no) + ": cannot parse '" + s +
                             "' in numeric column '" + column + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Dataset {
    Tensor x;                               // [n, d]
    std::vector<int8_t> y;                  // -1 = unlabeled
    std::vector<int8_t> s;                  // {0, 1}
    std::vector<std::string> feature_names; // size d
    // Feature columns to z-standardize with training-split statistics when
    // the dataset is split. Empty once standardization has been applied.
    std::vector<std::size_t> standardize_cols;

    std::size_t rows() const { return x.rank() >= 1 ? x.shape[0] : 0; }
    std::size_t dim() const { return x.rank() >= 2 ? x.shape[1] : 0; }

    Dataset take(const std::vector<std::size_t>& idx) const {
        Dataset out;
        out.feature_names = feature_names;
        out.standardize_cols = standardize_cols;
        const std::size_t d = dim();
        out.x = Tensor({idx.size(), d});
        out.y.resize(idx.size());
        out.s.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const std::size_t r = idx[i];
            std::copy_n(x.data.begin() + r * d, d, out.x.data.begin() + i * d);
            out.y[i] = y[r];
            out.s[i] = s[r];
        }
        return out;
    }
};

struct Splits {
    Dataset train, valid, test;
};

struct TabularSchema {
    std::string label_column;
    std::string sensitive_column;
    std::string positive_sensitive_value;
    std::vector<std::string> categorical_columns;
    std::vector<std::string> numeric_columns;
};

struct SplitSpec {
    double train_fraction = 0.8;
    double valid_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
};

// Loads and encodes a CSV. Categorical columns are one-hot encoded in
// first-appearance order; numeric columns are kept raw here and z-scored with
// training statistics at split time. The label column must hold 0/1 (empty =
// unlabeled); the sensitive column is binarized against
// positive_sensitive_value and must end up with both groups present.
inline Dataset load_csv(const std::string& path, const TabularSchema& schema) {
    const auto rows = csv::read_file(path);
    const auto& header = rows[0];

    std::map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;

    const auto find_col = [&](const std::string& name) -> std::size_t {
        auto it = col_index.find(name);
        if (it == col_index.end())
            throw IngestionError("unknown column '" + name + "' in " + path);
        return it->second;
    };

    const std::size_t label_col = find_col(schema.label_column);
    const std::size_t sensitive_col = find_col(schema.sensitive_column);

    struct FeatureCol {
        std::string name;
        std::size_t index;
        bool categorical;
    };
    std::vector<FeatureCol> feature_cols;
    std::set<std::string> seen;
    for (const auto& name : schema.categorical_columns) {
        if (name == schema.label_column || name == schema.sensitive_column)
            throw IngestionError("column '" + name + "' is both feature and label/sensitive");
        if (!seen.insert(name).second)
            throw IngestionError("column '" + name + "' classified more than once");
        feature_cols.push_back({name, find_col(name), true});
    }
    for (const auto& name : schema.numeric_columns) {
        if (name == schema.label_column || name == schema.sensitive_column)
            throw IngestionError("column '" + name + "' is both feature and label/sensitive");
        if (!seen.insert(name).second)
            throw IngestionError("column '" + name + "' classified more than once");
        feature_cols.push_back({name, find_col(name), false});
    }

    const std::size_t n = rows.size() - 1;
    if (n == 0) throw IngestionError("no data rows in " + path);

    // First pass: collect category levels in order of first appearance.
    std::vector<std::vector<std::string>> levels(feature_cols.size());
    std::vector<std::map<std::string, std::size_t>> level_index(feature_cols.size());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != header.size())
            throw IngestionError("row " + std::to_string(r + 1) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " +
                                 std::to_string(rows[r].size()));
        for (std::size_t f = 0; f < feature_cols.size(); ++f) {
            if (!feature_cols[f].categorical) continue;
            const std::string& v = rows[r][feature_cols[f].index];
            auto& idx = level_index[f];
            if (idx.find(v) == idx.end()) {
                idx[v] = levels[f].size();
                levels[f].push_back(v);
            }
        }
    }

    std::vector<std::string> feature_names;
    std::vector<std::size_t> numeric_feature_cols;
    std::vector<std::size_t> feature_offset(feature_cols.size());
    std::size_t d = 0;
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
        feature_offset[f] = d;
        if (feature_cols[f].categorical) {
            for (const auto& lv : levels[f])
                feature_names.push_back(feature_cols[f].name + "=" + lv);
            d += levels[f].size();
        } else {
            numeric_feature_cols.push_back(d);
            feature_names.push_back(feature_cols[f].name);
            d += 1;
        }
    }

    Dataset out;
    out.x = Tensor({n, d});
    out.y.assign(n, -1);
    out.s.assign(n, 0);
    out.feature_names = std::move(feature_names);
    out.standardize_cols = std::move(numeric_feature_cols);

    bool seen_s0 = false, seen_s1 = false;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const std::size_t i = r - 1;
        const auto& row = rows[r];

        const std::string& yv = row[label_col];
        if (yv.empty()) {
            out.y[i] = -1;
        } else if (yv == "0") {
            out.y[i] = 0;
        } else if (yv == "1") {
            out.y[i] = 1;
        } else {
            throw IngestionError("row " + std::to_string(r + 1) + ": label column '" +
                                 schema.label_column + "' must be 0, 1 or empty, got '" +
                                 yv + "'");
        }

        out.s[i] = row[sensitive_col] == schema.positive_sensitive_value ? 1 : 0;
        (out.s[i] == 1 ? seen_s1 : seen_s0) = true;

        for (std::size_t f = 0; f < feature_cols.size(); ++f) {
            const std::string& v = row[feature_cols[f].index];
            if (feature_cols[f].categorical) {
                out.x.at(i, feature_offset[f] + level_index[f].at(v)) = 1.0;
            } else {
                out.x.at(i, feature_offset[f]) = parse_double_field(v, r + 1,
                                                                    feature_cols[f].name);
            }
        }
    }
    if (!seen_s0 || !seen_s1)
        throw IngestionError("sensitive column '" + schema.sensitive_column +
                             "' has a single observed group across all " +
                             std::to_string(n) + " rows (binarized against '" +
                             schema.positive_sensitive_value + "')");
    return out;
}

// Writes the encoded dataset back out; load_csv on the result (all feature
// columns numeric) reproduces the tensors exactly.
inline void write_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    const std::size_t d = ds.dim();
    for (std::size_t j = 0; j < d; ++j) os << csv::quote_field(ds.feature_names[j]) << ",";
    os << "y,s\n";
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) os << csv::format_double(ds.x.at(i, j)) << ",";
        if (ds.y[i] >= 0) os << static_cast<int>(ds.y[i]);
        os << "," << static_cast<int>(ds.s[i]) << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
}

namespace detail {

// Fit mean/sd on the training split only, then apply everywhere. A constant
// column gets a unit divisor so it standardizes to all-zeros on train.
inline void standardize_with_train_stats(Splits& sp) {
    const auto cols = sp.train.standardize_cols;
    const std::size_t n_train = sp.train.rows();
    for (std::size_t col : cols) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n_train; ++i) mean += sp.train.x.at(i, col);
        mean /= static_cast<double>(n_train);
        double var = 0.0;
        for (std::size_t i = 0; i < n_train; ++i) {
            const double c = sp.train.x.at(i, col) - mean;
            var += c * c;
        }
        var /= static_cast<double>(n_train);
        const double sd = std::sqrt(var);
        const double divisor = sd > 1e-12 ? sd : 1.0;
        for (Dataset* ds : {&sp.train, &sp.valid, &sp.test})
            for (std::size_t i = 0; i < ds->rows(); ++i)
                ds->x.at(i, col) = (ds->x.at(i, col) - mean) / divisor;
    }
    sp.train.standardize_cols.clear();
    sp.valid.standardize_cols.clear();
    sp.test.standardize_cols.clear();
}

}  // namespace detail

// Seeded shuffle, contiguous cut. Splits are disjoint and exhaustive; numeric
// standardization is fitted on the training split and applied to all three.
inline Splits split(const Dataset& ds, const SplitSpec& spec) {
    if (spec.train_fraction <= 0 || spec.valid_fraction <= 0 || spec.test_fraction <= 0)
        throw ConfigError("split fractions must be positive");
    if (std::fabs(spec.train_fraction + spec.valid_fraction + spec.test_fraction - 1.0) >
        1e-9)
        throw ConfigError("split fractions must sum to 1");

    const std::size_t n = ds.rows();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(idx);

    const auto n_train = static_cast<std::size_t>(spec.train_fraction * static_cast<double>(n));
    const auto n_valid = static_cast<std::size_t>(spec.valid_fraction * static_cast<double>(n));
    if (n_train == 0 || n_valid == 0 || n_train + n_valid >= n)
        throw ConfigError("split produces an empty part (n=" + std::to_string(n) + ")");

    Splits sp;
    sp.train = ds.take({idx.begin(), idx.begin() + n_train});
    sp.valid = ds.take({idx.begin() + n_train, idx.begin() + n_train + n_valid});
    sp.test = ds.take({idx.begin() + n_train + n_valid, idx.end()});
    detail::standardize_with_train_stats(sp);
    return sp;
}

// ---------------------------------------------------------------------------
// Synthetic tabular generator. S is Bernoulli(0.5); the first
// round(affected_fraction * d) features get a +sensitive_effect mean shift
// when S=1, so S is recoverable from X exactly when the effect is nonzero.
// Y thresholds a fixed random linear score at its empirical median, then
// flips labels at the noise rate.
// ---------------------------------------------------------------------------

struct SynthTabularSpec {
    std::size_t n = 1000;
    std::size_t d = 10;
    double sensitive_effect = 2.0;
    double label_noise = 0.0;
    double affected_fraction = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (n < 4) throw ConfigError("synth: n must be >= 4");
        if (d < 1) throw ConfigError("synth: d must be >= 1");
        if (label_noise < 0.0 || label_noise > 0.5)
            throw ConfigError("synth: label_noise must be in [0, 0.5]");
        if (affected_fraction < 0.0 || affected_fraction > 1.0)
            throw ConfigError("synth: affected_fraction must be in [0, 1]");
    }
};

inline Dataset synth_tabular(const SynthTabularSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t n = spec.n, d = spec.d;
    const auto n_affected =
        static_cast<std::size_t>(std::llround(spec.affected_fraction * static_cast<double>(d)));

    std::vector<double> w(d);
    for (double& v : w) v = rng.normal();

    Dataset out;
    out.x = Tensor({n, d});
    out.y.assign(n, 0);
    out.s.assign(n, 0);
    out.feature_names.reserve(d);
    for (std::size_t j = 0; j < d; ++j) out.feature_names.push_back("f" + std::to_string(j));

    std::vector<double> score(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        out.s[i] = rng.bernoulli(0.5) ? 1 : 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double mean = (j < n_affected && out.s[i] == 1) ? spec.sensitive_effect : 0.0;
            const double v = rng.normal(mean, 1.0);
            out.x.at(i, j) = v;
            score[i] += w[j] * v;
        }
    }

    std::vector<double> sorted = score;
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    const double median = sorted[n / 2];
    for (std::size_t i = 0; i < n; ++i) {
        int8_t label = score[i] > median ? 1 : 0;
        if (rng.bernoulli(spec.label_noise)) label = static_cast<int8_t>(1 - label);
        out.y[i] = label;
    }
    return out;
}

// Convenience: rows [lo, hi) of a dataset as a contiguous index list.
inline std::vector<std::size_t> index_range(std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> idx(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) idx[i - lo] = i;
    return idx;
}

}  // namespace censorkit
