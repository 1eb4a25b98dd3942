#pragma once

#include <cstdint>
#include <cstdlib>
#include <cmath>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>

namespace censorkit {

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps each class to a distinct exit code.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input tensor/shape violations (rejected input).
struct ShapeError : Error {
    using Error::Error;
};

// backward() called without a prior forward() on current parameters.
struct StaleCacheError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// CSV/PGM ingestion problems; messages name the offending row or file.
struct IngestionError : Error {
    using Error::Error;
};

// Undefined metric (empty group) or an intractable brute-force oracle.
struct MetricError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// NaN gradients or losses. The trainer wraps this with the partial trace.
struct DivergedError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 supplies the bit stream; the value
// mappings are written out explicitly because the std distributions are
// implementation-defined and reruns must be byte-identical.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw Error("uniform_index: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(
                        uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, both uniforms drawn fresh (no cached spare).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent per-experiment seeds so
// search results do not depend on scheduling.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Logging. Level comes from CENSORKIT_LOG in {error, info, debug}.
// ---------------------------------------------------------------------------

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("CENSORKIT_LOG");
        if (env == nullptr) return LogLevel::info;
        const std::string s(env);
        if (s == "error") return LogLevel::error;
        if (s == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::info) std::cerr << "[censorkit] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) std::cerr << "[censorkit] " << msg << "\n";
}

}  // namespace censorkit
