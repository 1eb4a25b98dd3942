#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "censorkit/common.hpp"
#include "censorkit/tensor.hpp"

namespace censorkit {

// Backgrounds are scaled below pure white so the 1.0 text stamp is the only
// saturated content in any image.
inline constexpr double kBackgroundMax = 0.9;
inline constexpr double kStampValue = 1.0;
inline constexpr std::size_t kGlyphWidth = 5;
inline constexpr std::size_t kGlyphHeight = 7;
inline constexpr std::size_t kGlyphPitch = 6;  // glyph width + 1 spacing column

struct Image {
    std::size_t h = 0, w = 0;
    std::vector<double> px;  // row-major, values in [0, 1]

    Image() = default;
    Image(std::size_t height, std::size_t width)
        : h(height), w(width), px(height * width, 0.0) {}

    double& at(std::size_t y, std::size_t x) { return px[y * w + x]; }
    double at(std::size_t y, std::size_t x) const { return px[y * w + x]; }
};

struct StampBox {
    std::size_t y0 = 0, x0 = 0, h = 0, w = 0;  // all zero when no stamp

    bool contains(std::size_t y, std::size_t x) const {
        return y >= y0 && y < y0 + h && x >= x0 && x < x0 + w;
    }
};

struct ImagePair {
    Image with_text;
    Image without_text;
    StampBox box;
};

struct ImageCorpus {
    std::size_t h = 0, w = 0;
    std::vector<Image> train;
    std::vector<int8_t> train_s;  // 1 = carries text
    std::vector<ImagePair> valid;
    std::vector<ImagePair> test;
};

// ---------------------------------------------------------------------------
// Built-in 5x7 bitmap font, A-Z then 0-9. Each glyph is 7 rows of 5 bits,
// most significant bit on the left.
// ---------------------------------------------------------------------------

inline const std::array<std::array<std::uint8_t, 7>, 36>& glyph_font() {
    static const std::array<std::array<std::uint8_t, 7>, 36> font = {{
        {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // A
        {0x1E, 0x11, 0x1E, 0x11, 0x11, 0x11, 0x1E},  // B
        {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E},  // C
        {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},  // D
        {0x1F, 0x10, 0x1E, 0x10, 0x10, 0x10, 0x1F},  // E
        {0x1F, 0x10, 0x1E, 0x10, 0x10, 0x10, 0x10},  // F
        {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F},  // G
        {0x11, 0x11, 0x1F, 0x11, 0x11, 0x11, 0x11},  // H
        {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E},  // I
        {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},  // J
        {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // K
        {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},  // L
        {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11},  // M
        {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11},  // N
        {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // O
        {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},  // P
        {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D},  // Q
        {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},  // R
        {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E},  // S
        {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},  // T
        {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // U
        {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},  // V
        {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11},  // W
        {0x11, 0x0A, 0x04, 0x04, 0x04, 0x0A, 0x11},  // X
        {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04},  // Y
        {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},  // Z
        {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
        {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
        {0x0E, 0x11, 0x01, 0x06, 0x08, 0x10, 0x1F},  // 2
        {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
        {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
        {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
        {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
        {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
        {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
        {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
    }};
    return font;
}

// ---------------------------------------------------------------------------
// PGM (P5) I/O: 8-bit, maxval 255, pixel = round(255 * value).
// ---------------------------------------------------------------------------

inline void write_pgm(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P5\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> bytes(img.px.size());
    for (std::size_t i = 0; i < img.px.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, img.px[i]));
        bytes[i] = static_cast<unsigned char>(std::lround(255.0 * v));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path);
}

inline Image read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestionError("cannot open PGM file: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw IngestionError("not a P5 PGM file: " + path);
    const auto next_int = [&]() -> long {
        // skip whitespace and '#' comment lines
        while (true) {
            const int c = is.peek();
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        long v = 0;
        is >> v;
        if (!is) throw IngestionError("bad PGM header: " + path);
        return v;
    };
    const long w = next_int();
    const long h = next_int();
    const long maxval = next_int();
    if (w <= 0 || h <= 0 || maxval != 255)
        throw IngestionError("unsupported PGM header in " + path);
    is.get();  // single whitespace after maxval
    Image img(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    std::vector<unsigned char> bytes(img.px.size());
    is.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!is) throw IngestionError("truncated PGM payload in " + path);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.px[i] = static_cast<double>(bytes[i]) / 255.0;
    return img;
}

// ---------------------------------------------------------------------------
// Synthetic corpus: smooth cosine-field backgrounds, white glyph stamps on
// half of the training images, and paired with/without versions for
// validation and test.
// ---------------------------------------------------------------------------

struct SynthImageSpec {
    std::size_t height = 50;
    std::size_t width = 50;
    std::size_t train_count = 400;
    std::size_t valid_pairs = 40;
    std::size_t test_pairs = 20;
    int glyphs_min = 3;
    int glyphs_max = 8;
    std::uint64_t seed = 0;

    void validate() const {
        if (height < kGlyphHeight)
            throw ConfigError("image height smaller than the glyph height");
        if (glyphs_min < 1 || glyphs_max < glyphs_min)
            throw ConfigError("invalid glyph count range");
        const std::size_t widest =
            kGlyphPitch * static_cast<std::size_t>(glyphs_max) - 1;
        if (widest > width)
            throw ConfigError("glyph run of " + std::to_string(widest) +
                              " px is wider than the image (" + std::to_string(width) +
                              " px)");
        if (train_count == 0 || valid_pairs == 0 || test_pairs == 0)
            throw ConfigError("corpus sizes must be positive");
    }
};

namespace detail {

inline Image cosine_background(std::size_t h, std::size_t w, Rng& rng) {
    struct Wave {
        double amp, fx, fy, phase;
    };
    std::array<Wave, 3> waves;
    for (auto& wv : waves) {
        wv.amp = rng.uniform(0.5, 1.0);
        wv.fx = rng.uniform(0.3, 1.5);
        wv.fy = rng.uniform(0.3, 1.5);
        wv.phase = rng.uniform(0.0, 2.0 * M_PI);
    }
    Image img(h, w);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double v = 0.0;
            for (const auto& wv : waves)
                v += wv.amp * std::cos(2.0 * M_PI * (wv.fx * static_cast<double>(x) /
                                                         static_cast<double>(w) +
                                                     wv.fy * static_cast<double>(y) /
                                                         static_cast<double>(h)) +
                                       wv.phase);
            img.at(y, x) = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double range = hi > lo ? hi - lo : 1.0;
    for (double& v : img.px) v = kBackgroundMax * (v - lo) / range;
    return img;
}

// Stamps only the glyphs' on-pixels at full white; background shows through
// the off-pixels and the spacing columns.
inline StampBox stamp_text(Image& img, Rng& rng, int glyphs_min, int glyphs_max) {
    const auto& font = glyph_font();
    const int count =
        static_cast<int>(rng.uniform_int(glyphs_min, glyphs_max));
    const std::size_t text_w = kGlyphPitch * static_cast<std::size_t>(count) - 1;
    const std::size_t y0 =
        static_cast<std::size_t>(rng.uniform_index(img.h - kGlyphHeight + 1));
    const std::size_t x0 =
        static_cast<std::size_t>(rng.uniform_index(img.w - text_w + 1));
    for (int g = 0; g < count; ++g) {
        const auto& glyph = font[rng.uniform_index(font.size())];
        const std::size_t gx = x0 + kGlyphPitch * static_cast<std::size_t>(g);
        for (std::size_t row = 0; row < kGlyphHeight; ++row)
            for (std::size_t col = 0; col < kGlyphWidth; ++col)
                if (glyph[row] & (1u << (kGlyphWidth - 1 - col)))
                    img.at(y0 + row, gx + col) = kStampValue;
    }
    return {y0, x0, kGlyphHeight, text_w};
}

}  // namespace detail

inline ImageCorpus synth_images(const SynthImageSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    ImageCorpus corpus;
    corpus.h = spec.height;
    corpus.w = spec.width;

    // exactly half of the training images carry text
    std::vector<int8_t> labels(spec.train_count, 0);
    for (std::size_t i = 0; i < spec.train_count / 2; ++i) labels[i] = 1;
    rng.shuffle(labels);

    corpus.train.reserve(spec.train_count);
    for (std::size_t i = 0; i < spec.train_count; ++i) {
        Image img = detail::cosine_background(spec.height, spec.width, rng);
        if (labels[i] == 1)
            detail::stamp_text(img, rng, spec.glyphs_min, spec.glyphs_max);
        corpus.train.push_back(std::move(img));
    }
    corpus.train_s = std::move(labels);

    const auto make_pairs = [&](std::size_t count, std::vector<ImagePair>& out) {
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            ImagePair pair;
            pair.without_text = detail::cosine_background(spec.height, spec.width, rng);
            pair.with_text = pair.without_text;
            pair.box =
                detail::stamp_text(pair.with_text, rng, spec.glyphs_min, spec.glyphs_max);
            out.push_back(std::move(pair));
        }
    };
    make_pairs(spec.valid_pairs, corpus.valid);
    make_pairs(spec.test_pairs, corpus.test);
    return corpus;
}

inline double image_mse(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("image MSE: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.px.size(); ++i) {
        const double r = a.px[i] - b.px[i];
        acc += r * r;
    }
    return acc / static_cast<double>(a.px.size());
}

}  // namespace censorkit
