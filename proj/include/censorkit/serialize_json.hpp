#pragma once

// JSON/CSV emission for reports, traces, search records and image manifests.
// All output is deterministic: nlohmann::json orders keys, doubles print in
// shortest round-trip form, and no timestamps are embedded anywhere.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "censorkit/data.hpp"
#include "censorkit/images.hpp"
#include "censorkit/metrics.hpp"
#include "censorkit/search.hpp"
#include "censorkit/trainer.hpp"

namespace censorkit {

using json = nlohmann::json;

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << content;
    if (!os) throw IoError("write failed: " + path);
}

inline json loss_to_json(const LossBreakdown& lb) {
    return json{{"c", lb.c}, {"d", lb.d}, {"e", lb.e}, {"total", lb.total}};
}

inline json step_to_json(const StepRecord& rec) {
    json j = loss_to_json(rec.loss);
    j["step"] = rec.step;
    j["side"] = rec.side == Side::adversary ? "adversary" : "actor";
    j["skipped"] = rec.skipped;
    j["adv_acc"] = rec.adversary_accuracy;
    return j;
}

// One JSON record per step.
inline void write_trace_jsonl(const std::string& path, const TrainTrace& trace) {
    std::string out;
    for (const StepRecord& rec : trace.steps) {
        out += step_to_json(rec).dump();
        out += "\n";
    }
    write_text_file(path, out);
}

inline json report_to_json(const FairnessReport& r) {
    json j;
    j["y_acc"] = r.y_acc;
    j["y_disc"] = r.y_disc;
    json curve = json::array();
    for (const auto& pt : r.delta_curve) curve.push_back({{"t", pt.t}, {"delta", pt.delta}});
    j["delta_curve"] = curve;
    if (r.h_divergence) j["h_divergence"] = *r.h_divergence;
    if (r.lemma2_margin) j["lemma2_margin"] = *r.lemma2_margin;
    return j;
}

inline void write_delta_curve_csv(const std::string& path, const FairnessReport& r) {
    std::string out = "t,delta\n";
    for (const auto& pt : r.delta_curve)
        out += csv::format_double(pt.t) + "," + csv::format_double(pt.delta) + "\n";
    write_text_file(path, out);
}

inline json hyperparams_to_json(const HyperParams& hp) {
    return json{{"encoderLayers", hp.encoder_layers}, {"hiddenUnits", hp.hidden_units},
                {"adversaryLayers", hp.adversary_layers}, {"alpha", hp.alpha},
                {"beta", hp.beta},                        {"gamma", hp.gamma}};
}

inline json record_to_json(const ExperimentRecord& rec) {
    json j;
    j["index"] = rec.index;
    j["seed"] = rec.seed;
    j["hyperparams"] = hyperparams_to_json(rec.hyperparams);
    j["failed"] = rec.failed;
    if (rec.failed) {
        j["failure"] = rec.failure;
    } else {
        j["valid"] = report_to_json(rec.valid_metrics);
        j["test"] = report_to_json(rec.test_metrics);
        j["trace"] = {{"steps", rec.summary.steps},
                      {"finalLoss", loss_to_json(rec.summary.final_loss)},
                      {"finalAdversaryAccuracy", rec.summary.final_adversary_accuracy}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Image corpus on disk: PGM files plus a JSON manifest carrying s labels and
// pair links.
// ---------------------------------------------------------------------------

inline void write_corpus(const std::string& dir, const ImageCorpus& corpus) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json manifest;
    manifest["height"] = corpus.h;
    manifest["width"] = corpus.w;

    json train = json::array();
    for (std::size_t i = 0; i < corpus.train.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "train_%04zu.pgm", i);
        write_pgm((fs::path(dir) / name).string(), corpus.train[i]);
        train.push_back({{"file", name}, {"s", corpus.train_s[i]}});
    }
    manifest["train"] = train;

    const auto write_pairs = [&](const std::vector<ImagePair>& pairs, const char* prefix) {
        json arr = json::array();
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            char with_name[40], without_name[40];
            std::snprintf(with_name, sizeof(with_name), "%s_%04zu_text.pgm", prefix, i);
            std::snprintf(without_name, sizeof(without_name), "%s_%04zu_clean.pgm", prefix,
                          i);
            write_pgm((fs::path(dir) / with_name).string(), pairs[i].with_text);
            write_pgm((fs::path(dir) / without_name).string(), pairs[i].without_text);
            arr.push_back({{"withText", with_name},
                           {"withoutText", without_name},
                           {"box",
                            {{"y0", pairs[i].box.y0},
                             {"x0", pairs[i].box.x0},
                             {"h", pairs[i].box.h},
                             {"w", pairs[i].box.w}}}});
        }
        return arr;
    };
    manifest["valid"] = write_pairs(corpus.valid, "valid");
    manifest["test"] = write_pairs(corpus.test, "test");
    write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace censorkit
