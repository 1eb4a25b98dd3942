#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "censorkit/common.hpp"
#include "censorkit/images.hpp"
#include "censorkit/nn.hpp"
#include "censorkit/optim.hpp"
#include "censorkit/trainer.hpp"

namespace censorkit {

// ---------------------------------------------------------------------------
// Non-overlapping patch tiling. Reassembling unmodified patches reproduces
// the image bit-exactly.
// ---------------------------------------------------------------------------

struct PatchGrid {
    std::size_t patch = 5;
    std::size_t rows = 0, cols = 0;
    Tensor patches;  // [rows*cols, patch*patch], row-major over the grid
};

inline PatchGrid extract_patches(const Image& img, std::size_t patch = 5) {
    if (patch == 0 || img.h % patch != 0 || img.w % patch != 0)
        throw ShapeError("extract_patches: image " + std::to_string(img.h) + "x" +
                         std::to_string(img.w) + " not divisible by patch size " +
                         std::to_string(patch));
    PatchGrid grid;
    grid.patch = patch;
    grid.rows = img.h / patch;
    grid.cols = img.w / patch;
    grid.patches = Tensor({grid.rows * grid.cols, patch * patch});
    for (std::size_t gy = 0; gy < grid.rows; ++gy)
        for (std::size_t gx = 0; gx < grid.cols; ++gx) {
            const std::size_t p = gy * grid.cols + gx;
            for (std::size_t y = 0; y < patch; ++y)
                for (std::size_t x = 0; x < patch; ++x)
                    grid.patches.at(p, y * patch + x) =
                        img.at(gy * patch + y, gx * patch + x);
        }
    return grid;
}

inline Image reassemble(const PatchGrid& grid) {
    Image img(grid.rows * grid.patch, grid.cols * grid.patch);
    for (std::size_t gy = 0; gy < grid.rows; ++gy)
        for (std::size_t gx = 0; gx < grid.cols; ++gx) {
            const std::size_t p = gy * grid.cols + gx;
            for (std::size_t y = 0; y < grid.patch; ++y)
                for (std::size_t x = 0; x < grid.patch; ++x)
                    img.at(gy * grid.patch + y, gx * grid.patch + x) =
                        grid.patches.at(p, y * grid.patch + x);
        }
    return img;
}

// ---------------------------------------------------------------------------
// Expert model: a pretrained patch classifier gates between copying a patch
// verbatim and running it through the patch autoencoder; a convolutional
// adversary reads the whole reassembled image.
// ---------------------------------------------------------------------------

struct ExpertModelSpec {
    std::size_t image_height = 50;
    std::size_t image_width = 50;
    std::size_t patch = 5;
    std::size_t classifier_hidden = 64;
    std::size_t autoencoder_hidden = 256;
    std::size_t adversary_filters = 10;
    std::size_t adversary_kernel = 3;
    std::size_t adversary_pool = 2;
    std::size_t adversary_dense = 64;
    double gate_threshold = 0.7;
};

struct ExpertModel {
    std::size_t patch = 5;
    std::size_t img_h = 0, img_w = 0;
    double gate_threshold = 0.7;
    Network patch_classifier;   // [n, patch^2] -> probability of text
    Network patch_autoencoder;  // [n, patch^2] -> [n, patch^2], sigmoid output
    Network image_adversary;    // [n, 1, h, w] -> probability of text
};

inline ExpertModel make_expert_model(const ExpertModelSpec& spec, Rng& rng) {
    if (spec.gate_threshold < 0.0 || spec.gate_threshold > 1.0)
        throw ConfigError("gate threshold must lie in [0, 1]");
    if (spec.image_height % spec.patch != 0 || spec.image_width % spec.patch != 0)
        throw ConfigError("image extents must be divisible by the patch size");

    ExpertModel m;
    m.patch = spec.patch;
    m.img_h = spec.image_height;
    m.img_w = spec.image_width;
    m.gate_threshold = spec.gate_threshold;

    const std::size_t pix = spec.patch * spec.patch;
    m.patch_classifier.affine(pix, spec.classifier_hidden)
        .relu()
        .affine(spec.classifier_hidden, 1)
        .sigmoid();
    m.patch_autoencoder.affine(pix, spec.autoencoder_hidden)
        .relu()
        .affine(spec.autoencoder_hidden, pix)
        .sigmoid();  // keeps reconstructed pixels inside [0, 1]

    // conv-pool-conv-pool, then a ReLU dense layer and a sigmoid head;
    // extents must stay divisible at each pooling stage
    const std::size_t k = spec.adversary_kernel, p = spec.adversary_pool;
    const auto stage = [&](std::size_t e, const char* axis) {
        if (e < k) throw ConfigError(std::string("adversary: image too small on ") + axis);
        const std::size_t after_conv = e - k + 1;
        if (after_conv % p != 0)
            throw ConfigError(std::string("adversary: extent not divisible by pool on ") +
                              axis);
        return after_conv / p;
    };
    std::size_t h = stage(stage(spec.image_height, "height"), "height");
    std::size_t w = stage(stage(spec.image_width, "width"), "width");
    m.image_adversary.conv2d(1, spec.adversary_filters, k, k)
        .relu()
        .maxpool(p)
        .conv2d(spec.adversary_filters, spec.adversary_filters, k, k)
        .relu()
        .maxpool(p)
        .affine(spec.adversary_filters * h * w, spec.adversary_dense)
        .relu()
        .affine(spec.adversary_dense, 1)
        .sigmoid();

    m.patch_classifier.init_params(rng);
    m.patch_autoencoder.init_params(rng);
    m.image_adversary.init_params(rng);
    return m;
}

inline std::vector<Tensor*> expert_param_tensors(ExpertModel& m) {
    std::vector<Tensor*> out = m.patch_classifier.param_tensors();
    for (Tensor* t : m.patch_autoencoder.param_tensors()) out.push_back(t);
    for (Tensor* t : m.image_adversary.param_tensors()) out.push_back(t);
    return out;
}

// Every patch inherits its image's label; most patches of a text image carry
// no text, which is the weak-supervision premise.
inline std::vector<int8_t> weak_patch_labels(const ImageCorpus& corpus,
                                             std::size_t patch = 5) {
    std::vector<int8_t> labels;
    if (corpus.train.empty()) return labels;
    const std::size_t per_image =
        (corpus.h / patch) * (corpus.w / patch);
    labels.reserve(corpus.train.size() * per_image);
    for (std::size_t i = 0; i < corpus.train.size(); ++i)
        labels.insert(labels.end(), per_image, corpus.train_s[i]);
    return labels;
}

struct PretrainConfig {
    int steps = 2000;
    int batch_size = 256;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

// Weak-supervised log-loss descent on the patch classifier; no adversary.
inline void pretrain_patch_classifier(ExpertModel& model, const ImageCorpus& corpus,
                                      const PretrainConfig& cfg) {
    const std::vector<int8_t> labels = weak_patch_labels(corpus, model.patch);
    const std::size_t pix = model.patch * model.patch;
    Tensor all({labels.size(), pix});
    std::size_t row = 0;
    for (const Image& img : corpus.train) {
        const PatchGrid grid = extract_patches(img, model.patch);
        std::copy(grid.patches.data.begin(), grid.patches.data.end(),
                  all.data.begin() + row * pix);
        row += grid.patches.shape[0];
    }

    AdamConfig adam_cfg;
    adam_cfg.learning_rate = cfg.learning_rate;
    AdamState opt(model.patch_classifier.param_tensors(), adam_cfg);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();

    for (int step = 0; step < cfg.steps; ++step) {
        if (cursor >= order.size()) {
            rng.shuffle(order);
            cursor = 0;
        }
        const std::size_t take = std::min<std::size_t>(
            static_cast<std::size_t>(cfg.batch_size), order.size() - cursor);
        Tensor xb({take, pix});
        Tensor yb({take, 1});
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t r = order[cursor + i];
            std::copy_n(all.data.begin() + r * pix, pix, xb.data.begin() + i * pix);
            yb.data[i] = static_cast<double>(labels[r]);
        }
        cursor += take;
        model.patch_classifier.zero_grads();
        const Tensor probs = model.patch_classifier.forward(xb);
        model.patch_classifier.backward(binary_log_loss_grad(probs, yb));
        opt.step(model.patch_classifier.param_tensors(),
                 model.patch_classifier.grad_tensors(), StepDirection::descent);
        model.patch_classifier.mark_params_changed();
    }
}

// Per patch: copy bit-exactly unless the classifier probability exceeds the
// gate threshold, in which case the autoencoder output replaces it.
inline Image expert_reconstruct(ExpertModel& model, const Image& img) {
    PatchGrid grid = extract_patches(img, model.patch);
    const Tensor scores = model.patch_classifier.forward(grid.patches);
    std::vector<std::size_t> open;
    for (std::size_t p = 0; p < scores.size(); ++p)
        if (scores.data[p] > model.gate_threshold) open.push_back(p);
    if (!open.empty()) {
        const std::size_t pix = model.patch * model.patch;
        Tensor gated({open.size(), pix});
        for (std::size_t i = 0; i < open.size(); ++i)
            std::copy_n(grid.patches.data.begin() + open[i] * pix, pix,
                        gated.data.begin() + i * pix);
        const Tensor decoded = model.patch_autoencoder.forward(gated);
        for (std::size_t i = 0; i < open.size(); ++i)
            std::copy_n(decoded.data.begin() + i * pix, pix,
                        grid.patches.data.begin() + open[i] * pix);
    }
    return reassemble(grid);
}

inline Tensor images_to_tensor(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw ShapeError("images_to_tensor: empty batch");
    Tensor t({imgs.size(), 1, imgs[0].h, imgs[0].w});
    for (std::size_t i = 0; i < imgs.size(); ++i)
        std::copy(imgs[i].px.begin(), imgs[i].px.end(),
                  t.data.begin() + i * imgs[0].h * imgs[0].w);
    return t;
}

inline double adversary_accuracy(ExpertModel& model, const std::vector<Image>& imgs,
                                 const std::vector<int8_t>& s) {
    const Tensor scores = model.image_adversary.forward(images_to_tensor(imgs));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if ((scores.data[i] > 0.5 ? 1 : 0) == s[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(s.size());
}

// ---------------------------------------------------------------------------
// Adversarial training of the anonymizer: the actor is the patch autoencoder
// minimizing alpha*C + beta*D where C is the pixel MSE over autoencoded
// patches and D is the adversary log-likelihood on the reassembled images;
// the adversary ascends D on the same reconstructions, labeled by the source
// image's s. The patch classifier stays frozen, and gradients flow only
// through gated-open patches.
// ---------------------------------------------------------------------------

class AnonymizerTrainer {
public:
    AnonymizerTrainer(ExpertModel& model, const ImageCorpus& corpus, double alpha,
                      double beta, TrainConfig cfg)
        : model_(&model), corpus_(&corpus), alpha_(alpha), beta_(beta), cfg_(cfg) {
        cfg_.validate();
        AdamConfig adam_cfg;
        adam_cfg.learning_rate = cfg_.learning_rate;
        actor_opt_ = AdamState(model.patch_autoencoder.param_tensors(), adam_cfg);
        adversary_opt_ = AdamState(model.image_adversary.param_tensors(), adam_cfg);
    }

    StepEval step_eval(const std::vector<std::size_t>& rows) {
        const std::size_t pix = model_->patch * model_->patch;
        const std::size_t n = rows.size();
        model_->patch_autoencoder.zero_grads();
        model_->image_adversary.zero_grads();

        // gate every patch with the frozen classifier, batch the open ones
        std::vector<PatchGrid> grids(n);
        std::vector<std::pair<std::size_t, std::size_t>> open;  // (image, patch)
        for (std::size_t i = 0; i < n; ++i) {
            grids[i] = extract_patches(corpus_->train[rows[i]], model_->patch);
            const Tensor scores = model_->patch_classifier.forward(grids[i].patches);
            for (std::size_t p = 0; p < scores.size(); ++p)
                if (scores.data[p] > model_->gate_threshold) open.emplace_back(i, p);
        }

        Tensor gated_in({open.size(), pix});
        for (std::size_t k = 0; k < open.size(); ++k)
            std::copy_n(grids[open[k].first].patches.data.begin() + open[k].second * pix,
                        pix, gated_in.data.begin() + k * pix);
        Tensor decoded;
        if (!open.empty()) decoded = model_->patch_autoencoder.forward(gated_in);

        // reassemble reconstructions with decoded patches in place
        Tensor recon({n, 1, corpus_->h, corpus_->w});
        {
            std::vector<PatchGrid> out_grids = grids;
            for (std::size_t k = 0; k < open.size(); ++k)
                std::copy_n(decoded.data.begin() + k * pix, pix,
                            out_grids[open[k].first].patches.data.begin() +
                                open[k].second * pix);
            for (std::size_t i = 0; i < n; ++i) {
                const Image img = reassemble(out_grids[i]);
                std::copy(img.px.begin(), img.px.end(),
                          recon.data.begin() + i * corpus_->h * corpus_->w);
            }
        }

        std::vector<int8_t> s(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = corpus_->train_s[rows[i]];

        const Tensor shat = model_->image_adversary.forward(recon);
        StepEval ev;
        ev.adversary_accuracy = detail::accuracy_from_scores(shat, s);
        ev.loss.d = detail::mean_log_likelihood(shat, s);

        double c = 0.0;
        if (!open.empty()) {
            for (std::size_t i = 0; i < decoded.size(); ++i) {
                const double r = decoded.data[i] - gated_in.data[i];
                c += r * r;
            }
            c /= static_cast<double>(decoded.size());
        }
        ev.loss.c = c;
        ev.loss.total = alpha_ * c + beta_ * ev.loss.d;
        if (!std::isfinite(ev.loss.total)) throw DivergedError("non-finite loss");

        // adversary gradients (phi) and the image gradient for the actor
        Tensor dshat = detail::mean_log_likelihood_grad(shat, s);
        for (double& v : dshat.data) v *= beta_;
        const Tensor dimage = model_->image_adversary.backward(dshat);

        if (!open.empty()) {
            Tensor ddecoded({open.size(), pix});
            const double c_scale = 2.0 * alpha_ / static_cast<double>(decoded.size());
            for (std::size_t i = 0; i < decoded.size(); ++i)
                ddecoded.data[i] = c_scale * (decoded.data[i] - gated_in.data[i]);
            // route the adversary's pixel gradient back into the open patches
            for (std::size_t k = 0; k < open.size(); ++k) {
                const auto [img_idx, p] = open[k];
                const std::size_t gy = p / grids[img_idx].cols;
                const std::size_t gx = p % grids[img_idx].cols;
                for (std::size_t y = 0; y < model_->patch; ++y)
                    for (std::size_t x = 0; x < model_->patch; ++x) {
                        const std::size_t py = gy * model_->patch + y;
                        const std::size_t px = gx * model_->patch + x;
                        ddecoded.at(k, y * model_->patch + x) +=
                            dimage.at(img_idx, 0, py, px);
                    }
            }
            model_->patch_autoencoder.backward(ddecoded);
        }
        return ev;
    }

    void adversary_apply() {
        adversary_opt_.step(model_->image_adversary.param_tensors(),
                            model_->image_adversary.grad_tensors(),
                            StepDirection::ascent);
        model_->image_adversary.mark_params_changed();
    }

    void actor_apply() {
        actor_opt_.step(model_->patch_autoencoder.param_tensors(),
                        model_->patch_autoencoder.grad_tensors(),
                        StepDirection::descent);
        model_->patch_autoencoder.mark_params_changed();
    }

    TrainTrace train() { return detail::run_minimax(*this, corpus_->train.size(), cfg_); }

    ExpertModel& model() { return *model_; }

private:
    ExpertModel* model_;
    const ImageCorpus* corpus_;
    double alpha_, beta_;
    TrainConfig cfg_;
    AdamState actor_opt_;
    AdamState adversary_opt_;
};

inline TrainTrace train_anonymizer(ExpertModel& model, const ImageCorpus& corpus,
                                   double alpha, double beta, const TrainConfig& cfg) {
    AnonymizerTrainer trainer(model, corpus, alpha, beta, cfg);
    return trainer.train();
}

struct PairEval {
    double mse_censored = 0.0;
    double mse_identity = 0.0;
};

// mse_censored reconstructs the text version and scores it against the
// text-free target; mse_identity is the do-nothing baseline.
inline PairEval evaluate_pairs(ExpertModel& model, const std::vector<ImagePair>& pairs) {
    if (pairs.empty()) throw ConfigError("evaluate_pairs: no pairs");
    PairEval ev;
    for (const ImagePair& pair : pairs) {
        const Image censored = expert_reconstruct(model, pair.with_text);
        ev.mse_censored += image_mse(censored, pair.without_text);
        ev.mse_identity += image_mse(pair.with_text, pair.without_text);
    }
    ev.mse_censored /= static_cast<double>(pairs.size());
    ev.mse_identity /= static_cast<double>(pairs.size());
    return ev;
}

// input | output | ground truth, separated by thin mid-gray columns.
inline Image montage(const Image& input, const Image& output, const Image& truth) {
    const std::size_t sep = 1;
    Image out(input.h, input.w * 3 + sep * 2);
    for (std::size_t y = 0; y < out.h; ++y)
        for (std::size_t x = 0; x < out.w; ++x) out.at(y, x) = 0.5;
    const auto blit = [&](const Image& src, std::size_t x_off) {
        for (std::size_t y = 0; y < src.h; ++y)
            for (std::size_t x = 0; x < src.w; ++x) out.at(y, x_off + x) = src.at(y, x);
    };
    blit(input, 0);
    blit(output, input.w + sep);
    blit(truth, 2 * (input.w + sep));
    return out;
}

}  // namespace censorkit
