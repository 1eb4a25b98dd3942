#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "censorkit/common.hpp"
#include "censorkit/tensor.hpp"

namespace censorkit {

// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

enum class LayerKind { affine, relu, sigmoid, conv2d, maxpool };

// ---------------------------------------------------------------------------
// Layers. forward() caches what backward() needs; backward() accumulates into
// the parameter gradient slots and returns the gradient w.r.t. its input.
// ---------------------------------------------------------------------------

class Layer {
public:
    virtual ~Layer() = default;
    virtual LayerKind kind() const = 0;
    virtual Tensor forward(const Tensor& in) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual void init_params(Rng&) {}

    std::vector<Tensor>& params() { return params_; }
    std::vector<Tensor>& grads() { return grads_; }
    const std::vector<Tensor>& params() const { return params_; }

protected:
    std::vector<Tensor> params_;
    std::vector<Tensor> grads_;
};

// Fully connected: y = x W^T + b with W[out][in] (row = output unit).
// Inputs of higher rank are treated as [batch, flattened features].
class AffineLayer : public Layer {
public:
    AffineLayer(std::size_t in_dim, std::size_t out_dim)
        : in_dim_(in_dim), out_dim_(out_dim) {
        params_.push_back(Tensor({out_dim, in_dim}));
        params_.push_back(Tensor({out_dim}));
        grads_.push_back(Tensor({out_dim, in_dim}));
        grads_.push_back(Tensor({out_dim}));
    }

    LayerKind kind() const override { return LayerKind::affine; }

    void init_params(Rng& rng) override {
        const double bound = std::sqrt(6.0 / static_cast<double>(in_dim_ + out_dim_));
        for (double& w : params_[0].data) w = rng.uniform(-bound, bound);
        params_[1].fill(0.0);
    }

    Tensor forward(const Tensor& in) override {
        if (in.rank() < 2 || in.size() / in.shape[0] != in_dim_)
            throw ShapeError("affine: input features " + in.shape_str() + " do not match " +
                             std::to_string(in_dim_));
        in_shape_ = in.shape;
        const std::size_t n = in.shape[0];
        cached_in_ = in;
        Tensor out({n, out_dim_});
        const Tensor& W = params_[0];
        const Tensor& b = params_[1];
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = in.data.data() + i * in_dim_;
            for (std::size_t o = 0; o < out_dim_; ++o) {
                const double* w = W.data.data() + o * in_dim_;
                double acc = b.data[o];
                for (std::size_t k = 0; k < in_dim_; ++k) acc += w[k] * x[k];
                out.at(i, o) = acc;
            }
        }
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        const std::size_t n = cached_in_.shape[0];
        require_shape(grad_out, {n, out_dim_}, "affine backward");
        Tensor grad_in(in_shape_);
        Tensor& dW = grads_[0];
        Tensor& db = grads_[1];
        const Tensor& W = params_[0];
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = cached_in_.data.data() + i * in_dim_;
            double* gx = grad_in.data.data() + i * in_dim_;
            for (std::size_t o = 0; o < out_dim_; ++o) {
                const double g = grad_out.at(i, o);
                if (g == 0.0) continue;
                const double* w = W.data.data() + o * in_dim_;
                double* dw = dW.data.data() + o * in_dim_;
                for (std::size_t k = 0; k < in_dim_; ++k) {
                    dw[k] += g * x[k];
                    gx[k] += g * w[k];
                }
                db.data[o] += g;
            }
        }
        return grad_in;
    }

    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return out_dim_; }

private:
    std::size_t in_dim_, out_dim_;
    std::vector<std::size_t> in_shape_;
    Tensor cached_in_;
};

// Subgradient at exactly 0 is defined as 0.
class ReluLayer : public Layer {
public:
    LayerKind kind() const override { return LayerKind::relu; }

    Tensor forward(const Tensor& in) override {
        cached_in_ = in;
        Tensor out = in;
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        if (!grad_out.same_shape(cached_in_)) throw ShapeError("relu backward shape");
        Tensor grad_in = grad_out;
        for (std::size_t i = 0; i < grad_in.size(); ++i)
            if (cached_in_.data[i] <= 0.0) grad_in.data[i] = 0.0;
        return grad_in;
    }

    // Distance of the nearest cached pre-activation to the kink, for
    // finite-difference hygiene.
    double kink_margin() const {
        double m = std::numeric_limits<double>::infinity();
        for (double v : cached_in_.data) m = std::min(m, std::fabs(v));
        return m;
    }

private:
    Tensor cached_in_;
};

class SigmoidLayer : public Layer {
public:
    LayerKind kind() const override { return LayerKind::sigmoid; }

    Tensor forward(const Tensor& in) override {
        Tensor out = in;
        for (double& v : out.data) {
            if (v >= 0.0) {
                v = 1.0 / (1.0 + std::exp(-v));
            } else {
                const double e = std::exp(v);
                v = e / (1.0 + e);
            }
        }
        cached_out_ = out;
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        if (!grad_out.same_shape(cached_out_)) throw ShapeError("sigmoid backward shape");
        Tensor grad_in = grad_out;
        for (std::size_t i = 0; i < grad_in.size(); ++i) {
            const double y = cached_out_.data[i];
            grad_in.data[i] *= y * (1.0 - y);
        }
        return grad_in;
    }

private:
    Tensor cached_out_;
};

// Valid padding, stride 1. Input [n, in_channels, h, w].
class Conv2dLayer : public Layer {
public:
    Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kh,
                std::size_t kw)
        : in_c_(in_channels), out_c_(out_channels), kh_(kh), kw_(kw) {
        params_.push_back(Tensor({out_c_, in_c_, kh_, kw_}));
        params_.push_back(Tensor({out_c_}));
        grads_.push_back(Tensor({out_c_, in_c_, kh_, kw_}));
        grads_.push_back(Tensor({out_c_}));
    }

    LayerKind kind() const override { return LayerKind::conv2d; }

    void init_params(Rng& rng) override {
        const double fan_in = static_cast<double>(in_c_ * kh_ * kw_);
        const double fan_out = static_cast<double>(out_c_ * kh_ * kw_);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : params_[0].data) w = rng.uniform(-bound, bound);
        params_[1].fill(0.0);
    }

    Tensor forward(const Tensor& in) override {
        if (in.rank() != 4 || in.shape[1] != in_c_)
            throw ShapeError("conv2d: expected [n," + std::to_string(in_c_) +
                             ",h,w], got " + in.shape_str());
        const std::size_t h = in.shape[2], w = in.shape[3];
        if (kh_ > h || kw_ > w)
            throw ShapeError("conv2d: kernel " + std::to_string(kh_) + "x" +
                             std::to_string(kw_) + " larger than image " +
                             std::to_string(h) + "x" + std::to_string(w));
        cached_in_ = in;
        const std::size_t n = in.shape[0];
        const std::size_t oh = h - kh_ + 1, ow = w - kw_ + 1;
        Tensor out({n, out_c_, oh, ow});
        const Tensor& W = params_[0];
        const Tensor& b = params_[1];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t oc = 0; oc < out_c_; ++oc) {
                double* out_base = out.data.data() + ((i * out_c_ + oc) * oh) * ow;
                const double bias = b.data[oc];
                for (std::size_t p = 0; p < oh * ow; ++p) out_base[p] = bias;
                for (std::size_t ic = 0; ic < in_c_; ++ic) {
                    const double* in_base = in.data.data() + ((i * in_c_ + ic) * h) * w;
                    const double* w_base =
                        W.data.data() + ((oc * in_c_ + ic) * kh_) * kw_;
                    for (std::size_t ky = 0; ky < kh_; ++ky) {
                        for (std::size_t kx = 0; kx < kw_; ++kx) {
                            const double wv = w_base[ky * kw_ + kx];
                            for (std::size_t oy = 0; oy < oh; ++oy) {
                                const double* in_row = in_base + (oy + ky) * w + kx;
                                double* out_row = out_base + oy * ow;
                                for (std::size_t ox = 0; ox < ow; ++ox)
                                    out_row[ox] += wv * in_row[ox];
                            }
                        }
                    }
                }
            }
        }
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        const std::size_t n = cached_in_.shape[0];
        const std::size_t h = cached_in_.shape[2], w = cached_in_.shape[3];
        const std::size_t oh = h - kh_ + 1, ow = w - kw_ + 1;
        require_shape(grad_out, {n, out_c_, oh, ow}, "conv2d backward");
        Tensor grad_in(cached_in_.shape);
        Tensor& dW = grads_[0];
        Tensor& db = grads_[1];
        const Tensor& W = params_[0];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t oc = 0; oc < out_c_; ++oc) {
                const double* go_base =
                    grad_out.data.data() + ((i * out_c_ + oc) * oh) * ow;
                double bias_acc = 0.0;
                for (std::size_t p = 0; p < oh * ow; ++p) bias_acc += go_base[p];
                db.data[oc] += bias_acc;
                for (std::size_t ic = 0; ic < in_c_; ++ic) {
                    const double* in_base =
                        cached_in_.data.data() + ((i * in_c_ + ic) * h) * w;
                    double* gi_base = grad_in.data.data() + ((i * in_c_ + ic) * h) * w;
                    const double* w_base =
                        W.data.data() + ((oc * in_c_ + ic) * kh_) * kw_;
                    double* dw_base = dW.data.data() + ((oc * in_c_ + ic) * kh_) * kw_;
                    for (std::size_t ky = 0; ky < kh_; ++ky) {
                        for (std::size_t kx = 0; kx < kw_; ++kx) {
                            const double wv = w_base[ky * kw_ + kx];
                            double dw_acc = 0.0;
                            for (std::size_t oy = 0; oy < oh; ++oy) {
                                const double* go_row = go_base + oy * ow;
                                const double* in_row = in_base + (oy + ky) * w + kx;
                                double* gi_row = gi_base + (oy + ky) * w + kx;
                                for (std::size_t ox = 0; ox < ow; ++ox) {
                                    dw_acc += go_row[ox] * in_row[ox];
                                    gi_row[ox] += wv * go_row[ox];
                                }
                            }
                            dw_base[ky * kw_ + kx] += dw_acc;
                        }
                    }
                }
            }
        }
        return grad_in;
    }

private:
    std::size_t in_c_, out_c_, kh_, kw_;
    Tensor cached_in_;
};

// Non-overlapping max pooling; spatial extents must divide by the pool size.
// Gradient routes to the argmax cell only (first maximum on ties).
class MaxPool2dLayer : public Layer {
public:
    explicit MaxPool2dLayer(std::size_t pool) : pool_(pool) {
        if (pool_ == 0) throw ConfigError("maxpool: pool size must be positive");
    }

    LayerKind kind() const override { return LayerKind::maxpool; }

    Tensor forward(const Tensor& in) override {
        if (in.rank() != 4)
            throw ShapeError("maxpool: expected [n,c,h,w], got " + in.shape_str());
        const std::size_t h = in.shape[2], w = in.shape[3];
        if (h % pool_ != 0 || w % pool_ != 0)
            throw ShapeError("maxpool: extents " + std::to_string(h) + "x" +
                             std::to_string(w) + " not divisible by pool size " +
                             std::to_string(pool_));
        in_shape_ = in.shape;
        const std::size_t n = in.shape[0], c = in.shape[1];
        const std::size_t oh = h / pool_, ow = w / pool_;
        Tensor out({n, c, oh, ow});
        argmax_.assign(out.size(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* in_base = in.data.data() + ((i * c + ch) * h) * w;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        double best = -std::numeric_limits<double>::infinity();
                        std::size_t best_idx = 0;
                        for (std::size_t py = 0; py < pool_; ++py) {
                            for (std::size_t px = 0; px < pool_; ++px) {
                                const std::size_t idx =
                                    (oy * pool_ + py) * w + ox * pool_ + px;
                                if (in_base[idx] > best) {
                                    best = in_base[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        const std::size_t out_idx = ((i * c + ch) * oh + oy) * ow + ox;
                        out.data[out_idx] = best;
                        argmax_[out_idx] = ((i * c + ch) * h) * w + best_idx;
                    }
                }
            }
        }
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        if (grad_out.size() != argmax_.size()) throw ShapeError("maxpool backward shape");
        Tensor grad_in(in_shape_);
        for (std::size_t i = 0; i < grad_out.size(); ++i)
            grad_in.data[argmax_[i]] += grad_out.data[i];
        return grad_in;
    }

private:
    std::size_t pool_;
    std::vector<std::size_t> in_shape_;
    std::vector<std::size_t> argmax_;
};

// ---------------------------------------------------------------------------
// Network: an ordered layer stack with cached activations for one backward.
// Single-threaded per instance; distinct instances are independent.
// ---------------------------------------------------------------------------

class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    Network& add(std::unique_ptr<Layer> layer) {
        layers_.push_back(std::move(layer));
        return *this;
    }

    Network& affine(std::size_t in_dim, std::size_t out_dim) {
        return add(std::make_unique<AffineLayer>(in_dim, out_dim));
    }
    Network& relu() { return add(std::make_unique<ReluLayer>()); }
    Network& sigmoid() { return add(std::make_unique<SigmoidLayer>()); }
    Network& conv2d(std::size_t in_c, std::size_t out_c, std::size_t kh, std::size_t kw) {
        return add(std::make_unique<Conv2dLayer>(in_c, out_c, kh, kw));
    }
    Network& maxpool(std::size_t pool) {
        return add(std::make_unique<MaxPool2dLayer>(pool));
    }

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }

    void init_params(Rng& rng) {
        for (auto& l : layers_) l->init_params(rng);
        cache_valid_ = false;
    }

    Tensor forward(const Tensor& input) {
        Tensor x = input;
        for (auto& l : layers_) x = l->forward(x);
        if (!all_finite(x)) throw DivergedError("non-finite values in forward pass");
        cache_valid_ = true;
        return x;
    }

    // Accumulates parameter gradients; returns the gradient w.r.t. the input.
    Tensor backward(const Tensor& output_gradient) {
        if (!cache_valid_)
            throw StaleCacheError("backward without a forward since last parameter change");
        Tensor g = output_gradient;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
            g = (*it)->backward(g);
        if (!all_finite(g)) throw DivergedError("non-finite values in backward pass");
        return g;
    }

    void zero_grads() {
        for (auto& l : layers_)
            for (auto& g : l->grads()) g.fill(0.0);
    }

    // Call after mutating parameters outside forward/backward.
    void mark_params_changed() { cache_valid_ = false; }

    std::vector<Tensor*> param_tensors() {
        std::vector<Tensor*> out;
        for (auto& l : layers_)
            for (auto& p : l->params()) out.push_back(&p);
        return out;
    }

    std::vector<Tensor*> grad_tensors() {
        std::vector<Tensor*> out;
        for (auto& l : layers_)
            for (auto& g : l->grads()) out.push_back(&g);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_)
            for (const auto& p : l->params()) n += p.size();
        return n;
    }

    // Smallest |pre-activation| over all ReLU layers in the cached pass.
    double relu_kink_margin() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& l : layers_)
            if (auto* r = dynamic_cast<const ReluLayer*>(l.get()))
                m = std::min(m, r->kink_margin());
        return m;
    }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    bool cache_valid_ = false;
};

// ---------------------------------------------------------------------------
// Losses over a batched output. Means are over the batch axis so loss weights
// stay batch-size independent.
// ---------------------------------------------------------------------------

inline double clamp_prob(double p) {
    return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

// Mean over batch of the squared L2 residual (sum over the feature axis).
inline double squared_error(const Tensor& out, const Tensor& target) {
    if (!out.same_shape(target)) throw ShapeError("squared_error: shape mismatch");
    const std::size_t n = out.shape[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = out.data[i] - target.data[i];
        acc += r * r;
    }
    return acc / static_cast<double>(n);
}

inline Tensor squared_error_grad(const Tensor& out, const Tensor& target) {
    if (!out.same_shape(target)) throw ShapeError("squared_error: shape mismatch");
    const double scale = 2.0 / static_cast<double>(out.shape[0]);
    Tensor g(out.shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        g.data[i] = scale * (out.data[i] - target.data[i]);
    return g;
}

// Mean binary log-loss; targets in {0,1}. Probabilities are clamped, and the
// gradient is zero where the clamp saturates.
inline double binary_log_loss(const Tensor& probs, const Tensor& target) {
    if (!probs.same_shape(target)) throw ShapeError("binary_log_loss: shape mismatch");
    const std::size_t n = probs.shape[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = clamp_prob(probs.data[i]);
        const double y = target.data[i];
        acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return acc / static_cast<double>(n);
}

inline Tensor binary_log_loss_grad(const Tensor& probs, const Tensor& target) {
    if (!probs.same_shape(target)) throw ShapeError("binary_log_loss: shape mismatch");
    const double inv_n = 1.0 / static_cast<double>(probs.shape[0]);
    Tensor g(probs.shape);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double raw = probs.data[i];
        if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) {
            g.data[i] = 0.0;
            continue;
        }
        const double y = target.data[i];
        g.data[i] = -inv_n * (y / raw - (1.0 - y) / (1.0 - raw));
    }
    return g;
}

// ---------------------------------------------------------------------------
// Parameter serialization: magic "CKNN1", then per tensor a little-endian
// u32 rank, u32 extents, and the raw little-endian f64 payload.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of parameter file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("unexpected end of parameter file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

inline constexpr char kParamMagic[] = "CKNN1";

inline void save_tensors(std::ostream& os, const std::vector<Tensor*>& tensors) {
    os.write(kParamMagic, 5);
    for (const Tensor* t : tensors) {
        detail::write_u32_le(os, static_cast<std::uint32_t>(t->rank()));
        for (std::size_t e : t->shape)
            detail::write_u32_le(os, static_cast<std::uint32_t>(e));
        for (double v : t->data) detail::write_f64_le(os, v);
    }
}

inline void save_tensors(const std::string& path, const std::vector<Tensor*>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    save_tensors(os, tensors);
    if (!os) throw IoError("write failed: " + path);
}

// Shapes must match the receiving tensors exactly.
inline void load_tensors(std::istream& is, const std::vector<Tensor*>& tensors) {
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kParamMagic, 5) != 0)
        throw IoError("bad parameter file magic");
    for (Tensor* t : tensors) {
        const std::uint32_t rank = detail::read_u32_le(is);
        if (rank != t->rank()) throw IoError("parameter tensor rank mismatch");
        for (std::size_t a = 0; a < rank; ++a) {
            const std::uint32_t e = detail::read_u32_le(is);
            if (e != t->shape[a]) throw IoError("parameter tensor extent mismatch");
        }
        for (double& v : t->data) v = detail::read_f64_le(is);
    }
}

inline void load_tensors(const std::string& path, const std::vector<Tensor*>& tensors) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    load_tensors(is, tensors);
}

}  // namespace censorkit
