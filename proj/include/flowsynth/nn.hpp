#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowsynth/checkpoint.hpp"
#include "flowsynth/conditioning.hpp"
#include "flowsynth/model_config.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

// Attention blocks with 1D rotary position embedding and the velocity-field
// model: pre-norm DiT blocks (self -> optional cross -> MLP), a timestep
// prefix token, per-variant condition routing, and zero-initialized output
// projections so every block starts as the identity map.

namespace flowsynth {

inline constexpr double kLayerNormEps = 1e-5;

// ---------------------------------------------------------------------------
// rotary position embedding

// Precomputed per-position rotation angles. Pair i of a head rotates by
// pos * base^(-2i / head_dim); angles are evaluated in double before
// narrowing.
template <typename T>
struct RopeTable {
    std::size_t head_dim = 0;
    std::size_t positions = 0; // rows, covering 0 .. positions-1
    std::vector<T> cos_tab;    // [positions, head_dim/2]
    std::vector<T> sin_tab;

    static std::shared_ptr<const RopeTable> build(std::size_t head_dim, std::size_t max_pos,
                                                  double base) {
        if (head_dim % 2 != 0) throw ConfigError("rotary embedding needs an even head_dim");
        auto t = std::make_shared<RopeTable>();
        t->head_dim = head_dim;
        t->positions = max_pos + 1;
        const std::size_t pairs = head_dim / 2;
        t->cos_tab.resize(t->positions * pairs);
        t->sin_tab.resize(t->positions * pairs);
        for (std::size_t pos = 0; pos < t->positions; ++pos) {
            for (std::size_t i = 0; i < pairs; ++i) {
                const double freq =
                    std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
                const double angle = static_cast<double>(pos) * freq;
                t->cos_tab[pos * pairs + i] = static_cast<T>(std::cos(angle));
                t->sin_tab[pos * pairs + i] = static_cast<T>(std::sin(angle));
            }
        }
        return t;
    }
};

// Rotates every (2i, 2i+1) pair of each row by its position angle. The
// backward rule applies the inverse rotation to the gradient.
template <typename T>
Tensor<T> rope_rows(const Tensor<T>& x, const std::vector<int>& positions,
                    std::shared_ptr<const RopeTable<T>> table) {
    using TN = detail::TapeNode<T>;
    if (x.ndim() != 2) throw ShapeError("rope_rows expects [rows, head_dim]");
    const std::size_t rows = x.dim(0), hd = x.dim(1);
    if (hd != table->head_dim) throw ConfigError("rope table head_dim mismatch");
    if (positions.size() != rows) throw ShapeError("positions length must equal row count");
    const std::size_t pairs = hd / 2;
    for (int p : positions)
        if (p < 0 || static_cast<std::size_t>(p) >= table->positions)
            throw ContractError("rope position " + std::to_string(p) + " outside table");

    std::vector<T> out(x.size());
    const T* px = x.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* c = table->cos_tab.data() + static_cast<std::size_t>(positions[r]) * pairs;
        const T* s = table->sin_tab.data() + static_cast<std::size_t>(positions[r]) * pairs;
        const T* xr = px + r * hd;
        T* yr = out.data() + r * hd;
        for (std::size_t i = 0; i < pairs; ++i) {
            const T x0 = xr[2 * i], x1 = xr[2 * i + 1];
            yr[2 * i] = x0 * c[i] - x1 * s[i];
            yr[2 * i + 1] = x0 * s[i] + x1 * c[i];
        }
    }
    TN* xn = x.node();
    return Tensor<T>::make_op(
        x.shape(), std::move(out), {x},
        [xn, positions, table = std::move(table), rows, pairs, hd](TN& self) {
            if (!xn->requires_grad) return;
            const T* g = self.grad.data();
            T* gx = xn->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* c = table->cos_tab.data() + static_cast<std::size_t>(positions[r]) * pairs;
                const T* s = table->sin_tab.data() + static_cast<std::size_t>(positions[r]) * pairs;
                const T* gr = g + r * hd;
                T* gxr = gx + r * hd;
                for (std::size_t i = 0; i < pairs; ++i) {
                    const T g0 = gr[2 * i], g1 = gr[2 * i + 1];
                    gxr[2 * i] += g0 * c[i] + g1 * s[i];
                    gxr[2 * i + 1] += -g0 * s[i] + g1 * c[i];
                }
            }
        });
}

// [seq, heads, head_dim] convenience form; every head shares the row's
// position.
template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, const std::vector<int>& positions, double base) {
    if (x.ndim() != 3) throw ShapeError("rope_apply expects [seq, heads, head_dim]");
    const std::size_t seq = x.dim(0), heads = x.dim(1), hd = x.shape()[2];
    if (positions.size() != seq) throw ShapeError("positions length must equal sequence length");
    int max_pos = 0;
    for (int p : positions) max_pos = std::max(max_pos, p);
    auto table = RopeTable<T>::build(hd, static_cast<std::size_t>(max_pos), base);

    std::vector<int> row_positions(seq * heads);
    for (std::size_t s = 0; s < seq; ++s)
        for (std::size_t h = 0; h < heads; ++h) row_positions[s * heads + h] = positions[s];
    Tensor<T> rotated = rope_rows(reshape(x, {seq * heads, hd}), row_positions, table);
    return reshape(rotated, x.shape());
}

// ---------------------------------------------------------------------------
// attention

// Multi-head scaled dot-product attention over pre-projected q/k/v. Rotary
// embedding is applied to q and k per head before the score product.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const std::vector<int>& positions_q, const std::vector<int>& positions_kv,
                    bool use_rope, T attn_scale, std::size_t heads,
                    const std::shared_ptr<const RopeTable<T>>& rope_table) {
    detail::require_2d(q, "attention q");
    detail::require_2d(k, "attention k");
    detail::require_2d(v, "attention v");
    if (k.dim(0) != v.dim(0)) throw ShapeError("attention k and v sequence lengths differ");
    const std::size_t width = q.dim(1);
    if (k.dim(1) != width || v.dim(1) != width)
        throw ShapeError("attention q/k/v widths disagree");
    if (heads == 0 || width % heads != 0) throw ConfigError("width not divisible by heads");
    const std::size_t hd = width / heads;
    if (positions_q.size() != q.dim(0) || positions_kv.size() != k.dim(0))
        throw ShapeError("attention position lists must match sequence lengths");

    Tensor<T> out;
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor<T> qh = slice_cols(q, h * hd, (h + 1) * hd);
        Tensor<T> kh = slice_cols(k, h * hd, (h + 1) * hd);
        Tensor<T> vh = slice_cols(v, h * hd, (h + 1) * hd);
        if (use_rope) {
            qh = rope_rows(qh, positions_q, rope_table);
            kh = rope_rows(kh, positions_kv, rope_table);
        }
        Tensor<T> weights = softmax(scale(matmul_nt(qh, kh), attn_scale), 1);
        Tensor<T> oh = matmul(weights, vh);
        out = out.defined() ? concat_cols(out, oh) : oh;
    }
    return out;
}

// ---------------------------------------------------------------------------
// block parameters

template <typename T>
struct LayerNormParams {
    Tensor<T> gain;
    Tensor<T> bias;
};

template <typename T>
struct AttentionParams {
    Tensor<T> wq, wk, wv, wo; // [d_model, d_model] each
};

template <typename T>
struct DiTBlockParams {
    LayerNormParams<T> ln_self;
    AttentionParams<T> self_attn;
    LayerNormParams<T> ln_cross; // defined only when the variant uses cross-attention
    std::optional<AttentionParams<T>> cross_attn;
    LayerNormParams<T> ln_mlp;
    Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Pre-norm residual order: self-attention, optional cross-attention, MLP.
template <typename T>
Tensor<T> dit_block_forward(const Tensor<T>& x, const Tensor<T>& cross_ctx,
                            const DiTBlockParams<T>& p, const std::vector<int>& positions,
                            const std::vector<int>& cross_positions, std::size_t heads,
                            const std::shared_ptr<const RopeTable<T>>& rope_table) {
    const std::size_t hd = x.dim(1) / heads;
    const T attn_scale = T(1) / std::sqrt(static_cast<T>(hd));
    const T eps = static_cast<T>(kLayerNormEps);

    Tensor<T> h = x;
    {
        Tensor<T> n = layer_norm(h, p.ln_self.gain, p.ln_self.bias, eps);
        Tensor<T> a = attention(matmul(n, p.self_attn.wq), matmul(n, p.self_attn.wk),
                                matmul(n, p.self_attn.wv), positions, positions, true, attn_scale,
                                heads, rope_table);
        h = add(h, matmul(a, p.self_attn.wo));
    }
    if (p.cross_attn.has_value()) {
        if (!cross_ctx.defined())
            throw ConfigError("block has cross-attention weights but no cross context was routed");
        Tensor<T> n = layer_norm(h, p.ln_cross.gain, p.ln_cross.bias, eps);
        Tensor<T> a = attention(matmul(n, p.cross_attn->wq), matmul(cross_ctx, p.cross_attn->wk),
                                matmul(cross_ctx, p.cross_attn->wv), positions, cross_positions,
                                true, attn_scale, heads, rope_table);
        h = add(h, matmul(a, p.cross_attn->wo));
    } else if (cross_ctx.defined()) {
        throw ConfigError("cross context routed to a block without cross-attention weights");
    }
    {
        Tensor<T> n = layer_norm(h, p.ln_mlp.gain, p.ln_mlp.bias, eps);
        Tensor<T> m = add(matmul(gelu(add(matmul(n, p.mlp_w1), p.mlp_b1)), p.mlp_w2), p.mlp_b2);
        h = add(h, m);
    }
    return h;
}

// ---------------------------------------------------------------------------
// timestep embedding

// Sinusoidal features of t through a 2-layer MLP; one d_model token. The
// lowest frequency is 1 rad over [0,1], which keeps the map injective there.
template <typename T>
struct TimestepEmbedding {
    std::vector<double> freqs; // d_model/2 geometric frequencies in [1, 1000]
    Tensor<T> w1, b1, w2, b2;

    static TimestepEmbedding init(std::size_t d_model, Rng& rng) {
        TimestepEmbedding e;
        const std::size_t half = d_model / 2;
        e.freqs.resize(half);
        for (std::size_t i = 0; i < half; ++i)
            e.freqs[i] = half == 1 ? 1.0
                                   : std::exp(std::log(1000.0) * static_cast<double>(i) /
                                              static_cast<double>(half - 1));
        e.w1 = Tensor<T>::randn({d_model, d_model}, rng, T(0.02), true);
        e.b1 = Tensor<T>::zeros({d_model}, true);
        e.w2 = Tensor<T>::randn({d_model, d_model}, rng, T(0.02), true);
        e.b2 = Tensor<T>::zeros({d_model}, true);
        return e;
    }

    Tensor<T> embed(T t) const {
        const std::size_t d_model = w1.dim(0);
        const std::size_t half = freqs.size();
        std::vector<T> feat(d_model, T(0));
        for (std::size_t i = 0; i < half; ++i) {
            const double a = static_cast<double>(t) * freqs[i];
            feat[i] = static_cast<T>(std::sin(a));
            feat[half + i] = static_cast<T>(std::cos(a));
        }
        Tensor<T> f = Tensor<T>::from_data({1, d_model}, std::move(feat));
        return add(matmul(gelu(add(matmul(f, w1), b1)), w2), b2);
    }
};

// ---------------------------------------------------------------------------
// velocity-field model

template <typename T>
class VelocityModel {
public:
    explicit VelocityModel(ModelConfig cfg, Rng rng) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t d = cfg_.d_model;
        const T w_std = T(0.02);

        input_dim_ = cfg_.latent_dim;
        if (cfg_.concat_axis == ConcatAxis::channel) {
            if (!cfg_.video_in_cross()) input_dim_ += cfg_.video_dim;
            if (!cfg_.phoneme_in_cross()) input_dim_ += cfg_.phoneme_dim;
        }
        input_w_ = Tensor<T>::randn({input_dim_, d}, rng, w_std, true);
        input_b_ = Tensor<T>::zeros({d}, true);
        time_ = TimestepEmbedding<T>::init(d, rng);

        if (cfg_.video_in_cross())
            cond_.video_cross = Tensor<T>::randn({cfg_.video_dim, d}, rng, w_std, true);
        if (cfg_.phoneme_in_cross())
            cond_.phoneme_cross = Tensor<T>::randn({cfg_.phoneme_dim, d}, rng, w_std, true);
        if (cfg_.concat_axis == ConcatAxis::sequence) {
            if (!cfg_.video_in_cross())
                cond_.video_seq = Tensor<T>::randn({cfg_.video_dim, d}, rng, w_std, true);
            if (!cfg_.phoneme_in_cross())
                cond_.phoneme_seq = Tensor<T>::randn({cfg_.phoneme_dim, d}, rng, w_std, true);
        }
        if (!cfg_.speaker_in_cross())
            cond_.speaker_seq = Tensor<T>::randn({cfg_.video_dim, d}, rng, w_std, true);

        phoneme_table_ = Tensor<T>::randn({cfg_.phoneme_vocab, cfg_.phoneme_dim}, rng, T(1), true);
        speaker_table_ = Tensor<T>::randn({cfg_.speaker_count, cfg_.video_dim}, rng, T(1), true);

        blocks_.reserve(cfg_.depth);
        for (std::size_t i = 0; i < cfg_.depth; ++i) {
            DiTBlockParams<T> b;
            b.ln_self = {Tensor<T>::full({d}, T(1), true), Tensor<T>::zeros({d}, true)};
            b.self_attn = make_attention(d, rng, w_std);
            if (cfg_.has_cross()) {
                b.ln_cross = {Tensor<T>::full({d}, T(1), true), Tensor<T>::zeros({d}, true)};
                b.cross_attn = make_attention(d, rng, w_std);
            }
            b.ln_mlp = {Tensor<T>::full({d}, T(1), true), Tensor<T>::zeros({d}, true)};
            b.mlp_w1 = Tensor<T>::randn({d, 4 * d}, rng, w_std, true);
            b.mlp_b1 = Tensor<T>::zeros({4 * d}, true);
            b.mlp_w2 = Tensor<T>::zeros({4 * d, d}, true); // zero-init residual output
            b.mlp_b2 = Tensor<T>::zeros({d}, true);
            blocks_.push_back(std::move(b));
        }

        output_w_ = Tensor<T>::randn({d, cfg_.latent_dim}, rng, w_std, true);
        output_b_ = Tensor<T>::zeros({cfg_.latent_dim}, true);

        rope_ = RopeTable<T>::build(cfg_.head_dim(), cfg_.latent_len, cfg_.rope_base);
    }

    const ModelConfig& config() const { return cfg_; }
    const Tensor<T>& phoneme_table() const { return phoneme_table_; }
    const Tensor<T>& speaker_table() const { return speaker_table_; }
    const ConditionProjections<T>& condition_projections() const { return cond_; }
    const std::shared_ptr<const RopeTable<T>>& rope_table() const { return rope_; }

    Tensor<T> forward(const Tensor<T>& x_t, T t, const ConditionBundle<T>& bundle) const {
        if (x_t.ndim() != 2 || x_t.dim(0) != cfg_.latent_len || x_t.dim(1) != cfg_.latent_dim)
            throw ShapeError("model input must be [latent_len, latent_dim]");

        AssembledConditions<T> routed = assemble_conditions(bundle, cfg_, cond_);

        Tensor<T> xin = routed.in_context_channels.defined()
                            ? concat_cols(x_t, routed.in_context_channels)
                            : x_t;
        Tensor<T> h_latent = add(matmul(xin, input_w_), input_b_);

        Tensor<T> prefix = time_.embed(t);
        for (const auto& sp : routed.sequence_prefixes) prefix = concat_rows(prefix, sp);
        const std::size_t n_prefix = prefix.dim(0);

        Tensor<T> h = concat_rows(prefix, h_latent);
        std::vector<int> positions(n_prefix + cfg_.latent_len, 0);
        for (std::size_t i = 0; i < cfg_.latent_len; ++i)
            positions[n_prefix + i] = static_cast<int>(i);

        for (const auto& block : blocks_)
            h = dit_block_forward(h, routed.cross_ctx, block, positions, routed.cross_positions,
                                  cfg_.heads, rope_);

        Tensor<T> h_out = slice_rows(h, n_prefix, n_prefix + cfg_.latent_len);
        return add(matmul(h_out, output_w_), output_b_);
    }

    std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        auto put = [&out](const std::string& name, const Tensor<T>& t) {
            if (t.defined()) out.emplace_back(name, t);
        };
        put("input.W", input_w_);
        put("input.b", input_b_);
        put("time.W1", time_.w1);
        put("time.b1", time_.b1);
        put("time.W2", time_.w2);
        put("time.b2", time_.b2);
        put("cond.video_cross", cond_.video_cross);
        put("cond.phoneme_cross", cond_.phoneme_cross);
        put("cond.video_seq", cond_.video_seq);
        put("cond.phoneme_seq", cond_.phoneme_seq);
        put("cond.speaker_seq", cond_.speaker_seq);
        put("embed.phoneme", phoneme_table_);
        put("embed.speaker", speaker_table_);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "block" + std::to_string(i) + ".";
            const auto& b = blocks_[i];
            put(p + "ln1.gain", b.ln_self.gain);
            put(p + "ln1.bias", b.ln_self.bias);
            put(p + "self.Wq", b.self_attn.wq);
            put(p + "self.Wk", b.self_attn.wk);
            put(p + "self.Wv", b.self_attn.wv);
            put(p + "self.Wo", b.self_attn.wo);
            if (b.cross_attn.has_value()) {
                put(p + "ln2.gain", b.ln_cross.gain);
                put(p + "ln2.bias", b.ln_cross.bias);
                put(p + "cross.Wq", b.cross_attn->wq);
                put(p + "cross.Wk", b.cross_attn->wk);
                put(p + "cross.Wv", b.cross_attn->wv);
                put(p + "cross.Wo", b.cross_attn->wo);
            }
            put(p + "ln3.gain", b.ln_mlp.gain);
            put(p + "ln3.bias", b.ln_mlp.bias);
            put(p + "mlp.W1", b.mlp_w1);
            put(p + "mlp.b1", b.mlp_b1);
            put(p + "mlp.W2", b.mlp_w2);
            put(p + "mlp.b2", b.mlp_b2);
        }
        put("output.W", output_w_);
        put("output.b", output_b_);
        return out;
    }

    // Input projection applied to x (plus zero in-context channels), used by
    // the init-identity test.
    Tensor<T> projection_path(const Tensor<T>& x_t, const ConditionBundle<T>& bundle) const {
        AssembledConditions<T> routed = assemble_conditions(bundle, cfg_, cond_);
        Tensor<T> xin = routed.in_context_channels.defined()
                            ? concat_cols(x_t, routed.in_context_channels)
                            : x_t;
        Tensor<T> h = add(matmul(xin, input_w_), input_b_);
        return add(matmul(h, output_w_), output_b_);
    }

private:
    static AttentionParams<T> make_attention(std::size_t d, Rng& rng, T w_std) {
        AttentionParams<T> a;
        a.wq = Tensor<T>::randn({d, d}, rng, w_std, true);
        a.wk = Tensor<T>::randn({d, d}, rng, w_std, true);
        a.wv = Tensor<T>::randn({d, d}, rng, w_std, true);
        a.wo = Tensor<T>::zeros({d, d}, true); // zero-init residual output
        return a;
    }

    ModelConfig cfg_;
    std::size_t input_dim_ = 0;
    Tensor<T> input_w_, input_b_;
    TimestepEmbedding<T> time_;
    ConditionProjections<T> cond_;
    Tensor<T> phoneme_table_, speaker_table_;
    std::vector<DiTBlockParams<T>> blocks_;
    Tensor<T> output_w_, output_b_;
    std::shared_ptr<const RopeTable<T>> rope_;
};

// ---------------------------------------------------------------------------
// parameter serialization

template <typename T>
std::vector<CheckpointTensor> parameters_to_checkpoint(const VelocityModel<T>& model) {
    std::vector<CheckpointTensor> out;
    for (const auto& [name, tensor] : model.named_parameters())
        out.push_back(to_checkpoint(name, tensor));
    return out;
}

template <typename T>
void load_parameters(VelocityModel<T>& model, const std::vector<CheckpointTensor>& tensors) {
    auto params = model.named_parameters();
    if (params.size() != tensors.size())
        throw IoError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                      std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (tensors[i].name != params[i].first)
            throw IoError("checkpoint tensor '" + tensors[i].name + "' does not match parameter '" +
                          params[i].first + "'");
        load_into(tensors[i], params[i].second);
    }
}

} // namespace flowsynth
