#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "flowsynth/model_config.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

// Frame-aligned condition construction and per-variant routing. Everything
// here is a pure function of its inputs plus an explicit Rng.

namespace flowsynth {

// Token sequence with per-token frame durations (ground truth at this scale).
// `start_frame` shifts the whole sequence right, encoding leading silence in
// concatenation-style mixtures.
struct PhonemeTrack {
    std::vector<int> tokens;
    std::vector<int> durations;
    int start_frame = 0;

    int total_frames() const { return std::accumulate(durations.begin(), durations.end(), 0); }

    void validate(std::size_t latent_len, std::size_t vocab) const {
        if (tokens.size() != durations.size())
            throw AlignmentError("tokens and durations must have equal length");
        if (start_frame < 0) throw AlignmentError("start_frame must be non-negative");
        int total = start_frame;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab)
                throw ContractError("token " + std::to_string(tokens[i]) + " outside vocabulary");
            if (durations[i] <= 0) throw AlignmentError("durations must be positive");
            total += durations[i];
        }
        if (total > static_cast<int>(latent_len))
            throw AlignmentError("durations cover " + std::to_string(total) + " frames, latent has " +
                                 std::to_string(latent_len));
    }
};

// Per-sample conditioning state. Null flags mark CFG-dropped streams; a set
// flag implies the tensor is all zeros. The speaker prefix follows the video
// route, so nulling video also removes it.
template <typename T>
struct ConditionBundle {
    Tensor<T> video;   // [latent_len, video_dim]
    Tensor<T> phoneme; // [latent_len, phoneme_dim]
    Tensor<T> speaker; // [1, video_dim] when present, undefined otherwise
    bool video_null = false;
    bool phoneme_null = false;

    bool has_speaker() const { return speaker.defined(); }

    static ConditionBundle make_null(std::size_t latent_len, std::size_t video_dim,
                                     std::size_t phoneme_dim) {
        ConditionBundle b;
        b.video = Tensor<T>::zeros({latent_len, video_dim});
        b.phoneme = Tensor<T>::zeros({latent_len, phoneme_dim});
        b.video_null = true;
        b.phoneme_null = true;
        return b;
    }

    // CFG unconditional branch: both streams nulled.
    ConditionBundle nulled() const {
        return make_null(video.dim(0), video.dim(1), phoneme.dim(1));
    }

    ConditionBundle with_video_nulled() const {
        ConditionBundle b = *this;
        b.video = Tensor<T>::zeros(video.shape());
        b.video_null = true;
        b.speaker = Tensor<T>();
        return b;
    }

    ConditionBundle with_phoneme_nulled() const {
        ConditionBundle b = *this;
        b.phoneme = Tensor<T>::zeros(phoneme.shape());
        b.phoneme_null = true;
        return b;
    }
};

// Linear resampling of video features onto `latent_len` uniform points over
// [0, frames-1]; endpoints map exactly.
template <typename T>
Tensor<T> interpolate_video(const Tensor<T>& raw, std::size_t latent_len) {
    if (raw.ndim() != 2) throw ShapeError("interpolate_video expects [frames, dim]");
    const std::size_t frames = raw.dim(0), dim = raw.dim(1);
    if (frames == 0) throw ContractError("interpolate_video: empty input");
    std::vector<T> out(latent_len * dim);
    const T* src = raw.data().data();
    if (frames == latent_len) {
        std::copy_n(src, out.size(), out.data());
        return Tensor<T>::from_data({latent_len, dim}, std::move(out));
    }
    for (std::size_t i = 0; i < latent_len; ++i) {
        const double p = latent_len == 1
                             ? 0.0
                             : static_cast<double>(i) * static_cast<double>(frames - 1) /
                                   static_cast<double>(latent_len - 1);
        std::size_t lo = static_cast<std::size_t>(p);
        if (lo >= frames - 1) lo = frames >= 2 ? frames - 2 : 0;
        const double frac = p - static_cast<double>(lo);
        const T* a = src + lo * dim;
        const T* b = src + std::min(lo + 1, frames - 1) * dim;
        for (std::size_t c = 0; c < dim; ++c)
            out[i * dim + c] = static_cast<T>((1.0 - frac) * a[c] + frac * b[c]);
    }
    return Tensor<T>::from_data({latent_len, dim}, std::move(out));
}

// Repeats each token's embedding for its duration, zero-padding the tail.
// Gradients flow into the embedding table.
template <typename T>
Tensor<T> expand_phonemes(const PhonemeTrack& track, const Tensor<T>& embedding_table,
                          std::size_t latent_len) {
    if (embedding_table.ndim() != 2) throw ShapeError("embedding table must be [vocab, dim]");
    track.validate(latent_len, embedding_table.dim(0));
    std::vector<int> frame_tokens(latent_len, -1);
    std::size_t cursor = static_cast<std::size_t>(track.start_frame);
    for (std::size_t i = 0; i < track.tokens.size(); ++i)
        for (int r = 0; r < track.durations[i]; ++r) frame_tokens[cursor++] = track.tokens[i];
    return gather_rows(embedding_table, frame_tokens);
}

// Learned projections used while routing conditions. Only the maps a given
// (variant, concat_axis) needs are defined.
template <typename T>
struct ConditionProjections {
    Tensor<T> video_cross;   // [video_dim, d_model]; also projects the speaker row
    Tensor<T> phoneme_cross; // [phoneme_dim, d_model]
    Tensor<T> video_seq;     // [video_dim, d_model] for sequence-mode in-context video
    Tensor<T> phoneme_seq;   // [phoneme_dim, d_model]
    Tensor<T> speaker_seq;   // [video_dim, d_model] speaker prefix in concat routes
};

template <typename T>
struct AssembledConditions {
    Tensor<T> cross_ctx;               // undefined when the variant has no cross inputs
    std::vector<int> cross_positions;  // frame index per cross row (prefix rows use 0)
    Tensor<T> in_context_channels;     // channel-mode conditions, pre-projection
    std::vector<Tensor<T>> sequence_prefixes; // each [rows, d_model], all at position 0
};

// Routes the bundle per variant. Cross streams are projected to d_model;
// channel-mode in-context streams stay raw (the model's input projection
// consumes them); sequence-mode in-context streams get their own projections
// and become prefix tokens.
template <typename T>
AssembledConditions<T> assemble_conditions(const ConditionBundle<T>& bundle,
                                           const ModelConfig& cfg,
                                           const ConditionProjections<T>& proj) {
    cfg.validate();
    const std::size_t frames = cfg.latent_len;
    if (bundle.video.dim(0) != frames || bundle.phoneme.dim(0) != frames)
        throw ShapeError("condition bundle is not frame-aligned to the latent length");
    if (bundle.video.dim(1) != cfg.video_dim || bundle.phoneme.dim(1) != cfg.phoneme_dim)
        throw ConfigError("condition bundle channel counts do not match the model config");

    AssembledConditions<T> out;

    auto frame_positions = [frames]() {
        std::vector<int> p(frames);
        for (std::size_t i = 0; i < frames; ++i) p[i] = static_cast<int>(i);
        return p;
    };

    if (cfg.video_in_cross()) {
        Tensor<T> video_src = bundle.video;
        std::vector<int> pos;
        if (bundle.has_speaker()) {
            video_src = concat_rows(bundle.speaker, bundle.video);
            pos.push_back(0);
        }
        auto fp = frame_positions();
        pos.insert(pos.end(), fp.begin(), fp.end());
        out.cross_ctx = matmul(video_src, proj.video_cross);
        out.cross_positions = std::move(pos);
    }
    if (cfg.phoneme_in_cross()) {
        Tensor<T> ph = matmul(bundle.phoneme, proj.phoneme_cross);
        auto fp = frame_positions();
        if (out.cross_ctx.defined()) {
            out.cross_ctx = concat_rows(out.cross_ctx, ph);
            out.cross_positions.insert(out.cross_positions.end(), fp.begin(), fp.end());
        } else {
            out.cross_ctx = std::move(ph);
            out.cross_positions = std::move(fp);
        }
    }

    // Speaker prefix in routes without a video cross path.
    if (!cfg.speaker_in_cross() && bundle.has_speaker())
        out.sequence_prefixes.push_back(matmul(bundle.speaker, proj.speaker_seq));

    const bool video_in_context = !cfg.video_in_cross();
    const bool phoneme_in_context = !cfg.phoneme_in_cross();
    if (cfg.concat_axis == ConcatAxis::channel) {
        if (video_in_context && phoneme_in_context)
            out.in_context_channels = concat_cols(bundle.video, bundle.phoneme);
        else if (video_in_context)
            out.in_context_channels = bundle.video;
        else if (phoneme_in_context)
            out.in_context_channels = bundle.phoneme;
    } else {
        if (video_in_context)
            out.sequence_prefixes.push_back(matmul(bundle.video, proj.video_seq));
        if (phoneme_in_context)
            out.sequence_prefixes.push_back(matmul(bundle.phoneme, proj.phoneme_seq));
    }
    return out;
}

// Independent CFG dropout of the two condition streams.
template <typename T>
ConditionBundle<T> drop_conditions(const ConditionBundle<T>& bundle, double p_video,
                                   double p_phoneme, Rng& rng) {
    if (p_video < 0 || p_video > 1 || p_phoneme < 0 || p_phoneme > 1)
        throw ContractError("dropout probabilities must lie in [0,1]");
    ConditionBundle<T> out = bundle;
    if (rng.bernoulli(p_video)) out = out.with_video_nulled();
    if (rng.bernoulli(p_phoneme)) out = out.with_phoneme_nulled();
    return out;
}

} // namespace flowsynth
