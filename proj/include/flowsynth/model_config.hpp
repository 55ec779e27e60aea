#pragma once

#include <cstddef>
#include <string>

#include "flowsynth/errors.hpp"

namespace flowsynth {

// Which route each condition stream takes into the backbone: cross-attention
// context vs in-context concatenation with the latent sequence.
enum class Variant { CrossV, CrossVS, ConcatV, ConcatVS };

// How in-context conditions join the latent: per-frame channel concatenation
// or extra prefix tokens on the sequence axis.
enum class ConcatAxis { channel, sequence };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::CrossV: return "CrossV";
        case Variant::CrossVS: return "CrossVS";
        case Variant::ConcatV: return "ConcatV";
        case Variant::ConcatVS: return "ConcatVS";
    }
    return "?";
}

inline const char* to_string(ConcatAxis a) {
    return a == ConcatAxis::channel ? "channel" : "sequence";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "CrossV") return Variant::CrossV;
    if (s == "CrossVS") return Variant::CrossVS;
    if (s == "ConcatV") return Variant::ConcatV;
    if (s == "ConcatVS") return Variant::ConcatVS;
    throw ConfigError("unknown variant '" + s + "'");
}

inline ConcatAxis concat_axis_from_string(const std::string& s) {
    if (s == "channel") return ConcatAxis::channel;
    if (s == "sequence") return ConcatAxis::sequence;
    throw ConfigError("unknown concat_axis '" + s + "'");
}

struct ModelConfig {
    Variant variant = Variant::CrossV;
    std::size_t depth = 4;
    std::size_t d_model = 128;
    std::size_t heads = 4;
    std::size_t latent_len = 64;  // frames in the latent sequence
    std::size_t latent_dim = 8;   // channels per latent frame
    std::size_t video_dim = 16;   // video feature channels
    std::size_t phoneme_dim = 8;  // phoneme embedding channels
    std::size_t phoneme_vocab = 8;
    std::size_t speaker_count = 4;
    ConcatAxis concat_axis = ConcatAxis::channel;
    double rope_base = 10000.0;

    std::size_t head_dim() const { return d_model / heads; }

    bool video_in_cross() const {
        return variant == Variant::CrossV || variant == Variant::CrossVS;
    }
    bool phoneme_in_cross() const {
        return variant == Variant::CrossVS || variant == Variant::ConcatV;
    }
    bool has_cross() const { return video_in_cross() || phoneme_in_cross(); }
    // Speaker rides the video route: cross context when video is a cross
    // condition, otherwise a sequence prefix token.
    bool speaker_in_cross() const { return video_in_cross(); }

    void validate() const {
        if (depth == 0) throw ConfigError("depth must be >= 1");
        if (heads == 0 || d_model % heads != 0)
            throw ConfigError("d_model must be divisible by heads");
        if (head_dim() % 2 != 0) throw ConfigError("head_dim must be even for rotary embedding");
        if (latent_len < 1) throw ConfigError("latent_len must be >= 1");
        if (latent_dim < 1 || video_dim < 1 || phoneme_dim < 1)
            throw ConfigError("feature dimensions must be >= 1");
        if (phoneme_vocab < 1) throw ConfigError("phoneme_vocab must be >= 1");
        if (speaker_count < 1) throw ConfigError("speaker_count must be >= 1");
        if (rope_base <= 1.0) throw ConfigError("rope_base must exceed 1");
    }
};

} // namespace flowsynth
