#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowsynth/conditioning.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

// Synthetic stand-ins for the audio/video corpora: planted class patterns in
// the latent, class-coded bumps and a lip channel in the video features, and
// exact ground truth carried on every sample so oracle decoders can verify
// round trips.

namespace flowsynth {

enum class Task { V2S, VisualTTS, TTS, MIX };

inline const char* to_string(Task t) {
    switch (t) {
        case Task::V2S: return "V2S";
        case Task::VisualTTS: return "VisualTTS";
        case Task::TTS: return "TTS";
        case Task::MIX: return "MIX";
    }
    return "?";
}

inline Task task_from_string(const std::string& s) {
    if (s == "V2S") return Task::V2S;
    if (s == "VisualTTS") return Task::VisualTTS;
    if (s == "TTS") return Task::TTS;
    if (s == "MIX") return Task::MIX;
    throw ConfigError("unknown task '" + s + "'");
}

struct SynthEvent {
    int frame = 0;
    int cls = 0;
};

template <typename T>
struct SyntheticSample {
    Task task = Task::V2S;
    Tensor<T> video_raw; // [video_frames, video_dim]; zeros for TTS
    std::optional<PhonemeTrack> track;
    std::optional<int> speaker_id;
    Tensor<T> latent; // [latent_len, latent_dim]
    std::vector<SynthEvent> events; // strictly increasing frames
    std::uint64_t rng_seed = 0;
};

// Generation knobs. Video noise is deliberately larger than the latent
// background: the video stream is the ambiguous condition, the phoneme stream
// the deterministic one.
struct SynthConfig {
    std::size_t latent_len = 64;
    std::size_t latent_dim = 8;
    std::size_t video_dim = 16;
    std::size_t video_frames = 64;
    std::size_t n_classes = 4;
    std::size_t vocab = 8;
    std::size_t speakers = 4;
    double background_sigma = 0.05;
    double video_noise_sigma = 0.5;
    std::size_t video_smear = 3; // half-width of the bump spread, frames
    std::size_t event_window = 6;
    double event_decay = 0.6;
    int min_token_frames = 2;
    int max_token_frames = 6;

    void validate() const {
        if (latent_len < 1 || latent_dim < 2) throw ConfigError("latent must be at least [1,2]");
        if (video_frames < 1 || video_dim < 2) throw ConfigError("video must be at least [1,2]");
        if (n_classes < 1 || vocab < 2 || speakers < 1)
            throw ConfigError("need n_classes >= 1, vocab >= 2, speakers >= 1");
        if (event_window < 1 || event_decay <= 0 || event_decay >= 1)
            throw ConfigError("event window/decay out of range");
        if (min_token_frames < 1 || max_token_frames < min_token_frames)
            throw ConfigError("token duration range invalid");
    }
};

// Seeded class/token patterns. Sound patterns live in the first half of the
// latent channels and speech patterns in the second half, so overlaid sound
// and speech stay exactly separable for the oracles.
template <typename T>
struct PatternDictionary {
    std::uint64_t seed = 0;
    std::size_t latent_dim = 0;
    std::vector<std::vector<T>> sound;  // [n_classes][latent_dim], unit norm
    std::vector<std::vector<T>> speech; // [vocab][latent_dim], unit norm
    std::vector<T> speaker_gain;        // [speakers], in [0.7, 1.3]

    std::size_t sound_channels() const { return latent_dim / 2; }

    static PatternDictionary make(std::uint64_t seed, const SynthConfig& cfg) {
        cfg.validate();
        PatternDictionary d;
        d.seed = seed;
        d.latent_dim = cfg.latent_dim;
        Rng rng(splitmix64(seed ^ 0x5eedULL));
        const std::size_t half = cfg.latent_dim / 2;
        d.sound = draw_group(rng, cfg.n_classes, cfg.latent_dim, 0, half);
        d.speech = draw_group(rng, cfg.vocab, cfg.latent_dim, half, cfg.latent_dim - half);
        d.speaker_gain.resize(cfg.speakers);
        for (auto& g : d.speaker_gain) g = static_cast<T>(rng.uniform(0.7, 1.3));
        return d;
    }

private:
    // Unit vectors supported on [offset, offset+width); resampled a few times
    // to keep pairwise correlations low.
    static std::vector<std::vector<T>> draw_group(Rng& rng, std::size_t count, std::size_t dim,
                                                  std::size_t offset, std::size_t width) {
        std::vector<std::vector<T>> group;
        for (std::size_t c = 0; c < count; ++c) {
            std::vector<T> best;
            double best_max_cos = 2.0;
            for (int attempt = 0; attempt < 64; ++attempt) {
                std::vector<T> v(dim, T(0));
                double norm = 0;
                for (std::size_t i = 0; i < width; ++i) {
                    const double g = rng.normal();
                    v[offset + i] = static_cast<T>(g);
                    norm += g * g;
                }
                norm = std::sqrt(norm);
                for (std::size_t i = 0; i < width; ++i)
                    v[offset + i] = static_cast<T>(v[offset + i] / norm);
                double max_cos = 0;
                for (const auto& other : group) {
                    double c2 = 0;
                    for (std::size_t i = 0; i < dim; ++i)
                        c2 += static_cast<double>(v[i]) * static_cast<double>(other[i]);
                    max_cos = std::max(max_cos, std::abs(c2));
                }
                if (max_cos < best_max_cos) {
                    best_max_cos = max_cos;
                    best = std::move(v);
                }
                if (best_max_cos < 0.5) break;
            }
            group.push_back(std::move(best));
        }
        return group;
    }
};

namespace detail {

// Latent frame -> nearest raw video frame under the linear resampling map.
inline std::size_t video_frame_for(std::size_t latent_frame, std::size_t latent_len,
                                   std::size_t video_frames) {
    if (latent_len <= 1 || video_frames <= 1) return 0;
    const double p = static_cast<double>(latent_frame) * static_cast<double>(video_frames - 1) /
                     static_cast<double>(latent_len - 1);
    return static_cast<std::size_t>(p + 0.5);
}

} // namespace detail

// Adds each event's class pattern over a geometric decay window.
template <typename T>
void add_sound_events(Tensor<T>& latent, const std::vector<SynthEvent>& events,
                      const PatternDictionary<T>& dict, const SynthConfig& cfg) {
    auto lat = latent.data();
    for (const auto& ev : events) {
        const auto& pat = dict.sound.at(static_cast<std::size_t>(ev.cls));
        double amp = 1.0;
        for (std::size_t k = 0; k < cfg.event_window; ++k) {
            const std::size_t f = static_cast<std::size_t>(ev.frame) + k;
            if (f >= cfg.latent_len) break;
            for (std::size_t c = 0; c < cfg.latent_dim; ++c)
                lat[f * cfg.latent_dim + c] += static_cast<T>(amp) * pat[c];
            amp *= cfg.event_decay;
        }
    }
}

// Adds each token's pattern over its frames, scaled by the speaker gain.
template <typename T>
void add_speech_track(Tensor<T>& latent, const PhonemeTrack& track, int speaker_id,
                      const PatternDictionary<T>& dict, const SynthConfig& cfg) {
    auto lat = latent.data();
    const T gain = dict.speaker_gain.at(static_cast<std::size_t>(speaker_id));
    int cursor = track.start_frame;
    for (std::size_t i = 0; i < track.tokens.size(); ++i) {
        const auto& pat = dict.speech.at(static_cast<std::size_t>(track.tokens[i]));
        for (int r = 0; r < track.durations[i] && cursor < static_cast<int>(cfg.latent_len);
             ++r, ++cursor)
            for (std::size_t c = 0; c < cfg.latent_dim; ++c)
                lat[static_cast<std::size_t>(cursor) * cfg.latent_dim + c] += gain * pat[c];
    }
}

// Sound clip: class-coded events at parted frames. The latent carries each
// class pattern over a decaying window; the video carries a class bump at the
// aligned frame plus ambient noise.
template <typename T>
SyntheticSample<T> gen_sound_sample(Rng rng, const SynthConfig& cfg,
                                    const PatternDictionary<T>& dict, int n_events) {
    cfg.validate();
    if (n_events < 0) throw ContractError("n_events must be >= 0");
    const std::size_t w = cfg.event_window;
    if (static_cast<std::size_t>(n_events) * w > cfg.latent_len)
        throw ContractError("event density exceeds latent capacity");

    SyntheticSample<T> s;
    s.task = Task::V2S;
    s.rng_seed = rng.seed();

    // event frames with at least `event_window` separation
    const std::size_t slack = cfg.latent_len - static_cast<std::size_t>(n_events) * w;
    std::vector<std::size_t> offsets(n_events);
    for (auto& o : offsets) o = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(slack)));
    std::sort(offsets.begin(), offsets.end());
    for (int e = 0; e < n_events; ++e) {
        SynthEvent ev;
        ev.frame = static_cast<int>(offsets[e] + static_cast<std::size_t>(e) * w);
        ev.cls = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(dict.sound.size()) - 1));
        s.events.push_back(ev);
    }

    s.latent = Tensor<T>::zeros({cfg.latent_len, cfg.latent_dim});
    auto lat = s.latent.data();
    for (auto& v : lat) v = static_cast<T>(rng.normal() * cfg.background_sigma);
    add_sound_events(s.latent, s.events, dict, cfg);

    s.video_raw = Tensor<T>::zeros({cfg.video_frames, cfg.video_dim});
    auto vid = s.video_raw.data();
    for (const auto& ev : s.events) {
        const int vf = static_cast<int>(detail::video_frame_for(
            static_cast<std::size_t>(ev.frame), cfg.latent_len, cfg.video_frames));
        // class-coded bump on all but the lip channel, spread over a
        // triangular window: a semantic cue with weak temporal localization
        Rng class_rng(splitmix64(dict.seed ^ (0xb00bacafeULL + static_cast<std::uint64_t>(ev.cls))));
        double norm = 0;
        std::vector<double> bump(cfg.video_dim - 1);
        for (auto& b : bump) {
            b = class_rng.normal();
            norm += b * b;
        }
        norm = std::sqrt(norm);
        const int half = static_cast<int>(cfg.video_smear);
        for (int off = -half; off <= half; ++off) {
            const int f = vf + off;
            if (f < 0 || f >= static_cast<int>(cfg.video_frames)) continue;
            const double w = 1.0 - std::abs(off) / static_cast<double>(half + 1);
            for (std::size_t c = 0; c + 1 < cfg.video_dim; ++c)
                vid[static_cast<std::size_t>(f) * cfg.video_dim + c] +=
                    static_cast<T>(w * bump[c] / norm);
        }
    }
    for (auto& v : vid) v += static_cast<T>(rng.normal() * cfg.video_noise_sigma);
    return s;
}

// Speech clip: a token sequence with ground-truth durations. The latent
// renders each token's pattern over its frames, scaled by the speaker's
// amplitude signature; the video (when present) pulses a lip channel at
// token onsets.
template <typename T>
SyntheticSample<T> gen_speech_sample(Rng rng, const SynthConfig& cfg,
                                     const PatternDictionary<T>& dict, int n_tokens,
                                     bool with_video) {
    cfg.validate();
    if (n_tokens < 1) throw ContractError("n_tokens must be >= 1");

    SyntheticSample<T> s;
    s.task = with_video ? Task::VisualTTS : Task::TTS;
    s.rng_seed = rng.seed();

    PhonemeTrack track;
    for (int i = 0; i < n_tokens; ++i)
        track.tokens.push_back(
            static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.vocab) - 1)));
    for (int attempt = 0;; ++attempt) {
        track.durations.clear();
        int total = 0;
        for (int i = 0; i < n_tokens; ++i) {
            const int d = static_cast<int>(rng.uniform_int(cfg.min_token_frames, cfg.max_token_frames));
            track.durations.push_back(d);
            total += d;
        }
        if (total <= static_cast<int>(cfg.latent_len)) break;
        if (attempt >= 9) {
            // clip to fit
            int budget = static_cast<int>(cfg.latent_len);
            std::vector<int> toks, durs;
            for (std::size_t i = 0; i < track.tokens.size() && budget > 0; ++i) {
                const int d = std::min(track.durations[i], budget);
                toks.push_back(track.tokens[i]);
                durs.push_back(d);
                budget -= d;
            }
            track.tokens = std::move(toks);
            track.durations = std::move(durs);
            break;
        }
    }
    s.speaker_id = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.speakers) - 1));

    s.latent = Tensor<T>::zeros({cfg.latent_len, cfg.latent_dim});
    auto lat = s.latent.data();
    for (auto& v : lat) v = static_cast<T>(rng.normal() * cfg.background_sigma);
    add_speech_track(s.latent, track, *s.speaker_id, dict, cfg);

    s.video_raw = Tensor<T>::zeros({cfg.video_frames, cfg.video_dim});
    if (with_video) {
        auto vid = s.video_raw.data();
        const std::size_t lip = cfg.video_dim - 1;
        int onset = 0;
        for (std::size_t i = 0; i < track.tokens.size(); ++i) {
            const std::size_t vf = detail::video_frame_for(static_cast<std::size_t>(onset),
                                                           cfg.latent_len, cfg.video_frames);
            vid[vf * cfg.video_dim + lip] += T(1);
            onset += track.durations[i];
        }
        for (auto& v : vid) v += static_cast<T>(rng.normal() * cfg.video_noise_sigma);
    }
    s.track = std::move(track);
    return s;
}

struct GenRanges {
    int events_min = 1;
    int events_max = 3;
    int tokens_min = 2;
    int tokens_max = 6;

    void validate() const {
        if (events_min < 0 || events_max < events_min) throw ConfigError("event range invalid");
        if (tokens_min < 1 || tokens_max < tokens_min) throw ConfigError("token range invalid");
    }
};

enum class MixMode { concat, overlay };

inline const char* to_string(MixMode m) { return m == MixMode::concat ? "concat" : "overlay"; }

// Sound-speech mixture: either a random time split (sound before, speech
// after, conditions split identically) or an overlay (latents summed, both
// condition tracks kept).
template <typename T>
SyntheticSample<T> mix_samples(const SyntheticSample<T>& sound, const SyntheticSample<T>& speech,
                               MixMode mode, Rng rng, const SynthConfig& cfg) {
    if (sound.task != Task::V2S) throw ContractError("mix_samples expects a sound sample first");
    if (speech.task != Task::VisualTTS && speech.task != Task::TTS)
        throw ContractError("mix_samples expects a speech sample second");
    const std::size_t frames = cfg.latent_len;
    if (sound.latent.dim(0) != frames || speech.latent.dim(0) != frames)
        throw ShapeError("mix inputs must share the latent length");

    SyntheticSample<T> out;
    out.task = Task::MIX;
    out.rng_seed = rng.seed();
    out.speaker_id = speech.speaker_id;

    Tensor<T> video_a = interpolate_video(sound.video_raw, frames);
    Tensor<T> video_b = interpolate_video(speech.video_raw, frames);
    const std::size_t vd = video_a.dim(1);

    if (mode == MixMode::overlay) {
        out.latent = Tensor<T>::zeros(sound.latent.shape());
        kernels::active<T>().add(sound.latent.data().data(), speech.latent.data().data(),
                                 out.latent.data().data(), out.latent.size());
        out.video_raw = Tensor<T>::zeros(video_a.shape());
        kernels::active<T>().add(video_a.data().data(), video_b.data().data(),
                                 out.video_raw.data().data(), out.video_raw.size());
        out.events = sound.events;
        out.track = speech.track;
        return out;
    }

    const std::size_t split =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(frames) - 1));
    const std::size_t dim = sound.latent.dim(1);
    out.latent = Tensor<T>::zeros(sound.latent.shape());
    out.video_raw = Tensor<T>::zeros(video_a.shape());
    auto lat = out.latent.data();
    auto vid = out.video_raw.data();
    const T* la = sound.latent.data().data();
    const T* lb = speech.latent.data().data();
    const T* va = video_a.data().data();
    const T* vb = video_b.data().data();
    for (std::size_t f = 0; f < frames; ++f) {
        if (f < split) {
            std::copy_n(la + f * dim, dim, lat.data() + f * dim);
            std::copy_n(va + f * vd, vd, vid.data() + f * vd);
        } else {
            // speech re-based to start at the split
            std::copy_n(lb + (f - split) * dim, dim, lat.data() + f * dim);
            std::copy_n(vb + (f - split) * vd, vd, vid.data() + f * vd);
        }
    }
    for (const auto& ev : sound.events)
        if (static_cast<std::size_t>(ev.frame) < split) out.events.push_back(ev);
    if (speech.track.has_value()) {
        PhonemeTrack shifted;
        shifted.start_frame = static_cast<int>(split);
        int cursor = 0;
        const int room = static_cast<int>(frames - split);
        for (std::size_t i = 0; i < speech.track->tokens.size() && cursor < room; ++i) {
            const int d = std::min(speech.track->durations[i], room - cursor);
            shifted.tokens.push_back(speech.track->tokens[i]);
            shifted.durations.push_back(d);
            cursor += d;
        }
        if (!shifted.tokens.empty()) out.track = std::move(shifted);
    }
    return out;
}

// One fresh sample of the requested task from its own rng stream. MIX draws a
// sound and a speech clip and combines them with a fair concat/overlay coin.
template <typename T>
SyntheticSample<T> draw_task_sample(Task task, Rng rng, const SynthConfig& cfg,
                                    const PatternDictionary<T>& dict,
                                    const GenRanges& ranges = {}) {
    ranges.validate();
    switch (task) {
        case Task::V2S: {
            const int n = static_cast<int>(rng.uniform_int(ranges.events_min, ranges.events_max));
            return gen_sound_sample(rng.fork(1), cfg, dict, n);
        }
        case Task::VisualTTS:
        case Task::TTS: {
            const int n = static_cast<int>(rng.uniform_int(ranges.tokens_min, ranges.tokens_max));
            return gen_speech_sample(rng.fork(1), cfg, dict, n, task == Task::VisualTTS);
        }
        case Task::MIX: {
            const int ne =
                std::max(1, static_cast<int>(rng.uniform_int(ranges.events_min, ranges.events_max)));
            const int nt = static_cast<int>(rng.uniform_int(ranges.tokens_min, ranges.tokens_max));
            const MixMode mode = rng.bernoulli(0.5) ? MixMode::concat : MixMode::overlay;
            auto sound = gen_sound_sample(rng.fork(1), cfg, dict, ne);
            auto speech = gen_speech_sample(rng.fork(2), cfg, dict, nt, true);
            return mix_samples(sound, speech, mode, rng.fork(3), cfg);
        }
    }
    throw ContractError("unknown task");
}

} // namespace flowsynth
