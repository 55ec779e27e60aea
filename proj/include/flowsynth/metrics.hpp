#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flowsynth/flowmatch.hpp"
#include "flowsynth/sampler.hpp"
#include "flowsynth/synthdata.hpp"

// Oracle decoders and desk-scale quality metrics. The oracles invert the
// synthetic generators exactly on clean data, which pins the evaluation
// pipeline independently of the learned model.

namespace flowsynth {

// ---------------------------------------------------------------------------
// oracles

// Correlation argmax per token window; window placement comes from the
// ground-truth durations. Scaling the latent rescales every score equally,
// so speaker amplitude drops out of the argmax.
template <typename T>
std::vector<int> oracle_decode_tokens(const Tensor<T>& latent, const PhonemeTrack& track,
                                      const PatternDictionary<T>& dict) {
    detail::require_2d(latent, "oracle_decode_tokens latent");
    const std::size_t frames = latent.dim(0), dim = latent.dim(1);
    if (dim != dict.latent_dim) throw ShapeError("latent channels do not match the dictionary");
    std::vector<int> decoded;
    const T* p = latent.data().data();
    int cursor = track.start_frame;
    for (std::size_t i = 0; i < track.tokens.size(); ++i) {
        const int dur = track.durations[i];
        const int lo = cursor;
        const int hi = std::min<int>(cursor + dur, static_cast<int>(frames));
        cursor += dur;
        if (hi <= lo) continue; // empty window
        std::vector<double> mean(dim, 0.0);
        for (int f = lo; f < hi; ++f)
            for (std::size_t c = 0; c < dim; ++c)
                mean[c] += static_cast<double>(p[static_cast<std::size_t>(f) * dim + c]);
        double best = -1e300;
        int best_tok = 0;
        for (std::size_t j = 0; j < dict.speech.size(); ++j) {
            double score = 0;
            for (std::size_t c = 0; c < dim; ++c)
                score += mean[c] * static_cast<double>(dict.speech[j][c]);
            if (score > best) {
                best = score;
                best_tok = static_cast<int>(j);
            }
        }
        decoded.push_back(best_tok);
    }
    return decoded;
}

// Matched-filter event detection: per frame, correlate against every class
// pattern; local maxima of the best-class score above the threshold become
// detections.
template <typename T>
std::vector<SynthEvent> oracle_detect_onsets(const Tensor<T>& latent,
                                             const PatternDictionary<T>& dict, double threshold) {
    detail::require_2d(latent, "oracle_detect_onsets latent");
    if (threshold <= 0) throw ContractError("onset threshold must be positive");
    const std::size_t frames = latent.dim(0), dim = latent.dim(1);
    if (dim != dict.latent_dim) throw ShapeError("latent channels do not match the dictionary");
    const T* p = latent.data().data();
    std::vector<double> score(frames, 0.0);
    std::vector<int> cls(frames, 0);
    for (std::size_t f = 0; f < frames; ++f) {
        double best = -1e300;
        int best_c = 0;
        for (std::size_t c = 0; c < dict.sound.size(); ++c) {
            double s = 0;
            for (std::size_t i = 0; i < dim; ++i)
                s += static_cast<double>(p[f * dim + i]) * static_cast<double>(dict.sound[c][i]);
            if (s > best) {
                best = s;
                best_c = static_cast<int>(c);
            }
        }
        score[f] = best;
        cls[f] = best_c;
    }
    std::vector<SynthEvent> events;
    for (std::size_t f = 0; f < frames; ++f) {
        if (score[f] <= threshold) continue;
        const double left = f == 0 ? -1e300 : score[f - 1];
        const double right = f + 1 == frames ? -1e300 : score[f + 1];
        if (score[f] >= left && score[f] > right)
            events.push_back({static_cast<int>(f), cls[f]});
    }
    return events;
}

// ---------------------------------------------------------------------------
// distances

inline std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub_cost = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub_cost});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// Pooled per-channel mean and standard deviation of one latent.
template <typename T>
std::vector<double> latent_features(const Tensor<T>& latent) {
    detail::require_2d(latent, "latent_features input");
    const std::size_t frames = latent.dim(0), dim = latent.dim(1);
    std::vector<double> feats(2 * dim, 0.0);
    const T* p = latent.data().data();
    for (std::size_t c = 0; c < dim; ++c) {
        double mean = 0;
        for (std::size_t f = 0; f < frames; ++f) mean += static_cast<double>(p[f * dim + c]);
        mean /= static_cast<double>(frames);
        double var = 0;
        for (std::size_t f = 0; f < frames; ++f) {
            const double d = static_cast<double>(p[f * dim + c]) - mean;
            var += d * d;
        }
        var /= static_cast<double>(frames);
        feats[c] = mean;
        feats[dim + c] = std::sqrt(var);
    }
    return feats;
}

// Squared Frechet distance between two feature clouds under the diagonal
// covariance simplification:
//   d^2 = |mu_a - mu_b|^2 + sum_i (va_i + vb_i - 2 sqrt(va_i vb_i))
inline double frechet_gaussian(const std::vector<std::vector<double>>& feats_a,
                               const std::vector<std::vector<double>>& feats_b) {
    if (feats_a.size() < 2 || feats_b.size() < 2)
        throw StatsError("frechet_gaussian needs at least two vectors per set");
    const std::size_t dim = feats_a.front().size();
    for (const auto& v : feats_a)
        if (v.size() != dim) throw StatsError("feature dimensions inconsistent");
    for (const auto& v : feats_b)
        if (v.size() != dim) throw StatsError("feature dimensions inconsistent");

    auto moments = [dim](const std::vector<std::vector<double>>& feats) {
        std::vector<double> mu(dim, 0.0), var(dim, 0.0);
        for (const auto& v : feats)
            for (std::size_t i = 0; i < dim; ++i) mu[i] += v[i];
        for (auto& m : mu) m /= static_cast<double>(feats.size());
        for (const auto& v : feats)
            for (std::size_t i = 0; i < dim; ++i) {
                const double d = v[i] - mu[i];
                var[i] += d * d;
            }
        for (auto& s : var) s /= static_cast<double>(feats.size());
        return std::pair{mu, var};
    };
    const auto [mu_a, var_a] = moments(feats_a);
    const auto [mu_b, var_b] = moments(feats_b);
    double d2 = 0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double dm = mu_a[i] - mu_b[i];
        d2 += dm * dm + var_a[i] + var_b[i] - 2.0 * std::sqrt(var_a[i] * var_b[i]);
    }
    return std::max(0.0, d2);
}

// ---------------------------------------------------------------------------
// evaluation

struct OracleConfig {
    double onset_threshold = 0.5;
    int onset_tolerance = 2; // frames
};

struct MetricsReport {
    double toy_fad = 0.0;
    double onset_acc = 1.0;
    double token_error_rate = 0.0;
    double cond_adherence = 1.0;
    long step = 0;
    std::string variant;
    std::string task;
    std::string task_mix;
    double cfg_scale = 1.0;
    int failures = 0;

    void validate() const {
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!(toy_fad >= 0.0) || !std::isfinite(toy_fad))
            throw StatsError("toy_fad out of range");
        if (!in01(onset_acc) || !in01(token_error_rate) || !in01(cond_adherence))
            throw StatsError("metric rates must lie in [0,1]");
    }
};

namespace detail {

inline double onset_accuracy(const std::vector<SynthEvent>& planted,
                             const std::vector<SynthEvent>& detected, int tolerance) {
    if (planted.empty() && detected.empty()) return 1.0;
    std::vector<bool> used(detected.size(), false);
    std::size_t matched = 0;
    for (const auto& ev : planted) {
        for (std::size_t j = 0; j < detected.size(); ++j) {
            if (used[j] || detected[j].cls != ev.cls) continue;
            if (std::abs(detected[j].frame - ev.frame) <= tolerance) {
                used[j] = true;
                ++matched;
                break;
            }
        }
    }
    return static_cast<double>(matched) /
           static_cast<double>(std::max(planted.size(), detected.size()));
}

inline int dominant_class(const std::vector<SynthEvent>& events) {
    std::vector<int> counts;
    for (const auto& ev : events) {
        if (static_cast<std::size_t>(ev.cls) >= counts.size()) counts.resize(ev.cls + 1, 0);
        ++counts[ev.cls];
    }
    int best = 0, best_count = -1;
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] > best_count) {
            best_count = counts[c];
            best = static_cast<int>(c);
        }
    return best;
}

inline int dominant_token(const std::vector<int>& tokens) {
    std::vector<int> counts;
    for (int t : tokens) {
        if (t < 0) continue;
        if (static_cast<std::size_t>(t) >= counts.size()) counts.resize(t + 1, 0);
        ++counts[t];
    }
    int best = 0, best_count = -1;
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] > best_count) {
            best_count = counts[c];
            best = static_cast<int>(c);
        }
    return best;
}

} // namespace detail

// Generates one latent per eval item and scores it against the planted
// ground truth. Numeric failures are excluded from the averages and counted.
// The per-item noise seed depends only on (eval_seed, item index), so sweeps
// over cfg scales reuse identical x0 draws.
template <typename T>
MetricsReport evaluate(const VelocityModel<T>& model, const SamplerConfig& sampler_cfg,
                       const std::vector<SyntheticSample<T>>& eval_set, Task task,
                       const PatternDictionary<T>& dict, std::uint64_t eval_seed,
                       const OracleConfig& oracle = {}) {
    for (const auto& s : eval_set)
        if (s.task != task) throw ContractError("evaluate expects a task-homogeneous eval set");

    MetricsReport report;
    report.task = to_string(task);
    report.variant = to_string(model.config().variant);
    report.cfg_scale = sampler_cfg.cfg_scale;

    std::vector<std::vector<double>> gen_feats, ref_feats;
    double onset_sum = 0;
    std::size_t onset_items = 0;
    double ter_sum = 0;
    std::size_t ter_items = 0;
    double adherence_sum = 0;
    std::size_t adherence_items = 0;

    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const auto& sample = eval_set[i];
        Rng noise_rng(splitmix64(eval_seed ^ splitmix64(i + 1)));
        Tensor<T> x0 = Tensor<T>::randn(
            {model.config().latent_len, model.config().latent_dim}, noise_rng);
        Tensor<T> generated;
        try {
            ConditionBundle<T> bundle = build_bundle(sample, model);
            generated = sample_latent(model, bundle, x0, sampler_cfg);
        } catch (const NumericError&) {
            ++report.failures;
            continue;
        }

        gen_feats.push_back(latent_features(generated));
        ref_feats.push_back(latent_features(sample.latent));

        const auto detected = oracle_detect_onsets(generated, dict, oracle.onset_threshold);
        onset_sum += detail::onset_accuracy(sample.events, detected, oracle.onset_tolerance);
        ++onset_items;

        if (sample.track.has_value() && !sample.track->tokens.empty()) {
            const auto decoded = oracle_decode_tokens(generated, *sample.track, dict);
            const double ter =
                static_cast<double>(edit_distance(decoded, sample.track->tokens)) /
                static_cast<double>(std::max<std::size_t>(1, sample.track->tokens.size()));
            ter_sum += std::min(1.0, ter);
            ++ter_items;
        }

        if (!sample.events.empty()) {
            adherence_sum += detail::dominant_class(detected) == detail::dominant_class(sample.events)
                                 ? 1.0
                                 : 0.0;
            ++adherence_items;
        } else if (sample.track.has_value() && !sample.track->tokens.empty()) {
            const auto decoded = oracle_decode_tokens(generated, *sample.track, dict);
            adherence_sum +=
                detail::dominant_token(decoded) == detail::dominant_token(sample.track->tokens)
                    ? 1.0
                    : 0.0;
            ++adherence_items;
        }
    }

    report.toy_fad = frechet_gaussian(gen_feats, ref_feats);
    report.onset_acc = onset_items ? onset_sum / static_cast<double>(onset_items) : 1.0;
    report.token_error_rate = ter_items ? ter_sum / static_cast<double>(ter_items) : 0.0;
    report.cond_adherence =
        adherence_items ? adherence_sum / static_cast<double>(adherence_items) : 1.0;
    report.validate();
    return report;
}

} // namespace flowsynth
