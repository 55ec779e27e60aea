#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flowsynth/conditioning.hpp"
#include "flowsynth/nn.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/synthdata.hpp"
#include "flowsynth/tensor.hpp"

// Flow-matching objective and training loop. Path orientation: x_t =
// (1-t) x0 + t x1 with constant velocity x1 - x0, i.e. noise at t=0 and data
// at t=1.

namespace flowsynth {

// ---------------------------------------------------------------------------
// probability path

template <typename T>
Tensor<T> interpolate_path(const Tensor<T>& x0, const Tensor<T>& x1, T t) {
    if (x0.shape() != x1.shape()) throw ShapeError("path endpoints must share a shape");
    if (t < T(0) || t > T(1)) throw ContractError("path time must lie in [0,1]");
    if (t == T(0)) return x0.clone();
    if (t == T(1)) return x1.clone();
    return add(scale(x0, T(1) - t), scale(x1, t));
}

template <typename T>
Tensor<T> target_velocity(const Tensor<T>& x0, const Tensor<T>& x1) {
    if (x0.shape() != x1.shape()) throw ShapeError("velocity endpoints must share a shape");
    return sub(x1, x0);
}

// Mean squared error over all elements.
template <typename T>
Tensor<T> fm_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape()) throw ShapeError("loss operands must share a shape");
    Tensor<T> d = sub(pred, target);
    return mean_all(mul(d, d));
}

// Linear warmup to base_lr, then constant.
inline double lr_schedule(long step, long warmup_steps, double base_lr) {
    if (step < 0) throw ContractError("lr_schedule step must be >= 0");
    if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

// ---------------------------------------------------------------------------
// optimizer

template <typename T>
struct AdamwConfig {
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0.01);
};

// Decoupled-weight-decay adaptive moments with bias correction. Parameters
// whose gradient is absent in a step are skipped entirely.
template <typename T>
class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, Tensor<T>>> params, AdamwConfig<T> cfg = {})
        : cfg_(cfg) {
        slots_.reserve(params.size());
        for (auto& [name, p] : params)
            slots_.push_back(Slot{p, std::vector<T>(p.size(), T(0)), std::vector<T>(p.size(), T(0))});
    }

    long step_count() const { return step_; }

    void step(T lr) {
        ++step_;
        kernels::AdamwArgs<T> args;
        args.lr = lr;
        args.beta1 = cfg_.beta1;
        args.beta2 = cfg_.beta2;
        args.eps = cfg_.eps;
        args.weight_decay = cfg_.weight_decay;
        args.bias_c1 = T(1) / (T(1) - std::pow(cfg_.beta1, static_cast<T>(step_)));
        args.bias_c2 = T(1) / (T(1) - std::pow(cfg_.beta2, static_cast<T>(step_)));
        const auto& ker = kernels::active<T>();
        for (auto& s : slots_) {
            if (!s.param.has_grad()) continue;
            ker.adamw(s.param.data().data(), s.param.grad().data(), s.m.data(), s.v.data(),
                      s.param.size(), args);
        }
    }

    void zero_grad() {
        for (auto& s : slots_) s.param.zero_grad();
    }

private:
    struct Slot {
        Tensor<T> param;
        std::vector<T> m, v;
    };
    AdamwConfig<T> cfg_;
    std::vector<Slot> slots_;
    long step_ = 0;
};

// ---------------------------------------------------------------------------
// training configuration

struct TaskMix {
    double v2s = 0.0;
    double visual_tts = 0.0;
    double tts = 0.0;
    double mix = 0.0;

    double total() const { return v2s + visual_tts + tts + mix; }

    void validate() const {
        if (v2s < 0 || visual_tts < 0 || tts < 0 || mix < 0)
            throw ConfigError("task mix weights must be non-negative");
        if (total() <= 0) throw ConfigError("task mix needs at least one positive weight");
    }

    Task sample(Rng& rng) const {
        const double u = rng.uniform() * total();
        const std::array<std::pair<Task, double>, 4> entries{
            std::pair{Task::V2S, v2s}, std::pair{Task::VisualTTS, visual_tts},
            std::pair{Task::TTS, tts}, std::pair{Task::MIX, mix}};
        double acc = 0;
        for (const auto& [task, w] : entries) {
            acc += w;
            if (u < acc) return task;
        }
        return Task::MIX;
    }

    std::string id() const {
        std::string s;
        if (v2s > 0) s += "V2S+";
        if (visual_tts > 0) s += "VisualTTS+";
        if (tts > 0) s += "TTS+";
        if (mix > 0) s += "MIX+";
        if (!s.empty()) s.pop_back();
        return s;
    }
};

struct TrainConfig {
    double p_uncond_video = 0.1;
    double p_uncond_phoneme = 0.1;
    double lr = 1e-4;
    long warmup_steps = 100;
    long total_steps = 1000;
    int batch_size = 8;
    TaskMix task_mix{1.0, 0.0, 0.0, 0.0};
    std::uint64_t seed = 1;

    void validate() const {
        if (p_uncond_video < 0 || p_uncond_video > 1 || p_uncond_phoneme < 0 ||
            p_uncond_phoneme > 1)
            throw ConfigError("unconditional probabilities must lie in [0,1]");
        if (lr < 0) throw ConfigError("lr must be non-negative");
        if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
        if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        task_mix.validate();
    }
};

// ---------------------------------------------------------------------------
// bundle assembly from samples

// Task rules: V2S nulls the phoneme stream, TTS nulls the video stream (and
// with it the speaker prefix, which rides the video route).
template <typename T>
ConditionBundle<T> build_bundle(const SyntheticSample<T>& sample, const VelocityModel<T>& model) {
    const ModelConfig& cfg = model.config();
    ConditionBundle<T> b;
    const bool video_null = sample.task == Task::TTS;
    const bool phoneme_null = sample.task == Task::V2S || !sample.track.has_value();

    if (video_null) {
        b.video = Tensor<T>::zeros({cfg.latent_len, cfg.video_dim});
        b.video_null = true;
    } else {
        b.video = interpolate_video(sample.video_raw, cfg.latent_len);
    }
    if (phoneme_null) {
        b.phoneme = Tensor<T>::zeros({cfg.latent_len, cfg.phoneme_dim});
        b.phoneme_null = true;
    } else {
        b.phoneme = expand_phonemes(*sample.track, model.phoneme_table(), cfg.latent_len);
    }
    if (sample.speaker_id.has_value() && !video_null) {
        const int id = *sample.speaker_id;
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.speaker_count)
            throw ConfigError("speaker id " + std::to_string(id) + " outside the speaker table");
        b.speaker = gather_rows(model.speaker_table(), {id});
    }
    return b;
}

// ---------------------------------------------------------------------------
// one optimization step

// Per sample: draw t and x0, build the task bundle, apply CFG dropout, and
// regress the model output onto x1 - x0. Returns the batch loss.
template <typename T>
T train_step(VelocityModel<T>& model, const std::vector<SyntheticSample<T>>& batch, AdamW<T>& opt,
             const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    if (batch.empty()) throw ContractError("train_step needs a non-empty batch");
    const ModelConfig& mc = model.config();

    Tensor<T> total;
    for (const auto& sample : batch) {
        if (sample.latent.dim(0) != mc.latent_len || sample.latent.dim(1) != mc.latent_dim)
            throw ShapeError("sample latent does not match the model latent shape");
        const T t = static_cast<T>(rng.uniform());
        Tensor<T> x0 = Tensor<T>::randn({mc.latent_len, mc.latent_dim}, rng);
        ConditionBundle<T> bundle = build_bundle(sample, model);
        bundle = drop_conditions(bundle, cfg.p_uncond_video, cfg.p_uncond_phoneme, rng);
        Tensor<T> x_t = interpolate_path(x0, sample.latent, t);
        Tensor<T> pred = model.forward(x_t, t, bundle);
        Tensor<T> loss = fm_loss(pred, target_velocity(x0, sample.latent));
        total = total.defined() ? add(total, loss) : loss;
    }
    Tensor<T> loss = scale(total, T(1) / static_cast<T>(batch.size()));
    const T loss_value = loss.item();
    if (!std::isfinite(static_cast<double>(loss_value)))
        throw NumericError("non-finite training loss at optimizer step " +
                           std::to_string(opt.step_count()));
    backward(loss);
    opt.step(static_cast<T>(lr_schedule(opt.step_count(), cfg.warmup_steps, cfg.lr)));
    opt.zero_grad();
    return loss_value;
}

} // namespace flowsynth
