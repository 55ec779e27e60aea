#include "flowsynth/harness/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace flowsynth::harness {

using nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

const json* find(const json& j, const std::string& key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

template <typename T>
void read_number(const json& j, const std::string& path, const std::string& key, T& out) {
    if (const json* v = find(j, key)) {
        if (!v->is_number()) field_error(path + "." + key, "expected a number");
        out = v->get<T>();
    }
}

void read_string(const json& j, const std::string& path, const std::string& key,
                 std::string& out) {
    if (const json* v = find(j, key)) {
        if (!v->is_string()) field_error(path + "." + key, "expected a string");
        out = v->get<std::string>();
    }
}

ModelConfig parse_model(const json& j, const std::string& path) {
    ModelConfig m;
    if (!j.is_object()) field_error(path, "expected an object");
    std::string variant = to_string(m.variant), axis = to_string(m.concat_axis);
    read_string(j, path, "variant", variant);
    read_string(j, path, "concat_axis", axis);
    try {
        m.variant = variant_from_string(variant);
        m.concat_axis = concat_axis_from_string(axis);
    } catch (const ConfigError& e) {
        field_error(path, e.what());
    }
    read_number(j, path, "depth", m.depth);
    read_number(j, path, "d_model", m.d_model);
    read_number(j, path, "heads", m.heads);
    read_number(j, path, "latent_len", m.latent_len);
    read_number(j, path, "latent_dim", m.latent_dim);
    read_number(j, path, "video_dim", m.video_dim);
    read_number(j, path, "phoneme_dim", m.phoneme_dim);
    read_number(j, path, "phoneme_vocab", m.phoneme_vocab);
    read_number(j, path, "speaker_count", m.speaker_count);
    read_number(j, path, "rope_base", m.rope_base);
    return m;
}

json model_to_json(const ModelConfig& m) {
    return json{{"variant", to_string(m.variant)},
                {"concat_axis", to_string(m.concat_axis)},
                {"depth", m.depth},
                {"d_model", m.d_model},
                {"heads", m.heads},
                {"latent_len", m.latent_len},
                {"latent_dim", m.latent_dim},
                {"video_dim", m.video_dim},
                {"phoneme_dim", m.phoneme_dim},
                {"phoneme_vocab", m.phoneme_vocab},
                {"speaker_count", m.speaker_count},
                {"rope_base", m.rope_base}};
}

TrainConfig parse_train(const json& j, const std::string& path) {
    TrainConfig t;
    if (!j.is_object()) field_error(path, "expected an object");
    read_number(j, path, "p_uncond_video", t.p_uncond_video);
    read_number(j, path, "p_uncond_phoneme", t.p_uncond_phoneme);
    read_number(j, path, "lr", t.lr);
    read_number(j, path, "warmup_steps", t.warmup_steps);
    read_number(j, path, "total_steps", t.total_steps);
    read_number(j, path, "batch_size", t.batch_size);
    read_number(j, path, "seed", t.seed);
    if (const json* mix = find(j, "task_mix")) {
        if (!mix->is_object()) field_error(path + ".task_mix", "expected an object");
        t.task_mix = TaskMix{};
        for (const auto& [key, value] : mix->items()) {
            if (!value.is_number()) field_error(path + ".task_mix." + key, "expected a number");
            const double w = value.get<double>();
            if (key == "V2S")
                t.task_mix.v2s = w;
            else if (key == "VisualTTS")
                t.task_mix.visual_tts = w;
            else if (key == "TTS")
                t.task_mix.tts = w;
            else if (key == "MIX")
                t.task_mix.mix = w;
            else
                field_error(path + ".task_mix." + key, "unknown task");
        }
    }
    return t;
}

json train_to_json(const TrainConfig& t) {
    json mix = json::object();
    if (t.task_mix.v2s > 0) mix["V2S"] = t.task_mix.v2s;
    if (t.task_mix.visual_tts > 0) mix["VisualTTS"] = t.task_mix.visual_tts;
    if (t.task_mix.tts > 0) mix["TTS"] = t.task_mix.tts;
    if (t.task_mix.mix > 0) mix["MIX"] = t.task_mix.mix;
    return json{{"p_uncond_video", t.p_uncond_video},
                {"p_uncond_phoneme", t.p_uncond_phoneme},
                {"lr", t.lr},
                {"warmup_steps", t.warmup_steps},
                {"total_steps", t.total_steps},
                {"batch_size", t.batch_size},
                {"seed", t.seed},
                {"task_mix", mix}};
}

SamplerConfig parse_sampler(const json& j, const std::string& path) {
    SamplerConfig s;
    if (!j.is_object()) field_error(path, "expected an object");
    std::string method = to_string(s.method);
    read_string(j, path, "method", method);
    try {
        s.method = sampler_method_from_string(method);
    } catch (const ConfigError& e) {
        field_error(path + ".method", e.what());
    }
    read_number(j, path, "steps", s.steps);
    read_number(j, path, "rtol", s.rtol);
    read_number(j, path, "atol", s.atol);
    read_number(j, path, "cfg_scale", s.cfg_scale);
    read_number(j, path, "seed", s.seed);
    return s;
}

json sampler_to_json(const SamplerConfig& s) {
    return json{{"method", to_string(s.method)}, {"steps", s.steps},   {"rtol", s.rtol},
                {"atol", s.atol},                {"cfg_scale", s.cfg_scale},
                {"seed", s.seed}};
}

DataConfig parse_data(const json& j, const std::string& path) {
    DataConfig d;
    if (!j.is_object()) field_error(path, "expected an object");
    read_number(j, path, "pattern_seed", d.pattern_seed);
    read_number(j, path, "video_frames", d.synth.video_frames);
    read_number(j, path, "n_classes", d.synth.n_classes);
    read_number(j, path, "vocab", d.synth.vocab);
    read_number(j, path, "speakers", d.synth.speakers);
    read_number(j, path, "background_sigma", d.synth.background_sigma);
    read_number(j, path, "video_noise_sigma", d.synth.video_noise_sigma);
    read_number(j, path, "video_smear", d.synth.video_smear);
    read_number(j, path, "event_window", d.synth.event_window);
    read_number(j, path, "event_decay", d.synth.event_decay);
    read_number(j, path, "min_token_frames", d.synth.min_token_frames);
    read_number(j, path, "max_token_frames", d.synth.max_token_frames);
    read_number(j, path, "events_min", d.ranges.events_min);
    read_number(j, path, "events_max", d.ranges.events_max);
    read_number(j, path, "tokens_min", d.ranges.tokens_min);
    read_number(j, path, "tokens_max", d.ranges.tokens_max);
    return d;
}

json data_to_json(const DataConfig& d) {
    return json{{"pattern_seed", d.pattern_seed},
                {"video_frames", d.synth.video_frames},
                {"n_classes", d.synth.n_classes},
                {"vocab", d.synth.vocab},
                {"speakers", d.synth.speakers},
                {"background_sigma", d.synth.background_sigma},
                {"video_noise_sigma", d.synth.video_noise_sigma},
                {"video_smear", d.synth.video_smear},
                {"event_window", d.synth.event_window},
                {"event_decay", d.synth.event_decay},
                {"min_token_frames", d.synth.min_token_frames},
                {"max_token_frames", d.synth.max_token_frames},
                {"events_min", d.ranges.events_min},
                {"events_max", d.ranges.events_max},
                {"tokens_min", d.ranges.tokens_min},
                {"tokens_max", d.ranges.tokens_max}};
}

json parse_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: not valid JSON");
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    return j;
}

} // namespace

bool filesystem_safe(const std::string& id) {
    if (id.empty()) return false;
    for (char ch : id)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.'))
            return false;
    return true;
}

void ExperimentConfig::validate() const {
    if (!filesystem_safe(experiment_id))
        throw ConfigError("experiment_id: must be non-empty and filesystem-safe");
    model.validate();
    train.validate();
    sampler.validate();
    data.synth.validate();
    data.ranges.validate();
    if (eval_every < 1) throw ConfigError("eval_every: must be >= 1");
    if (train.total_steps > 0 && eval_every > train.total_steps)
        throw ConfigError("eval_every: must not exceed train.total_steps");
    if (eval_set_size < 2) throw ConfigError("eval_set_size: must be >= 2");
    if (data.synth.vocab > model.phoneme_vocab)
        throw ConfigError("data.vocab: generator vocabulary exceeds the model embedding table");
    if (data.synth.speakers > model.speaker_count)
        throw ConfigError("data.speakers: generator speakers exceed the model speaker table");
}

ExperimentConfig config_from_json_text(const std::string& text) {
    json j = parse_text(text);
    ExperimentConfig c;
    read_string(j, "config", "experiment_id", c.experiment_id);
    if (const json* m = find(j, "model")) c.model = parse_model(*m, "model");
    if (const json* t = find(j, "train")) c.train = parse_train(*t, "train");
    if (const json* s = find(j, "sampler")) c.sampler = parse_sampler(*s, "sampler");
    if (const json* d = find(j, "data")) c.data = parse_data(*d, "data");
    read_number(j, "config", "eval_every", c.eval_every);
    read_number(j, "config", "eval_set_size", c.eval_set_size);
    read_number(j, "config", "nominal_epoch_samples", c.nominal_epoch_samples);
    read_string(j, "config", "init_checkpoint", c.init_checkpoint);
    c.sync_condition_dims();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
    json j{{"experiment_id", cfg.experiment_id},
           {"model", model_to_json(cfg.model)},
           {"train", train_to_json(cfg.train)},
           {"sampler", sampler_to_json(cfg.sampler)},
           {"data", data_to_json(cfg.data)},
           {"eval_every", cfg.eval_every},
           {"eval_set_size", cfg.eval_set_size},
           {"nominal_epoch_samples", cfg.nominal_epoch_samples}};
    if (!cfg.init_checkpoint.empty()) j["init_checkpoint"] = cfg.init_checkpoint;
    return j.dump(2) + "\n";
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << config_to_json_text(cfg);
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return config_to_json_text(a) == config_to_json_text(b) && a.output_dir == b.output_dir;
}

DataSpec dataspec_from_json_text(const std::string& text) {
    json j = parse_text(text);
    DataSpec s;
    std::string task = to_string(s.task);
    read_string(j, "dataspec", "task", task);
    try {
        s.task = task_from_string(task);
    } catch (const ConfigError& e) {
        field_error("dataspec.task", e.what());
    }
    read_number(j, "dataspec", "count", s.count);
    read_number(j, "dataspec", "seed", s.seed);
    read_number(j, "dataspec", "latent_len", s.latent_len);
    read_number(j, "dataspec", "latent_dim", s.latent_dim);
    read_number(j, "dataspec", "video_dim", s.video_dim);
    if (const json* d = find(j, "data")) s.data = parse_data(*d, "data");
    s.data.synth.latent_len = s.latent_len;
    s.data.synth.latent_dim = s.latent_dim;
    s.data.synth.video_dim = s.video_dim;
    if (s.count < 2) field_error("dataspec.count", "must be >= 2");
    s.data.synth.validate();
    s.data.ranges.validate();
    return s;
}

DataSpec load_dataspec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("dataspec: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return dataspec_from_json_text(ss.str());
}

} // namespace flowsynth::harness
