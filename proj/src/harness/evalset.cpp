#include "flowsynth/harness/evalset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowsynth/checkpoint.hpp"

namespace flowsynth::harness {

namespace fs = std::filesystem;
using nlohmann::json;

EvalSet generate_eval_set(Task task, int count, std::uint64_t seed, const DataConfig& data) {
    EvalSet set;
    set.task = task;
    set.seed = seed;
    set.data = data;
    auto dict = PatternDictionary<float>::make(data.pattern_seed, data.synth);
    Rng base(seed);
    set.samples.reserve(count);
    for (int i = 0; i < count; ++i)
        set.samples.push_back(
            draw_task_sample(task, base.fork(static_cast<std::uint64_t>(i)), data.synth, dict,
                             data.ranges));
    return set;
}

namespace {

std::string sample_filename(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05zu.bin", index);
    return buf;
}

json data_config_to_json(const DataConfig& d) {
    return json{{"pattern_seed", d.pattern_seed},
                {"latent_len", d.synth.latent_len},
                {"latent_dim", d.synth.latent_dim},
                {"video_dim", d.synth.video_dim},
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

DataConfig data_config_from_json(const json& j) {
    DataConfig d;
    d.pattern_seed = j.at("pattern_seed").get<std::uint64_t>();
    d.synth.latent_len = j.at("latent_len").get<std::size_t>();
    d.synth.latent_dim = j.at("latent_dim").get<std::size_t>();
    d.synth.video_dim = j.at("video_dim").get<std::size_t>();
    d.synth.video_frames = j.at("video_frames").get<std::size_t>();
    d.synth.n_classes = j.at("n_classes").get<std::size_t>();
    d.synth.vocab = j.at("vocab").get<std::size_t>();
    d.synth.speakers = j.at("speakers").get<std::size_t>();
    d.synth.background_sigma = j.at("background_sigma").get<double>();
    d.synth.video_noise_sigma = j.at("video_noise_sigma").get<double>();
    d.synth.video_smear = j.at("video_smear").get<std::size_t>();
    d.synth.event_window = j.at("event_window").get<std::size_t>();
    d.synth.event_decay = j.at("event_decay").get<double>();
    d.synth.min_token_frames = j.at("min_token_frames").get<int>();
    d.synth.max_token_frames = j.at("max_token_frames").get<int>();
    d.ranges.events_min = j.at("events_min").get<int>();
    d.ranges.events_max = j.at("events_max").get<int>();
    d.ranges.tokens_min = j.at("tokens_min").get<int>();
    d.ranges.tokens_max = j.at("tokens_max").get<int>();
    return d;
}

} // namespace

void save_eval_set(const EvalSet& set, const std::string& dir) {
    fs::create_directories(dir);
    json manifest{{"task", to_string(set.task)},
                  {"seed", set.seed},
                  {"count", set.samples.size()},
                  {"data", data_config_to_json(set.data)}};
    json samples = json::array();
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        const auto& s = set.samples[i];
        json entry{{"file", sample_filename(i)},
                   {"task", to_string(s.task)},
                   {"rng_seed", s.rng_seed}};
        if (s.speaker_id.has_value()) entry["speaker_id"] = *s.speaker_id;
        if (s.track.has_value()) {
            entry["tokens"] = s.track->tokens;
            entry["durations"] = s.track->durations;
            entry["start_frame"] = s.track->start_frame;
        }
        json events = json::array();
        for (const auto& ev : s.events) events.push_back(json{{"frame", ev.frame}, {"cls", ev.cls}});
        entry["events"] = events;
        samples.push_back(std::move(entry));

        std::vector<CheckpointTensor> tensors;
        tensors.push_back(to_checkpoint("video_raw", s.video_raw));
        tensors.push_back(to_checkpoint("latent", s.latent));
        save_checkpoint((fs::path(dir) / sample_filename(i)).string(), tensors);
    }
    manifest["samples"] = std::move(samples);
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!f) throw IoError("cannot write eval-set manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

EvalSet load_eval_set(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot open eval-set manifest in " + dir);
    std::stringstream ss;
    ss << f.rdbuf();
    json manifest = json::parse(ss.str(), nullptr, false);
    if (manifest.is_discarded()) throw IoError("eval-set manifest is not valid JSON");

    EvalSet set;
    set.task = task_from_string(manifest.at("task").get<std::string>());
    set.seed = manifest.at("seed").get<std::uint64_t>();
    set.data = data_config_from_json(manifest.at("data"));
    for (const auto& entry : manifest.at("samples")) {
        SyntheticSample<float> s;
        s.task = task_from_string(entry.at("task").get<std::string>());
        s.rng_seed = entry.at("rng_seed").get<std::uint64_t>();
        if (entry.contains("speaker_id")) s.speaker_id = entry.at("speaker_id").get<int>();
        if (entry.contains("tokens")) {
            PhonemeTrack track;
            track.tokens = entry.at("tokens").get<std::vector<int>>();
            track.durations = entry.at("durations").get<std::vector<int>>();
            track.start_frame = entry.value("start_frame", 0);
            s.track = std::move(track);
        }
        for (const auto& ev : entry.at("events"))
            s.events.push_back({ev.at("frame").get<int>(), ev.at("cls").get<int>()});
        auto tensors =
            load_checkpoint((fs::path(dir) / entry.at("file").get<std::string>()).string());
        for (const auto& t : tensors) {
            if (t.name == "video_raw")
                s.video_raw = tensor_from_checkpoint<float>(t);
            else if (t.name == "latent")
                s.latent = tensor_from_checkpoint<float>(t);
        }
        if (!s.video_raw.defined() || !s.latent.defined())
            throw IoError("eval-set sample file is missing tensors");
        set.samples.push_back(std::move(s));
    }
    return set;
}

} // namespace flowsynth::harness
