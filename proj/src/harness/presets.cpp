#include "flowsynth/harness/presets.hpp"

#include <filesystem>

#include "flowsynth/harness/evalset.hpp"
#include "flowsynth/harness/experiment.hpp"

namespace flowsynth::harness {

namespace fs = std::filesystem;

std::vector<std::string> preset_names() {
    return {"variants4", "mix3", "speech2", "cfg_sweep", "mixgen"};
}

ExperimentConfig preset_base_config(std::uint64_t seed, const std::string& output_dir) {
    ExperimentConfig c;
    c.experiment_id = "run";
    c.output_dir = output_dir;

    c.model.variant = Variant::CrossV;
    c.model.depth = 2;
    c.model.d_model = 64;
    c.model.heads = 4;
    c.model.latent_len = 48;
    c.model.latent_dim = 8;
    c.model.video_dim = 16;
    c.model.phoneme_dim = 8;
    c.model.phoneme_vocab = 8;
    c.model.speaker_count = 4;

    c.train.lr = 1e-3;
    c.train.warmup_steps = 50;
    c.train.total_steps = 800;
    c.train.batch_size = 8;
    c.train.seed = seed;
    c.train.task_mix = {1.0, 1.0, 0.0, 0.0};

    c.sampler.method = SamplerMethod::euler;
    c.sampler.steps = 24;
    c.sampler.cfg_scale = 2.0;

    c.data.pattern_seed = 7;
    c.data.synth.video_frames = 48;
    c.data.synth.n_classes = 3;
    c.data.synth.vocab = 6;
    c.data.synth.speakers = 4;
    c.data.synth.event_window = 6;
    c.data.synth.event_decay = 0.6;
    // heavy ambient variance on the video stream: the semantic cue is real
    // but temporally weak, like interpolated low-rate frame features
    c.data.synth.video_noise_sigma = 1.0;
    c.data.synth.video_smear = 3;
    c.data.ranges = {1, 3, 3, 6};

    c.eval_every = 100;
    c.eval_set_size = 32;
    c.sync_condition_dims();
    return c;
}

std::vector<ExperimentConfig> make_preset(const std::string& name, std::uint64_t seed,
                                          const std::string& output_dir) {
    std::vector<ExperimentConfig> configs;
    const ExperimentConfig base = preset_base_config(seed, output_dir);

    if (name == "variants4") {
        for (Variant v :
             {Variant::CrossV, Variant::CrossVS, Variant::ConcatV, Variant::ConcatVS}) {
            ExperimentConfig c = base;
            c.model.variant = v;
            c.experiment_id = std::string("variants4-") + to_string(v);
            configs.push_back(c);
        }
    } else if (name == "mix3") {
        const std::vector<std::pair<std::string, TaskMix>> settings{
            {"mix3-v2s_only", {1.0, 0.0, 0.0, 0.0}},
            {"mix3-v2s_vtts", {1.0, 1.0, 0.0, 0.0}},
            {"mix3-v2s_tts", {1.0, 0.0, 1.0, 0.0}}};
        for (const auto& [id, mix] : settings) {
            ExperimentConfig c = base;
            c.experiment_id = id;
            c.train.task_mix = mix;
            c.sampler.cfg_scale = 3.0; // sound-generation default guidance
            configs.push_back(c);
        }
    } else if (name == "speech2") {
        const std::vector<std::pair<std::string, TaskMix>> settings{
            {"speech2-vtts_only", {0.0, 1.0, 0.0, 0.0}},
            {"speech2-vtts_v2s", {1.0, 1.0, 0.0, 0.0}}};
        for (const auto& [id, mix] : settings) {
            ExperimentConfig c = base;
            c.experiment_id = id;
            c.train.task_mix = mix;
            c.sampler.cfg_scale = 1.5; // speech-generation default guidance
            configs.push_back(c);
        }
    } else if (name == "cfg_sweep") {
        ExperimentConfig c = base;
        c.experiment_id = "cfg_sweep-joint";
        c.train.task_mix = {1.0, 0.0, 1.0, 0.0};
        configs.push_back(c);
    } else if (name == "mixgen") {
        ExperimentConfig warm = base;
        warm.experiment_id = "mixgen-base";
        warm.train.task_mix = {1.0, 1.0, 0.0, 0.0};
        configs.push_back(warm);

        ExperimentConfig cont = base;
        cont.experiment_id = "mixgen-mix";
        cont.train.task_mix = {0.25, 0.25, 0.0, 0.5};
        cont.train.total_steps = 400;
        cont.train.seed = seed + 1;
        cont.init_checkpoint = artifact_paths(warm).final_checkpoint;
        configs.push_back(cont);
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    for (auto& c : configs) c.sync_condition_dims();
    return configs;
}

void run_preset(const std::string& name, std::uint64_t seed, const std::string& output_dir) {
    const auto configs = make_preset(name, seed, output_dir);
    std::vector<RunArtifacts> artifacts;
    for (const auto& cfg : configs) artifacts.push_back(run_experiment(cfg));

    if (name == "cfg_sweep") {
        // sweep the trained joint model over the guidance scales of the study
        EvalSet set = generate_eval_set(Task::V2S, configs[0].eval_set_size,
                                        Rng(seed).fork(100).seed(), configs[0].data);
        const std::string set_dir = (fs::path(output_dir) / "cfg_sweep-evalset").string();
        save_eval_set(set, set_dir);
        run_cfg_sweep(artifacts[0].final_checkpoint, {1.0, 1.5, 2.0, 3.0, 4.0}, set_dir,
                      (fs::path(output_dir) / "cfg_sweep-results").string());
    }
}

} // namespace flowsynth::harness
