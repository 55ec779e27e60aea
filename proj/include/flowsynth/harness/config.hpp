#pragma once

#include <cstdint>
#include <string>

#include "flowsynth/flowmatch.hpp"
#include "flowsynth/model_config.hpp"
#include "flowsynth/sampler.hpp"
#include "flowsynth/synthdata.hpp"

// Experiment configuration and its JSON round-trip. Parse errors carry the
// offending field path.

namespace flowsynth::harness {

struct DataConfig {
    SynthConfig synth; // latent/video dims are overwritten from the model config
    GenRanges ranges;
    std::uint64_t pattern_seed = 7;
};

struct ExperimentConfig {
    std::string experiment_id;
    ModelConfig model;
    TrainConfig train;
    SamplerConfig sampler;
    DataConfig data;
    long eval_every = 100;
    int eval_set_size = 32;
    long nominal_epoch_samples = 512; // steps-to-epochs bookkeeping only
    std::string init_checkpoint;      // optional warm start
    std::string output_dir;           // set from the CLI, not from config files

    // Latent and condition dimensions live on the model; the generator must
    // agree with them.
    void sync_condition_dims() {
        data.synth.latent_len = model.latent_len;
        data.synth.latent_dim = model.latent_dim;
        data.synth.video_dim = model.video_dim;
    }

    void validate() const;
};

bool filesystem_safe(const std::string& id);

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::string& path);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// gen-data request: which task to synthesize, how many samples, and the
// generator settings.
struct DataSpec {
    Task task = Task::V2S;
    int count = 64;
    std::uint64_t seed = 1;
    DataConfig data;
    std::size_t latent_len = 64;
    std::size_t latent_dim = 8;
    std::size_t video_dim = 16;
};

DataSpec dataspec_from_json_text(const std::string& text);
DataSpec load_dataspec(const std::string& path);

} // namespace flowsynth::harness
