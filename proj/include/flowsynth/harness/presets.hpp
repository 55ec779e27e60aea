#pragma once

#include <string>
#include <vector>

#include "flowsynth/harness/config.hpp"

// Shipped experiment presets mirroring the condition-mechanism and
// joint-training studies at desk scale:
//   variants4 - four condition-aggregation variants, joint sound+speech data
//   mix3      - V2S only / +VisualTTS / +TTS data settings
//   speech2   - VisualTTS only / +V2S data settings
//   cfg_sweep - joint model followed by a guidance-scale sweep
//   mixgen    - continued training on sound-speech mixtures

namespace flowsynth::harness {

std::vector<std::string> preset_names();

// The experiment configs a preset trains, in execution order. Later phases
// may reference earlier artifacts via init_checkpoint.
std::vector<ExperimentConfig> make_preset(const std::string& name, std::uint64_t seed,
                                          const std::string& output_dir);

// Baseline toy experiment config shared by the presets.
ExperimentConfig preset_base_config(std::uint64_t seed, const std::string& output_dir);

// Trains every config in the preset (and for cfg_sweep runs the sweep).
void run_preset(const std::string& name, std::uint64_t seed, const std::string& output_dir);

} // namespace flowsynth::harness
