#pragma once

#include <string>
#include <vector>

#include "flowsynth/harness/config.hpp"
#include "flowsynth/synthdata.hpp"

// Eval-set persistence: one binary tensor file per sample (checkpoint tensor
// container) plus a JSON manifest holding the scalar ground truth, the seeds
// and the pattern-dictionary seed.

namespace flowsynth::harness {

struct EvalSet {
    Task task = Task::V2S;
    std::uint64_t seed = 0;
    DataConfig data;
    std::vector<SyntheticSample<float>> samples;
};

EvalSet generate_eval_set(Task task, int count, std::uint64_t seed, const DataConfig& data);

void save_eval_set(const EvalSet& set, const std::string& dir);
EvalSet load_eval_set(const std::string& dir);

} // namespace flowsynth::harness
