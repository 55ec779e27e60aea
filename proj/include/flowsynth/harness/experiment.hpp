#pragma once

#include <string>
#include <vector>

#include "flowsynth/harness/config.hpp"
#include "flowsynth/harness/evalset.hpp"
#include "flowsynth/metrics.hpp"
#include "flowsynth/nn.hpp"

// Config-driven experiment runner: trains, periodically evaluates held-out
// sets per active task, and leaves metrics.csv, checkpoints, curves.svg and
// a manifest in the run directory. A crashed run leaves a parseable CSV
// prefix because every row is flushed as written.

namespace flowsynth::harness {

struct RunArtifacts {
    std::string run_dir;
    std::string metrics_csv;
    std::string manifest_json;
    std::string final_checkpoint;
    std::string best_checkpoint;
    std::string curves_svg;
};

RunArtifacts artifact_paths(const ExperimentConfig& cfg);

RunArtifacts run_experiment(const ExperimentConfig& cfg);

// Rebuilds the model recorded in the manifest.json next to a checkpoint.
VelocityModel<float> load_model_from_run(const std::string& checkpoint_path,
                                         ExperimentConfig* out_cfg = nullptr);

struct SweepRow {
    double scale = 1.0;
    MetricsReport report;
    std::uint64_t x0_hash = 0; // identical across scales: noise is paired per item
};

// One evaluation per guidance scale on a fixed eval set with fixed seeds;
// writes sweep.csv under output_dir and returns the rows.
std::vector<SweepRow> run_cfg_sweep(const std::string& checkpoint_path,
                                    const std::vector<double>& scales,
                                    const std::string& eval_set_dir,
                                    const std::string& output_dir);

// Single evaluation of a checkpoint on a stored eval set.
MetricsReport run_eval(const std::string& checkpoint_path, const std::string& eval_set_dir,
                       SamplerConfig sampler, const std::string& output_dir);

std::uint64_t eval_noise_hash(const EvalSet& set, const ModelConfig& model_cfg);

} // namespace flowsynth::harness
