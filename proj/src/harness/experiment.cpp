#include "flowsynth/harness/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "flowsynth/harness/report.hpp"

namespace flowsynth::harness {

namespace fs = std::filesystem;

namespace {

std::vector<Task> active_tasks(const TaskMix& mix) {
    std::vector<Task> tasks;
    if (mix.v2s > 0) tasks.push_back(Task::V2S);
    if (mix.visual_tts > 0) tasks.push_back(Task::VisualTTS);
    if (mix.tts > 0) tasks.push_back(Task::TTS);
    if (mix.mix > 0) tasks.push_back(Task::MIX);
    return tasks;
}

// Primary per-task quality score used to pick the best checkpoint: the
// distribution distance for sound-bearing tasks, the token error rate for
// speech-only ones. Lower is better.
double primary_score(Task task, const MetricsReport& r) {
    if (task == Task::VisualTTS || task == Task::TTS) return r.token_error_rate;
    return r.toy_fad;
}

void append_metric_rows(std::ofstream& csv, long step, const std::string& id,
                        const std::string& task, const MetricsReport& r) {
    csv << csv_line({step, id, task, "toy_fad", r.toy_fad}) << '\n';
    csv << csv_line({step, id, task, "onset_acc", r.onset_acc}) << '\n';
    csv << csv_line({step, id, task, "token_error_rate", r.token_error_rate}) << '\n';
    csv << csv_line({step, id, task, "cond_adherence", r.cond_adherence}) << '\n';
    csv << csv_line({step, id, task, "eval_failures", static_cast<double>(r.failures)}) << '\n';
    csv.flush();
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace

RunArtifacts artifact_paths(const ExperimentConfig& cfg) {
    const fs::path run_dir = fs::path(cfg.output_dir) / cfg.experiment_id;
    return RunArtifacts{run_dir.string(),
                        (run_dir / "metrics.csv").string(),
                        (run_dir / "manifest.json").string(),
                        (run_dir / "final.ckpt").string(),
                        (run_dir / "best.ckpt").string(),
                        (run_dir / "curves.svg").string()};
}

RunArtifacts run_experiment(const ExperimentConfig& raw_cfg) {
    ExperimentConfig cfg = raw_cfg;
    cfg.sync_condition_dims();
    cfg.validate();
    if (cfg.output_dir.empty()) throw ConfigError("output_dir: must be set");
    const RunArtifacts art = artifact_paths(cfg);
    fs::create_directories(art.run_dir);
    save_config(cfg, art.manifest_json);

    const auto dict = PatternDictionary<float>::make(cfg.data.pattern_seed, cfg.data.synth);
    Rng master(cfg.train.seed);

    VelocityModel<float> model(cfg.model, master.fork(1));
    if (!cfg.init_checkpoint.empty())
        load_parameters(model, load_checkpoint(cfg.init_checkpoint));
    AdamW<float> opt(model.named_parameters());

    const std::vector<Task> tasks = active_tasks(cfg.train.task_mix);
    std::map<Task, EvalSet> eval_sets;
    for (std::size_t i = 0; i < tasks.size(); ++i)
        eval_sets[tasks[i]] = generate_eval_set(tasks[i], cfg.eval_set_size,
                                                master.fork(100 + i).seed(), cfg.data);
    const std::uint64_t eval_noise_seed = master.fork(200).seed();

    std::ofstream csv(art.metrics_csv, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + art.metrics_csv);
    csv << kCsvHeader << '\n';
    csv.flush();

    Rng batch_rng = master.fork(2);
    Rng train_rng = master.fork(3);
    std::uint64_t sample_counter = 0;
    const std::string mix_id = cfg.train.task_mix.id();

    double best_score = std::numeric_limits<double>::infinity();
    std::vector<CheckpointTensor> best_params = parameters_to_checkpoint(model);

    auto evaluate_all = [&](long step) {
        double score = 0;
        for (Task task : tasks) {
            MetricsReport r = evaluate(model, cfg.sampler, eval_sets[task].samples, task, dict,
                                       eval_noise_seed);
            r.step = step;
            r.task_mix = mix_id;
            append_metric_rows(csv, step, cfg.experiment_id, to_string(task), r);
            score += primary_score(task, r);
        }
        score /= static_cast<double>(tasks.size());
        if (score < best_score) {
            best_score = score;
            best_params = parameters_to_checkpoint(model);
            save_checkpoint(art.best_checkpoint, best_params);
        }
    };

    for (long step = 0; step < cfg.train.total_steps; ++step) {
        std::vector<SyntheticSample<float>> batch;
        batch.reserve(cfg.train.batch_size);
        for (int b = 0; b < cfg.train.batch_size; ++b) {
            const Task task = cfg.train.task_mix.sample(batch_rng);
            batch.push_back(draw_task_sample(task, batch_rng.fork(++sample_counter),
                                             cfg.data.synth, dict, cfg.data.ranges));
        }
        float loss = 0;
        try {
            loss = train_step(model, batch, opt, cfg.train, train_rng);
        } catch (const NumericError& e) {
            csv.flush();
            save_checkpoint(art.final_checkpoint, parameters_to_checkpoint(model));
            throw NumericError(std::string(e.what()) + " (training step " + std::to_string(step) +
                               ")");
        }
        csv << csv_line({step, cfg.experiment_id, mix_id, "loss", loss}) << '\n';
        csv.flush();
        if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.train.total_steps)
            evaluate_all(step + 1);
    }

    save_checkpoint(art.final_checkpoint, parameters_to_checkpoint(model));
    if (!fs::exists(art.best_checkpoint)) save_checkpoint(art.best_checkpoint, best_params);
    csv.close();

    write_text_file(art.curves_svg, render_curves_svg(load_csv(art.metrics_csv)));
    return art;
}

VelocityModel<float> load_model_from_run(const std::string& checkpoint_path,
                                         ExperimentConfig* out_cfg) {
    const fs::path manifest = fs::path(checkpoint_path).parent_path() / "manifest.json";
    if (!fs::exists(manifest))
        throw ConfigError("no manifest.json next to checkpoint " + checkpoint_path);
    ExperimentConfig cfg = load_config(manifest.string());
    VelocityModel<float> model(cfg.model, Rng(0));
    load_parameters(model, load_checkpoint(checkpoint_path));
    if (out_cfg) *out_cfg = cfg;
    return model;
}

std::uint64_t eval_noise_hash(const EvalSet& set, const ModelConfig& model_cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        Rng noise_rng(splitmix64(set.seed ^ splitmix64(i + 1)));
        TensorF x0 = TensorF::randn({model_cfg.latent_len, model_cfg.latent_dim}, noise_rng);
        h = fnv1a(h, x0.data().data(), x0.size() * sizeof(float));
    }
    return h & ((1ULL << 52) - 1); // fits a double exactly for the CSV
}

std::vector<SweepRow> run_cfg_sweep(const std::string& checkpoint_path,
                                    const std::vector<double>& scales,
                                    const std::string& eval_set_dir,
                                    const std::string& output_dir) {
    if (scales.empty()) throw ConfigError("scales: must be non-empty");
    ExperimentConfig cfg;
    VelocityModel<float> model = load_model_from_run(checkpoint_path, &cfg);
    EvalSet set = load_eval_set(eval_set_dir);
    const auto dict = PatternDictionary<float>::make(set.data.pattern_seed, set.data.synth);

    fs::create_directories(output_dir);
    const std::string csv_path = (fs::path(output_dir) / "sweep.csv").string();
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + csv_path);
    csv << kCsvHeader << '\n';

    const std::uint64_t hash = eval_noise_hash(set, cfg.model);
    std::vector<SweepRow> rows;
    for (double scale : scales) {
        SamplerConfig sampler = cfg.sampler;
        sampler.cfg_scale = scale;
        MetricsReport r = evaluate(model, sampler, set.samples, set.task, dict, set.seed);
        r.step = cfg.train.total_steps;
        r.task_mix = cfg.train.task_mix.id();
        const std::string id = cfg.experiment_id + "-g" + format_value(scale);
        append_metric_rows(csv, r.step, id, to_string(set.task), r);
        csv << csv_line({r.step, id, to_string(set.task), "cfg_scale", scale}) << '\n';
        csv << csv_line({r.step, id, to_string(set.task), "x0_hash", static_cast<double>(hash)})
            << '\n';
        csv.flush();
        rows.push_back(SweepRow{scale, r, hash});
    }
    return rows;
}

MetricsReport run_eval(const std::string& checkpoint_path, const std::string& eval_set_dir,
                       SamplerConfig sampler, const std::string& output_dir) {
    ExperimentConfig cfg;
    VelocityModel<float> model = load_model_from_run(checkpoint_path, &cfg);
    EvalSet set = load_eval_set(eval_set_dir);
    const auto dict = PatternDictionary<float>::make(set.data.pattern_seed, set.data.synth);
    MetricsReport r = evaluate(model, sampler, set.samples, set.task, dict, set.seed);
    r.step = cfg.train.total_steps;
    r.task_mix = cfg.train.task_mix.id();

    fs::create_directories(output_dir);
    const std::string csv_path = (fs::path(output_dir) / "eval.csv").string();
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + csv_path);
    csv << kCsvHeader << '\n';
    append_metric_rows(csv, r.step, cfg.experiment_id, to_string(set.task), r);
    return r;
}

} // namespace flowsynth::harness
