// Command-line front end: config-driven training runs, guidance-scale
// sweeps, checkpoint evaluation, CSV-to-SVG reporting and synthetic data
// generation. Exit codes: 0 success, 2 invalid config, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowsynth/harness/config.hpp"
#include "flowsynth/harness/evalset.hpp"
#include "flowsynth/harness/experiment.hpp"
#include "flowsynth/harness/presets.hpp"
#include "flowsynth/harness/report.hpp"
#include "flowsynth/kernels/kernels.hpp"

namespace fs = std::filesystem;
using namespace flowsynth;
using namespace flowsynth::harness;

namespace {

void print_report(const MetricsReport& r) {
    std::printf("task=%s step=%ld cfg_scale=%s toy_fad=%.6f onset_acc=%.4f ter=%.4f "
                "adherence=%.4f failures=%d\n",
                r.task.c_str(), r.step, format_value(r.cfg_scale).c_str(), r.toy_fad, r.onset_acc,
                r.token_error_rate, r.cond_adherence, r.failures);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowsynth: conditional flow-matching generator over synthetic "
                 "audio-latent sequences"};
    app.require_subcommand(1);

    std::string output_dir;
    std::string config_path, preset_name;
    std::uint64_t preset_seed = 1;
    auto* train = app.add_subcommand("train", "train a model from a JSON config or a preset");
    train->add_option("config", config_path, "experiment config (JSON)");
    train->add_option("--preset", preset_name, "preset name: variants4|mix3|speech2|cfg_sweep|mixgen");
    train->add_option("--seed", preset_seed, "seed for preset runs");
    train->add_option("--output-dir", output_dir, "artifact directory")->required();

    std::string ckpt_path, evalset_dir, scales_arg = "1,1.5,2,3,4";
    auto* sweep = app.add_subcommand("sweep", "evaluate a checkpoint under several cfg scales");
    sweep->add_option("checkpoint", ckpt_path, "model checkpoint")->required();
    sweep->add_option("evalset", evalset_dir, "eval-set directory")->required();
    sweep->add_option("--scales", scales_arg, "comma-separated guidance scales");
    sweep->add_option("--output-dir", output_dir, "artifact directory")->required();

    double eval_scale = 1.0;
    std::string eval_method = "dopri5";
    int eval_steps = 32;
    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a stored eval set");
    evalc->add_option("checkpoint", ckpt_path, "model checkpoint")->required();
    evalc->add_option("evalset", evalset_dir, "eval-set directory")->required();
    evalc->add_option("--cfg-scale", eval_scale, "guidance scale");
    evalc->add_option("--method", eval_method, "euler|midpoint|rk4|dopri5");
    evalc->add_option("--steps", eval_steps, "steps for fixed-step methods");
    evalc->add_option("--output-dir", output_dir, "artifact directory")->required();

    std::vector<std::string> csv_paths;
    std::string svg_name = "curves.svg";
    auto* report = app.add_subcommand("report", "render metric curves from CSV files");
    report->add_option("csv", csv_paths, "metrics.csv files")->required();
    report->add_option("--name", svg_name, "output SVG filename");
    report->add_option("--output-dir", output_dir, "artifact directory")->required();

    std::string dataspec_path, set_name = "evalset";
    auto* gendata = app.add_subcommand("gen-data", "generate a synthetic eval set");
    gendata->add_option("spec", dataspec_path, "data spec (JSON)")->required();
    gendata->add_option("--name", set_name, "eval-set directory name");
    gendata->add_option("--output-dir", output_dir, "artifact directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            if (!preset_name.empty()) {
                run_preset(preset_name, preset_seed, output_dir);
            } else if (!config_path.empty()) {
                ExperimentConfig cfg = load_config(config_path);
                cfg.output_dir = output_dir;
                RunArtifacts art = run_experiment(cfg);
                std::printf("run complete: %s\n", art.run_dir.c_str());
            } else {
                std::fprintf(stderr, "train: provide a config path or --preset\n");
                return 2;
            }
        } else if (sweep->parsed()) {
            std::vector<double> scales;
            std::stringstream ss(scales_arg);
            std::string tok;
            while (std::getline(ss, tok, ',')) scales.push_back(std::stod(tok));
            auto rows = run_cfg_sweep(ckpt_path, scales, evalset_dir, output_dir);
            for (const auto& row : rows) print_report(row.report);
        } else if (evalc->parsed()) {
            SamplerConfig sampler;
            sampler.method = sampler_method_from_string(eval_method);
            sampler.steps = eval_steps;
            sampler.cfg_scale = eval_scale;
            print_report(run_eval(ckpt_path, evalset_dir, sampler, output_dir));
        } else if (report->parsed()) {
            std::vector<CsvRow> rows;
            for (const auto& path : csv_paths) {
                auto r = load_csv(path);
                rows.insert(rows.end(), r.begin(), r.end());
            }
            fs::create_directories(output_dir);
            const std::string out = (fs::path(output_dir) / svg_name).string();
            write_text_file(out, render_curves_svg(rows));
            std::printf("wrote %s\n", out.c_str());
        } else if (gendata->parsed()) {
            DataSpec spec = load_dataspec(dataspec_path);
            EvalSet set = generate_eval_set(spec.task, spec.count, spec.seed, spec.data);
            const std::string dir = (fs::path(output_dir) / set_name).string();
            save_eval_set(set, dir);
            std::printf("wrote %zu samples to %s\n", set.samples.size(), dir.c_str());
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
