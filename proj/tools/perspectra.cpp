#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "perspectra/runner.hpp"

namespace {

nlohmann::json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    bool force = false;
    std::string out;
    std::vector<std::string> formats;
    std::size_t jobs = 1;
    bool quiet = false;

    perspectra::RunOptions to_run_options() const {
        perspectra::RunOptions opt;
        if (!seeds.empty()) opt.seeds = seeds;
        opt.force = force;
        if (!out.empty()) opt.out_override = out;
        if (!formats.empty()) opt.formats = formats;
        opt.jobs = jobs;
        opt.quiet = quiet;
        return opt;
    }
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_seeds = true) {
    cmd->add_option("--config", o.config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    if (with_seeds)
        cmd->add_option("--seeds", o.seeds, "seed list overriding the config")->delimiter(',');
    cmd->add_flag("--force", o.force, "retrain even when checkpoints exist");
    cmd->add_option("--out", o.out, "output root (overrides PERSPECTRA_OUT and the config)");
    cmd->add_option("--format", o.formats, "aggregate formats")
        ->delimiter(',')
        ->check(CLI::IsMember({"json", "csv", "md"}));
    cmd->add_option("--jobs", o.jobs, "parallel seed jobs")->check(CLI::PositiveNumber);
    cmd->add_flag("--quiet", o.quiet, "suppress per-seed progress");
}

void print_aggregate(const perspectra::AggregateReport& agg) {
    std::cout << "annotator-average F1: " << perspectra::format_mean_std(agg.annotator_average)
              << "  (baseline " << perspectra::format_mean_std(agg.baseline_average)
              << ", predicted kappa " << perspectra::format_mean_std(agg.predicted_kappa, 3)
              << ", " << agg.seeds.size() << " run(s))\n";
}

int cmd_run(const CommonOpts& o) {
    perspectra::ExperimentConfig cfg = perspectra::load_config_file(o.config_path);
    perspectra::RunSummary s = perspectra::run_experiment(cfg, o.to_run_options());
    std::cout << "config " << s.config_hash << " -> " << s.root.string() << "\n";
    if (s.has_aggregate) print_aggregate(s.aggregate);
    if (std::size_t f = s.failed(); f > 0) {
        std::cerr << f << " of " << s.outcomes.size() << " seed(s) failed\n";
        return 1;
    }
    return 0;
}

int cmd_sweep(const CommonOpts& o, const std::string& sweep_path) {
    nlohmann::json base = parse_json_file(o.config_path);
    nlohmann::json spec = parse_json_file(sweep_path);
    perspectra::SweepSummary s = perspectra::run_sweep(base, spec, o.to_run_options());
    std::cout << "sweep: " << s.cells.size() << " cell(s) -> " << (s.root / "sweep").string()
              << "\n";
    for (const perspectra::SweepCell& c : s.cells)
        if (!c.aggregate.seeds.empty())
            std::cout << "  [" << c.label
                      << "] F1 " << perspectra::format_mean_std(c.aggregate.annotator_average)
                      << (c.ok ? "" : "  (" + c.error + ")") << "\n";
        else
            std::cout << "  [" << c.label << "] failed: " << c.error << "\n";
    return s.failed() == 0 ? 0 : 1;
}

int cmd_synth(const std::string& spec_path, std::uint64_t seed, const std::string& out_dir) {
    nlohmann::json j = spec_path.empty() ? nlohmann::json::object() : parse_json_file(spec_path);
    perspectra::SyntheticSpec spec = perspectra::synthetic_spec_from_json(j);
    perspectra::run_synth(spec, seed, out_dir);
    perspectra::Dataset d = perspectra::load_dataset(out_dir);
    std::cout << "wrote " << d.instances.size() << " instances, "
              << d.meta.annotators.size() << " annotators, " << d.meta.class_count
              << " classes -> " << out_dir << "\n";
    return 0;
}

int cmd_inspect(const std::string& ckpt, const std::string& dataset, const std::string& id) {
    std::cout << perspectra::inspect_instance(ckpt, dataset, id);
    return 0;
}

int cmd_report(const std::string& dir, std::vector<std::string> formats) {
    if (formats.empty()) formats = {"json", "csv", "md"};
    perspectra::AggregateReport agg = perspectra::regenerate_aggregate(dir, formats);
    print_aggregate(agg);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"continuum of multi-annotator text classifiers"};
    app.require_subcommand(1);

    CommonOpts run_o;
    CLI::App* run = app.add_subcommand("run", "train and evaluate one config over its seed list");
    add_common(run, run_o);

    CommonOpts sweep_o;
    std::string sweep_path;
    CLI::App* sweep = app.add_subcommand("sweep", "grid of configs merged into one table");
    add_common(sweep, sweep_o);
    sweep->add_option("--sweep", sweep_path, "sweep spec JSON with an \"axes\" object")
        ->required()
        ->check(CLI::ExistingFile);

    std::string synth_spec, synth_out;
    std::uint64_t synth_seed = 0;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset plus oracle");
    synth->add_option("--spec", synth_spec, "synthetic spec JSON (defaults when omitted)")
        ->check(CLI::ExistingFile);
    synth->add_option("--seed", synth_seed, "generation seed");
    synth->add_option("--out", synth_out, "dataset directory to write")->required();

    std::string ins_ckpt, ins_data, ins_id;
    CLI::App* inspect = app.add_subcommand("inspect", "per-annotator predictions for one instance");
    inspect->add_option("--checkpoint", ins_ckpt, "trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    inspect->add_option("--dataset", ins_data, "dataset directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    inspect->add_option("--id", ins_id, "instance id")->required();

    std::string report_dir;
    std::vector<std::string> report_formats;
    CLI::App* report = app.add_subcommand("report", "rebuild aggregate files from stored runs");
    report->add_option("--dir", report_dir, "out/<config-hash> directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    report->add_option("--format", report_formats, "aggregate formats")
        ->delimiter(',')
        ->check(CLI::IsMember({"json", "csv", "md"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_o);
        if (sweep->parsed()) return cmd_sweep(sweep_o, sweep_path);
        if (synth->parsed()) return cmd_synth(synth_spec, synth_seed, synth_out);
        if (inspect->parsed()) return cmd_inspect(ins_ckpt, ins_data, ins_id);
        if (report->parsed()) return cmd_report(report_dir, report_formats);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
