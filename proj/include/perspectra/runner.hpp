#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "perspectra/checkpoint.hpp"
#include "perspectra/config.hpp"
#include "perspectra/evaluation.hpp"
#include "perspectra/training.hpp"

namespace perspectra {

namespace fs = std::filesystem;

inline std::string effective_output_root(const ExperimentConfig& cfg,
                                         const std::optional<std::string>& cli_out) {
    if (cli_out) return *cli_out;
    if (const char* env = std::getenv("PERSPECTRA_OUT"); env && *env) return env;
    return cfg.output_dir;
}

inline Dataset acquire_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset_path) return load_dataset(*cfg.dataset_path);
    return generate_synthetic(*cfg.synthetic, cfg.synthetic_seed).dataset;
}

inline std::string task_label(const ExperimentConfig& cfg) {
    if (cfg.dataset_path) return fs::path(*cfg.dataset_path).filename().string();
    return "synthetic";
}

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

inline std::string loss_curve_csv(const RunRecord& rec) {
    std::string out = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < rec.epoch_losses.size(); ++e)
        out += concat(e, ",", rec.epoch_losses[e], "\n");
    return out;
}

inline nlohmann::ordered_json run_record_to_json(const RunRecord& r) {
    nlohmann::ordered_json j;
    j["seed"] = r.seed;
    j["config_hash"] = r.config_hash;
    j["epoch_losses"] = r.epoch_losses;
    j["checkpoint"] = r.checkpoint_path;
    j["wall_time_seconds"] = r.wall_time_seconds;
    if (std::isnan(r.final_encoder_distance)) j["final_encoder_distance"] = nullptr;
    else j["final_encoder_distance"] = r.final_encoder_distance;
    return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
    r.checkpoint_path = j.at("checkpoint").get<std::string>();
    r.wall_time_seconds = j.at("wall_time_seconds").get<double>();
    if (j.contains("final_encoder_distance") && !j["final_encoder_distance"].is_null())
        r.final_encoder_distance = j["final_encoder_distance"].get<double>();
    return r;
}

} // namespace detail

struct RunOptions {
    std::optional<std::vector<std::uint64_t>> seeds; // overrides config seed list
    bool force = false;                              // retrain even if checkpoints exist
    std::optional<std::string> out_override;
    std::optional<std::vector<std::string>> formats;
    std::size_t jobs = 1;
    bool quiet = false;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    bool trained = false; // false = reused an existing checkpoint
    std::string error;
    EvaluationReport report;
};

struct RunSummary {
    std::string config_hash;
    fs::path root;
    std::vector<SeedOutcome> outcomes;
    bool has_aggregate = false;
    AggregateReport aggregate;

    std::size_t failed() const {
        std::size_t n = 0;
        for (const SeedOutcome& o : outcomes)
            if (!o.ok) ++n;
        return n;
    }
};

namespace detail {

/// Train-or-reuse one seed, then evaluate it. Reports are always regenerated
/// from the checkpoint so evaluation code changes propagate on re-runs.
inline SeedOutcome run_one_seed(const ExperimentConfig& cfg, const Dataset& data,
                                const std::string& hash, const fs::path& root,
                                std::uint64_t seed, bool force, bool quiet) {
    SeedOutcome out;
    out.seed = seed;
    fs::path dir = root / std::to_string(seed);
    fs::create_directories(dir);
    fs::path ckpt_path = dir / "checkpoint.prsc";
    fs::path run_path = dir / "run.json";

    Model model;
    bool reuse = !force && fs::exists(ckpt_path) && fs::exists(run_path);
    if (reuse) {
        LoadedCheckpoint loaded = load_checkpoint_file(ckpt_path);
        if (loaded.meta.config_hash != hash)
            throw std::runtime_error(concat("checkpoint ", ckpt_path.string(),
                                            " belongs to config ", loaded.meta.config_hash,
                                            ", expected ", hash));
        Model expected = build_model(cfg.architecture, seed);
        validate_checkpoint_layout(loaded.params, expected.params);
        model = Model{cfg.architecture, std::move(loaded.params)};
        if (!quiet)
            std::cerr << "[" << hash << "/" << seed << "] reusing existing checkpoint\n";
    } else {
        TrainResult tr = train(cfg.architecture, data, cfg.training, seed);
        model = std::move(tr.model);
        RunRecord rec = std::move(tr.record);
        rec.config_hash = hash;
        rec.checkpoint_path = "checkpoint.prsc";
        CheckpointMeta meta;
        meta.config_hash = hash;
        meta.seed = seed;
        meta.epoch = rec.epoch_losses.size();
        meta.extra["architecture"] =
            detail::architecture_to_json<nlohmann::json>(cfg.architecture);
        save_checkpoint_file(ckpt_path, model.params, meta);
        write_text(dir / "loss.csv", loss_curve_csv(rec));
        write_text(run_path, run_record_to_json(rec).dump(2) + "\n");
        out.trained = true;
        if (!quiet)
            std::cerr << "[" << hash << "/" << seed << "] trained "
                      << rec.epoch_losses.size() << " epoch(s) in " << rec.wall_time_seconds
                      << "s\n";
    }

    out.report = two_step_score(model, data);
    out.report.seed = seed;
    out.report.config_hash = hash;
    write_text(dir / "report.json", report_to_json(out.report).dump(2) + "\n");
    out.ok = true;
    return out;
}

inline std::string aggregate_csv_row(const std::string& model, const std::string& task,
                                     const AggregateReport& agg) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n", model.c_str(),
                  task.c_str(), agg.annotator_average.mean, agg.annotator_average.std,
                  annotator_level_min(agg), annotator_level_max(agg), agg.predicted_kappa.mean,
                  agg.baseline_average.mean);
    return std::string("model,task,f1_mean,f1_std,annotator_min,annotator_max,kappa_mean,"
                       "baseline_mean\n") +
           buf;
}

inline std::string aggregate_markdown(const std::string& model, const std::string& task,
                                      const AggregateReport& agg,
                                      const std::vector<std::string>& annotators) {
    std::ostringstream md;
    md << "# " << model << " on " << task << "\n\n";
    md << "config `" << agg.config_hash << "`, " << agg.seeds.size() << " run(s)\n\n";
    md << "| metric | value |\n|---|---|\n";
    md << "| annotator-average F1 | " << format_mean_std(agg.annotator_average) << " |\n";
    md << "| lowest annotator F1 | " << format_mean_std(MeanStd{annotator_level_min(agg), 0})
       << " |\n";
    md << "| highest annotator F1 | " << format_mean_std(MeanStd{annotator_level_max(agg), 0})
       << " |\n";
    md << "| predicted kappa | " << format_mean_std(agg.predicted_kappa, 3) << " |\n";
    md << "| naive baseline F1 | " << format_mean_std(agg.baseline_average) << " |\n\n";
    md << "| annotator | F1 |\n|---|---|\n";
    for (std::size_t a = 0; a < agg.per_annotator.size(); ++a) {
        std::string name = a < annotators.size() ? annotators[a] : std::to_string(a);
        md << "| " << name << " | " << format_mean_std(agg.per_annotator[a]) << " |\n";
    }
    return md.str();
}

inline void write_aggregate_files(const fs::path& root, const std::string& model,
                                  const std::string& task, const AggregateReport& agg,
                                  const std::vector<std::string>& formats,
                                  const std::vector<std::string>& annotators) {
    for (const std::string& f : formats) {
        if (f == "json") {
            nlohmann::ordered_json j = aggregate_to_json(agg);
            j["model"] = model;
            j["task"] = task;
            write_text(root / "aggregate.json", j.dump(2) + "\n");
        } else if (f == "csv") {
            write_text(root / "aggregate.csv", aggregate_csv_row(model, task, agg));
        } else if (f == "md") {
            write_text(root / "aggregate.md", aggregate_markdown(model, task, agg, annotators));
        }
    }
}

} // namespace detail

/// The full protocol for one experiment: one training+evaluation run per seed
/// in listed order, per-seed failures isolated, then an across-seed aggregate.
/// Completed seeds are skipped unless force is set; their reports are
/// regenerated from the stored checkpoints.
inline RunSummary run_experiment(ExperimentConfig cfg, const RunOptions& opt) {
    cfg.validate();
    Dataset data = acquire_dataset(cfg);
    cfg.resolve(data.meta);
    RunSummary summary;
    summary.config_hash = config_hash(cfg);
    summary.root = fs::path(effective_output_root(cfg, opt.out_override)) / summary.config_hash;
    fs::create_directories(summary.root);
    {
        nlohmann::ordered_json j;
        j["config_hash"] = summary.config_hash;
        j["config"] = config_to_json(cfg);
        detail::write_text(summary.root / "config.json", j.dump(2) + "\n");
    }

    std::vector<std::uint64_t> seeds = opt.seeds ? *opt.seeds : cfg.training.seeds;
    require(!seeds.empty(), "run: no seeds requested");
    summary.outcomes.resize(seeds.size());

    std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, seeds.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            try {
                summary.outcomes[i] = detail::run_one_seed(cfg, data, summary.config_hash,
                                                           summary.root, seeds[i], opt.force,
                                                           opt.quiet);
            } catch (const std::exception& e) {
                summary.outcomes[i].seed = seeds[i];
                summary.outcomes[i].error = e.what();
                std::cerr << "seed " << seeds[i] << " failed: " << e.what() << "\n";
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex log_mutex;
        auto worker = [&]() {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= seeds.size()) return;
                try {
                    SeedOutcome o = detail::run_one_seed(cfg, data, summary.config_hash,
                                                         summary.root, seeds[i], opt.force, true);
                    summary.outcomes[i] = std::move(o);
                } catch (const std::exception& e) {
                    summary.outcomes[i].seed = seeds[i];
                    summary.outcomes[i].error = e.what();
                    std::lock_guard<std::mutex> lock(log_mutex);
                    std::cerr << "seed " << seeds[i] << " failed: " << e.what() << "\n";
                }
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    std::vector<EvaluationReport> reports;
    for (const SeedOutcome& o : summary.outcomes)
        if (o.ok) reports.push_back(o.report);
    if (!reports.empty()) {
        summary.aggregate = aggregate_runs(reports);
        summary.has_aggregate = true;
        detail::write_aggregate_files(summary.root, family_name(cfg.architecture.family),
                                      task_label(cfg),
                                      summary.aggregate,
                                      opt.formats ? *opt.formats : cfg.report_formats,
                                      data.meta.annotators);
    }
    return summary;
}

// ---- sweep ---------------------------------------------------------------

struct SweepCell {
    std::string label;                  // "lambda=2.0 family=sep_rec"
    nlohmann::json assignments;         // full-key -> value
    bool ok = false;
    std::string error;
    std::string model;
    AggregateReport aggregate;
};

struct SweepSummary {
    fs::path root;
    std::vector<SweepCell> cells;

    std::size_t failed() const {
        std::size_t n = 0;
        for (const SweepCell& c : cells)
            if (!c.ok) ++n;
        return n;
    }
};

namespace detail {

inline nlohmann::json::json_pointer dotted_pointer(const std::string& key) {
    std::string p = "/" + key;
    for (char& ch : p)
        if (ch == '.') ch = '/';
    return nlohmann::json::json_pointer(p);
}

inline std::string short_key(const std::string& key) {
    auto pos = key.rfind('.');
    return pos == std::string::npos ? key : key.substr(pos + 1);
}

inline std::string value_label(const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
}

} // namespace detail

/// Cartesian product over the axes of a sweep spec, each cell run through
/// run_experiment; results merge into one table sorted by annotator-average
/// F1. Axis keys are dotted config paths ("architecture.lambda"); a key the
/// parsed config does not use is an error.
inline SweepSummary run_sweep(const nlohmann::json& base_config_json,
                              const nlohmann::json& sweep_spec, const RunOptions& opt) {
    std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
    if (sweep_spec.contains("axes"))
        for (const auto& [key, values] : sweep_spec["axes"].items()) {
            require(values.is_array(), "sweep: axis '" + key + "' must map to an array");
            axes.emplace_back(key, std::vector<nlohmann::json>(values.begin(), values.end()));
            require(!axes.back().second.empty(), "sweep: axis '" + key + "' has no values");
        }

    SweepSummary summary;
    {
        ExperimentConfig base = config_from_json(base_config_json);
        summary.root = fs::path(effective_output_root(base, opt.out_override));
    }

    std::vector<std::size_t> index(axes.size(), 0);
    bool done = false;
    while (!done) {
        SweepCell cell;
        nlohmann::json cell_json = base_config_json;
        for (std::size_t ax = 0; ax < axes.size(); ++ax) {
            const auto& [key, values] = axes[ax];
            const nlohmann::json& v = values[index[ax]];
            cell_json[detail::dotted_pointer(key)] = v;
            cell.assignments[key] = v;
            if (!cell.label.empty()) cell.label += " ";
            cell.label += detail::short_key(key) + "=" + detail::value_label(v);
        }
        if (cell.label.empty()) cell.label = "base";
        try {
            ExperimentConfig cfg = config_from_json(cell_json);
            // reject axis keys the config schema silently ignores
            nlohmann::json echo = config_to_json<nlohmann::json>(cfg);
            for (const auto& [key, v] : cell.assignments.items()) {
                auto ptr = detail::dotted_pointer(key);
                if (!echo.contains(ptr) || echo[ptr] != v)
                    throw std::invalid_argument("sweep: unknown or unused axis key '" + key + "'");
            }
            cell.model = family_name(cfg.architecture.family);
            RunSummary rs = run_experiment(cfg, opt);
            if (!rs.has_aggregate)
                throw std::runtime_error("all seeds failed (config " + rs.config_hash + ")");
            cell.aggregate = rs.aggregate;
            cell.ok = rs.failed() == 0;
            if (rs.failed() > 0) cell.error = detail::concat(rs.failed(), " seed(s) failed");
        } catch (const std::exception& e) {
            cell.error = e.what();
            std::cerr << "sweep cell [" << cell.label << "] failed: " << e.what() << "\n";
        }
        summary.cells.push_back(std::move(cell));

        done = true;
        for (std::size_t ax = axes.size(); ax-- > 0;) {
            if (++index[ax] < axes[ax].second.size()) {
                done = false;
                break;
            }
            index[ax] = 0;
        }
        if (axes.empty()) done = true;
    }

    // merged tables over the successful cells, best annotator-average first
    std::vector<SweepCell*> ok_cells;
    for (SweepCell& c : summary.cells)
        if (c.ok || !c.aggregate.seeds.empty()) ok_cells.push_back(&c);
    std::sort(ok_cells.begin(), ok_cells.end(), [](const SweepCell* a, const SweepCell* b) {
        return a->aggregate.annotator_average.mean > b->aggregate.annotator_average.mean;
    });
    ExperimentConfig base = config_from_json(base_config_json);
    std::string task = task_label(base);
    std::vector<NamedAggregate> rows;
    for (const SweepCell* c : ok_cells) rows.push_back({c->label, task, c->aggregate});

    fs::path dir = summary.root / "sweep";
    fs::create_directories(dir);
    nlohmann::ordered_json j;
    j["cells"] = nlohmann::ordered_json::array();
    for (const SweepCell& c : summary.cells) {
        nlohmann::ordered_json cj;
        cj["label"] = c.label;
        cj["assignments"] = c.assignments;
        cj["ok"] = c.ok;
        if (!c.error.empty()) cj["error"] = c.error;
        if (!c.aggregate.seeds.empty()) cj["aggregate"] = aggregate_to_json(c.aggregate);
        j["cells"].push_back(std::move(cj));
    }
    detail::write_text(dir / "sweep.json", j.dump(2) + "\n");
    detail::write_text(dir / "results.csv", results_table_csv(rows));
    detail::write_text(dir / "annotator_range.csv", annotator_range_table_csv(rows));
    detail::write_text(dir / "sweep.md", results_table_markdown(rows) + "\n" +
                                             annotator_range_table_markdown(rows));
    return summary;
}

// ---- synth / inspect / report ---------------------------------------------

inline void run_synth(const SyntheticSpec& spec, std::uint64_t seed, const fs::path& out_dir) {
    SyntheticResult r = generate_synthetic(spec, seed);
    save_dataset(r.dataset, out_dir);
    detail::write_text(out_dir / "oracle.json", oracle_to_json(r.oracle).dump(2) + "\n");
}

/// Per-annotator prediction table for one instance, in the
/// "gold: ... / pred: ..." row style.
inline std::string inspect_instance(const fs::path& checkpoint_path, const fs::path& dataset_dir,
                                    const std::string& instance_id) {
    LoadedCheckpoint loaded = load_checkpoint_file(checkpoint_path);
    if (!loaded.meta.extra.contains("architecture"))
        throw std::runtime_error("checkpoint carries no architecture description");
    ArchitectureSpec spec = detail::architecture_from_json(loaded.meta.extra["architecture"]);
    spec.validate();
    {
        Model expected = build_model(spec, loaded.meta.seed);
        validate_checkpoint_layout(loaded.params, expected.params);
    }
    Model model{spec, std::move(loaded.params)};

    Dataset data = load_dataset(dataset_dir);
    require(data.meta.annotators.size() == spec.annotator_count ||
                spec.family == Family::Majority,
            "inspect: checkpoint and dataset disagree on annotator count");
    const Instance* inst = data.find(instance_id);
    if (!inst) throw std::runtime_error("unknown instance id '" + instance_id + "'");

    auto rows = predict_all(model, inst->text, inst->text_pair);
    std::ostringstream out;
    out << "instance " << inst->id << " (" << split_name(inst->split) << ")\n";
    out << "text: " << inst->text << "\n";
    if (inst->text_pair) out << "text_pair: " << *inst->text_pair << "\n";
    std::string gold, pred, names;
    for (std::size_t a = 0; a < data.meta.annotators.size(); ++a) {
        if (a) {
            gold += ", ";
            pred += ", ";
            names += ", ";
        }
        names += data.meta.annotators[a];
        auto it = inst->annotations.find(a);
        gold += it == inst->annotations.end() ? std::string("-") : std::to_string(it->second);
        pred += std::to_string(argmax(rows[std::min(a, rows.size() - 1)]));
    }
    out << "annotators: " << names << "\n";
    out << "gold: " << gold << " / pred: " << pred << "\n";
    return out.str();
}

/// Rebuilds the aggregate files for one out/<hash> directory from the
/// per-seed report.json files on disk.
inline AggregateReport regenerate_aggregate(const fs::path& hash_dir,
                                            const std::vector<std::string>& formats) {
    std::ifstream cfg_in(hash_dir / "config.json");
    if (!cfg_in) throw std::runtime_error("report: missing " + (hash_dir / "config.json").string());
    nlohmann::json meta = nlohmann::json::parse(cfg_in);
    ExperimentConfig cfg = config_from_json(meta.at("config"));

    std::vector<std::pair<std::uint64_t, EvaluationReport>> found;
    for (const auto& entry : fs::directory_iterator(hash_dir)) {
        if (!entry.is_directory()) continue;
        fs::path rp = entry.path() / "report.json";
        if (!fs::exists(rp)) continue;
        std::ifstream in(rp);
        found.emplace_back(std::stoull(entry.path().filename().string()),
                           report_from_json(nlohmann::json::parse(in)));
    }
    require(!found.empty(), "report: no per-seed report.json files under " + hash_dir.string());
    std::sort(found.begin(), found.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<EvaluationReport> reports;
    for (auto& [seed, rep] : found) reports.push_back(std::move(rep));
    AggregateReport agg = aggregate_runs(reports);

    std::vector<std::string> annotators;
    if (cfg.dataset_path && fs::exists(*cfg.dataset_path))
        annotators = load_dataset(*cfg.dataset_path).meta.annotators;
    else if (cfg.synthetic)
        annotators = generate_synthetic(*cfg.synthetic, cfg.synthetic_seed).dataset.meta.annotators;
    detail::write_aggregate_files(hash_dir, family_name(cfg.architecture.family), task_label(cfg),
                                  agg, formats, annotators);
    return agg;
}

} // namespace perspectra
