#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "perspectra/architecture.hpp"
#include "perspectra/dataset.hpp"

namespace perspectra {

/// Macro-averaged F1 in percent. Per-class F1 = 2PR/(P+R), 0 when P+R = 0;
/// the macro mean runs over the classes present in gold or predictions.
inline double macro_f1(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred,
                       std::size_t class_count) {
    require(gold.size() == pred.size(), "macro_f1: gold/pred length mismatch");
    require(!gold.empty(), "macro_f1: empty label lists");
    std::vector<std::size_t> tp(class_count, 0), fp(class_count, 0), fn(class_count, 0);
    std::vector<bool> present(class_count, false);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        require(gold[i] < class_count && pred[i] < class_count,
                "macro_f1: class index out of range");
        present[gold[i]] = present[pred[i]] = true;
        if (gold[i] == pred[i]) ++tp[gold[i]];
        else {
            ++fp[pred[i]];
            ++fn[gold[i]];
        }
    }
    double sum = 0.0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < class_count; ++c) {
        if (!present[c]) continue;
        ++classes;
        double p = tp[c] + fp[c] ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
        double r = tp[c] + fn[c] ? static_cast<double>(tp[c]) / (tp[c] + fn[c]) : 0.0;
        if (p + r > 0.0) sum += 2.0 * p * r / (p + r);
    }
    return 100.0 * sum / static_cast<double>(classes);
}

/// Standard Fleiss' kappa over a dense item x annotator matrix of class
/// indices. The all-identical-single-category matrix makes the formula 0/0;
/// it is reported as kappa = 1 (perfect agreement) with exact_uniform set.
struct FleissResult {
    double kappa = 0.0;
    bool exact_uniform = false;
};

inline FleissResult fleiss_kappa(const std::vector<std::vector<std::size_t>>& matrix,
                                 std::size_t class_count) {
    require(!matrix.empty(), "fleiss_kappa: no items");
    std::size_t raters = matrix[0].size();
    require(raters >= 2, "fleiss_kappa: need at least 2 annotators");
    for (const auto& row : matrix)
        require(row.size() == raters, "fleiss_kappa: ragged matrix");

    double n = static_cast<double>(raters);
    double N = static_cast<double>(matrix.size());
    std::vector<double> category_total(class_count, 0.0);
    double p_bar = 0.0;
    for (const auto& row : matrix) {
        std::vector<std::size_t> counts(class_count, 0);
        for (std::size_t label : row) {
            require(label < class_count, "fleiss_kappa: class index out of range");
            ++counts[label];
        }
        double agree = 0.0;
        for (std::size_t c = 0; c < class_count; ++c) {
            agree += static_cast<double>(counts[c]) * (static_cast<double>(counts[c]) - 1.0);
            category_total[c] += static_cast<double>(counts[c]);
        }
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= N;
    double pe = 0.0;
    for (double t : category_total) {
        double p = t / (N * n);
        pe += p * p;
    }
    if (pe >= 1.0) return {1.0, true}; // every rating is the same single category
    return {(p_bar - pe) / (1.0 - pe), false};
}

inline double sample_std(const std::vector<double>& values, double mean) {
    if (values.size() < 2) return 0.0;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / (static_cast<double>(values.size()) - 1.0));
}

inline double mean_of(const std::vector<double>& values) {
    require(!values.empty(), "mean of empty list");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

/// Constant predictor using the most frequent majority-aggregated train label,
/// scored per annotator with the two-step protocol.
struct BaselineResult {
    std::size_t label = 0;
    std::vector<double> per_annotator; // NaN where an annotator has no test items
    double average = 0.0;
};

inline BaselineResult naive_baseline(const Dataset& d) {
    std::vector<std::size_t> counts(d.meta.class_count, 0);
    for (const Instance* inst : d.split_instances(Split::Train))
        ++counts[aggregate_majority(inst->annotations, d.meta.class_count).label];
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    require(total > 0, "naive_baseline: no aggregated train labels");
    BaselineResult out;
    for (std::size_t c = 1; c < d.meta.class_count; ++c)
        if (counts[c] > counts[out.label]) out.label = c;

    std::vector<double> included;
    for (std::size_t a = 0; a < d.meta.annotators.size(); ++a) {
        auto view = annotator_view(d, a, Split::Test);
        if (view.empty()) {
            out.per_annotator.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        std::vector<std::size_t> gold, pred(view.size(), out.label);
        for (const ViewItem& v : view) gold.push_back(v.label);
        double f1 = macro_f1(gold, pred, d.meta.class_count);
        out.per_annotator.push_back(f1);
        included.push_back(f1);
    }
    out.average = mean_of(included);
    return out;
}

/// Per-annotator-first scoring of one trained model on the test split.
struct EvaluationReport {
    std::vector<double> per_annotator_f1; // percent; NaN where excluded
    double annotator_average = 0.0;
    double min_f1 = 0.0;
    double max_f1 = 0.0;
    double std_f1 = 0.0;
    double predicted_kappa = 0.0;
    bool kappa_exact_uniform = false;
    std::vector<std::size_t> excluded_annotators; // no test annotations
    std::vector<double> baseline_per_annotator;
    double baseline_average = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

inline EvaluationReport two_step_score(const Model& m, const Dataset& d) {
    auto test = d.split_instances(Split::Test);
    require(!test.empty(), "two_step_score: empty test split");
    std::size_t n = d.meta.annotators.size();
    require(m.spec.annotator_count == n || m.spec.family == Family::Majority,
            "two_step_score: model and dataset disagree on annotator count");

    EvaluationReport rep;
    std::vector<std::vector<std::size_t>> gold_by_annotator(n), pred_by_annotator(n);
    std::vector<std::vector<std::size_t>> kappa_matrix;
    kappa_matrix.reserve(test.size());
    for (const Instance* inst : test) {
        auto rows = predict_all(m, inst->text, inst->text_pair);
        std::vector<std::size_t> arg_row;
        for (std::size_t a = 0; a < n; ++a) {
            // majority models expose one row; every annotator reads the same one
            const std::vector<double>& row = rows[std::min(a, rows.size() - 1)];
            arg_row.push_back(argmax(row));
        }
        kappa_matrix.push_back(arg_row);
        for (const auto& [a, label] : inst->annotations) {
            gold_by_annotator[a].push_back(label);
            pred_by_annotator[a].push_back(arg_row[a]);
        }
    }

    std::vector<double> included;
    for (std::size_t a = 0; a < n; ++a) {
        if (gold_by_annotator[a].empty()) {
            std::cerr << "warning: annotator '" << d.meta.annotators[a]
                      << "' has no test annotations; excluded from the two-step average\n";
            rep.excluded_annotators.push_back(a);
            rep.per_annotator_f1.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        double f1 = macro_f1(gold_by_annotator[a], pred_by_annotator[a], d.meta.class_count);
        rep.per_annotator_f1.push_back(f1);
        included.push_back(f1);
    }
    require(!included.empty(), "two_step_score: every annotator is missing test annotations");
    rep.annotator_average = mean_of(included);
    rep.min_f1 = *std::min_element(included.begin(), included.end());
    rep.max_f1 = *std::max_element(included.begin(), included.end());
    rep.std_f1 = sample_std(included, rep.annotator_average);
    if (n >= 2) {
        FleissResult k = fleiss_kappa(kappa_matrix, d.meta.class_count);
        rep.predicted_kappa = k.kappa;
        rep.kappa_exact_uniform = k.exact_uniform;
    } else {
        rep.predicted_kappa = std::numeric_limits<double>::quiet_NaN();
    }
    BaselineResult base = naive_baseline(d);
    rep.baseline_per_annotator = base.per_annotator;
    rep.baseline_average = base.average;
    return rep;
}

/// Mean and sample standard deviation (n-1); one value -> std 0.
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& values) {
    MeanStd ms;
    ms.mean = mean_of(values);
    ms.std = sample_std(values, ms.mean);
    return ms;
}

struct AggregateReport {
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    MeanStd annotator_average;
    MeanStd min_f1;
    MeanStd max_f1;
    MeanStd predicted_kappa;
    std::vector<MeanStd> per_annotator; // across-run mean per annotator
    MeanStd baseline_average;
};

/// Across-seed aggregation in the mean-plus-minus-std presentation. All
/// reports must come from the same configuration.
inline AggregateReport aggregate_runs(const std::vector<EvaluationReport>& runs) {
    require(!runs.empty(), "aggregate_runs: no reports");
    AggregateReport agg;
    agg.config_hash = runs[0].config_hash;
    for (const EvaluationReport& r : runs) {
        require(r.config_hash == agg.config_hash,
                "aggregate_runs: mixed config hashes ('" + agg.config_hash + "' vs '" +
                    r.config_hash + "')");
        agg.seeds.push_back(r.seed);
    }
    auto collect = [&](auto get) {
        std::vector<double> v;
        for (const EvaluationReport& r : runs) v.push_back(get(r));
        return mean_std(v);
    };
    agg.annotator_average = collect([](const EvaluationReport& r) { return r.annotator_average; });
    agg.min_f1 = collect([](const EvaluationReport& r) { return r.min_f1; });
    agg.max_f1 = collect([](const EvaluationReport& r) { return r.max_f1; });
    agg.predicted_kappa = collect([](const EvaluationReport& r) { return r.predicted_kappa; });
    agg.baseline_average = collect([](const EvaluationReport& r) { return r.baseline_average; });
    std::size_t n = runs[0].per_annotator_f1.size();
    for (std::size_t a = 0; a < n; ++a) {
        std::vector<double> v;
        for (const EvaluationReport& r : runs) {
            require(r.per_annotator_f1.size() == n,
                    "aggregate_runs: reports disagree on annotator count");
            if (!std::isnan(r.per_annotator_f1[a])) v.push_back(r.per_annotator_f1[a]);
        }
        agg.per_annotator.push_back(
            v.empty() ? MeanStd{std::numeric_limits<double>::quiet_NaN(), 0.0} : mean_std(v));
    }
    return agg;
}

inline std::string format_mean_std(const MeanStd& ms, int precision = 2) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f ± %.*f", precision, ms.mean, precision, ms.std);
    return buf;
}

namespace detail {

inline nlohmann::ordered_json nan_safe(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

inline double nan_restore(const nlohmann::json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

} // namespace detail

inline nlohmann::ordered_json report_to_json(const EvaluationReport& r) {
    nlohmann::ordered_json j;
    j["seed"] = r.seed;
    j["config_hash"] = r.config_hash;
    j["per_annotator_f1"] = nlohmann::ordered_json::array();
    for (double v : r.per_annotator_f1) j["per_annotator_f1"].push_back(detail::nan_safe(v));
    j["annotator_average"] = r.annotator_average;
    j["min_f1"] = r.min_f1;
    j["max_f1"] = r.max_f1;
    j["std_f1"] = r.std_f1;
    j["predicted_kappa"] = detail::nan_safe(r.predicted_kappa);
    j["kappa_exact_uniform"] = r.kappa_exact_uniform;
    j["excluded_annotators"] = r.excluded_annotators;
    j["baseline_per_annotator"] = nlohmann::ordered_json::array();
    for (double v : r.baseline_per_annotator)
        j["baseline_per_annotator"].push_back(detail::nan_safe(v));
    j["baseline_average"] = r.baseline_average;
    return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
    EvaluationReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& v : j.at("per_annotator_f1")) r.per_annotator_f1.push_back(detail::nan_restore(v));
    r.annotator_average = j.at("annotator_average").get<double>();
    r.min_f1 = j.at("min_f1").get<double>();
    r.max_f1 = j.at("max_f1").get<double>();
    r.std_f1 = j.at("std_f1").get<double>();
    r.predicted_kappa = detail::nan_restore(j.at("predicted_kappa"));
    r.kappa_exact_uniform = j.at("kappa_exact_uniform").get<bool>();
    r.excluded_annotators = j.at("excluded_annotators").get<std::vector<std::size_t>>();
    for (const auto& v : j.at("baseline_per_annotator"))
        r.baseline_per_annotator.push_back(detail::nan_restore(v));
    r.baseline_average = j.at("baseline_average").get<double>();
    return r;
}

/// Min/max over the per-annotator across-run means — the "highest and lowest
/// annotator-level score" view of an aggregate.
inline double annotator_level_min(const AggregateReport& a) {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (const MeanStd& m : a.per_annotator)
        if (!std::isnan(m.mean) && (std::isnan(best) || m.mean < best)) best = m.mean;
    return best;
}

inline double annotator_level_max(const AggregateReport& a) {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (const MeanStd& m : a.per_annotator)
        if (!std::isnan(m.mean) && (std::isnan(best) || m.mean > best)) best = m.mean;
    return best;
}

struct NamedAggregate {
    std::string model;
    std::string task;
    AggregateReport agg;
};

/// model, task, annotator-average mean/std — one row per aggregate.
inline std::string results_table_csv(const std::vector<NamedAggregate>& rows) {
    std::string out = "model,task,f1_mean,f1_std,predicted_kappa\n";
    char buf[160];
    for (const NamedAggregate& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.2f,%.2f,%.3f\n", r.model.c_str(), r.task.c_str(),
                      r.agg.annotator_average.mean, r.agg.annotator_average.std,
                      r.agg.predicted_kappa.mean);
        out += buf;
    }
    return out;
}

inline std::string results_table_markdown(const std::vector<NamedAggregate>& rows) {
    std::string out = "| model | task | annotator-average F1 | predicted kappa |\n";
    out += "|---|---|---|---|\n";
    char buf[192];
    for (const NamedAggregate& r : rows) {
        std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %.3f |\n", r.model.c_str(),
                      r.task.c_str(), format_mean_std(r.agg.annotator_average).c_str(),
                      r.agg.predicted_kappa.mean);
        out += buf;
    }
    return out;
}

/// model, min, max — lowest and highest annotator-level mean F1.
inline std::string annotator_range_table_csv(const std::vector<NamedAggregate>& rows) {
    std::string out = "model,min,max\n";
    char buf[128];
    for (const NamedAggregate& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f\n", r.model.c_str(),
                      annotator_level_min(r.agg), annotator_level_max(r.agg));
        out += buf;
    }
    return out;
}

inline std::string annotator_range_table_markdown(const std::vector<NamedAggregate>& rows) {
    std::string out = "| model | lowest annotator F1 | highest annotator F1 |\n|---|---|---|\n";
    char buf[128];
    for (const NamedAggregate& r : rows) {
        std::snprintf(buf, sizeof(buf), "| %s | %.2f | %.2f |\n", r.model.c_str(),
                      annotator_level_min(r.agg), annotator_level_max(r.agg));
        out += buf;
    }
    return out;
}

inline nlohmann::ordered_json aggregate_to_json(const AggregateReport& a) {
    auto ms = [](const MeanStd& m) {
        return nlohmann::ordered_json{{"mean", detail::nan_safe(m.mean)}, {"std", m.std}};
    };
    nlohmann::ordered_json j;
    j["config_hash"] = a.config_hash;
    j["seeds"] = a.seeds;
    j["annotator_average"] = ms(a.annotator_average);
    j["min_f1"] = ms(a.min_f1);
    j["max_f1"] = ms(a.max_f1);
    j["predicted_kappa"] = ms(a.predicted_kappa);
    j["per_annotator"] = nlohmann::ordered_json::array();
    for (const MeanStd& m : a.per_annotator) j["per_annotator"].push_back(ms(m));
    j["baseline_average"] = ms(a.baseline_average);
    return j;
}

} // namespace perspectra
