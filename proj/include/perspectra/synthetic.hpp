#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "perspectra/dataset.hpp"
#include "perspectra/rng.hpp"
#include "perspectra/tokenize.hpp"

namespace perspectra {

/// Recipe for a synthetic annotator population. Texts are bags of filler
/// tokens plus a few keywords; a shared keyword->class-score table defines the
/// underlying signal, and each annotator may override keywords with additive
/// offsets (systematic perspective), flip labels at some rate (noise), and
/// label only a fraction of instances (density).
struct SyntheticSpec {
    std::size_t annotator_count = 5;
    std::size_t class_count = 3;
    std::size_t vocab_size = 60; // distinct tokens incl. keywords
    std::size_t train_size = 788;
    std::size_t dev_size = 113;
    std::size_t test_size = 226;
    std::size_t min_tokens = 8;
    std::size_t max_tokens = 16;
    std::size_t keywords_per_text = 2;
    std::map<std::string, std::vector<double>> keyword_scores;
    std::vector<std::map<std::string, std::vector<double>>> biases; // one table per annotator
    std::vector<double> flip_rates;                                 // per annotator, [0, 0.5)
    std::vector<double> densities;                                  // per annotator, (0, 1]
    std::vector<std::string> label_names;     // default class_<c>
    std::vector<std::string> annotator_names; // default ann_<a>

    void validate() const {
        require(annotator_count >= 1, "synthetic: annotator_count must be >= 1");
        require(class_count >= 2, "synthetic: class_count must be >= 2");
        require(min_tokens >= 1 && max_tokens >= min_tokens, "synthetic: bad token range");
        require(keywords_per_text <= min_tokens,
                "synthetic: keywords_per_text cannot exceed min_tokens");
        require(!keyword_scores.empty() || keywords_per_text == 0,
                "synthetic: keyword_scores table is empty");
        require(biases.size() == annotator_count, "synthetic: need one bias table per annotator");
        require(flip_rates.size() == annotator_count,
                "synthetic: need one flip rate per annotator");
        require(densities.size() == annotator_count, "synthetic: need one density per annotator");
        for (double f : flip_rates)
            require(f >= 0.0 && f < 0.5, "synthetic: flip rate must lie in [0, 0.5)");
        for (double d : densities)
            require(d > 0.0 && d <= 1.0, "synthetic: density must lie in (0, 1]");
        for (const auto& [kw, scores] : keyword_scores)
            require(scores.size() == class_count,
                    "synthetic: score vector for '" + kw + "' must have class_count entries");
        for (const auto& table : biases)
            for (const auto& [kw, offsets] : table) {
                require(keyword_scores.count(kw) != 0,
                        "synthetic: bias on unknown keyword '" + kw + "'");
                require(offsets.size() == class_count,
                        "synthetic: offset vector for '" + kw + "' must have class_count entries");
            }
        if (!label_names.empty())
            require(label_names.size() == class_count, "synthetic: label_names length != k");
        if (!annotator_names.empty())
            require(annotator_names.size() == annotator_count,
                    "synthetic: annotator_names length != annotator_count");
    }
};

/// A 5-annotator, 3-class population with strong systematic biases and two
/// sparse annotators; the desk-scale stand-in for an uneven real crowd.
/// Keyword kw<i> scores 3 + i/3 points for class i%3. Annotators 1-3 each
/// override one class's keywords with a +8 offset toward another class;
/// annotator 4 overrides a single keyword. Everyone flips 10% of labels.
inline SyntheticSpec default_synthetic_spec() {
    SyntheticSpec s;
    auto score = [&](std::size_t cls, double pts) {
        std::vector<double> v(s.class_count, 0.0);
        v[cls] = pts;
        return v;
    };
    for (std::size_t i = 0; i < 9; ++i) {
        std::string kw = "kw0" + std::to_string(i);
        s.keyword_scores[kw] = score(i % 3, 3.0 + static_cast<double>(i / 3));
    }
    s.biases.assign(5, {});
    s.biases[1]["kw00"] = score(1, 8.0); // relabels class-0 signal as class 1
    s.biases[1]["kw03"] = score(1, 8.0);
    s.biases[1]["kw06"] = score(1, 8.0);
    s.biases[2]["kw01"] = score(2, 8.0); // relabels class-1 signal as class 2
    s.biases[2]["kw04"] = score(2, 8.0);
    s.biases[2]["kw07"] = score(2, 8.0);
    s.biases[3]["kw02"] = score(0, 8.0); // relabels class-2 signal as class 0
    s.biases[3]["kw05"] = score(0, 8.0);
    s.biases[3]["kw08"] = score(0, 8.0);
    s.biases[4]["kw00"] = score(2, 8.0);
    s.flip_rates.assign(5, 0.1);
    s.densities = {1.0, 1.0, 1.0, 0.35, 0.15};
    return s;
}

/// The generating process minus the noise: per-annotator noiseless labels and
/// the Bayes accuracy an ideal classifier can reach against the flipped data.
struct SyntheticOracle {
    std::size_t class_count = 0;
    std::map<std::string, std::vector<double>> keyword_scores;
    std::vector<std::map<std::string, std::vector<double>>> biases;
    std::vector<double> flip_rates;

    std::vector<double> bayes_accuracy() const {
        std::vector<double> out;
        for (double f : flip_rates) out.push_back(1.0 - f);
        return out;
    }

    std::size_t noiseless_label(const std::string& text, std::size_t annotator) const {
        require(annotator < biases.size(), "oracle: annotator index out of range");
        std::vector<double> score(class_count, 0.0);
        for (const std::string& tok : tokenize(text)) {
            auto it = keyword_scores.find(tok);
            if (it != keyword_scores.end())
                for (std::size_t c = 0; c < class_count; ++c) score[c] += it->second[c];
            auto bt = biases[annotator].find(tok);
            if (bt != biases[annotator].end())
                for (std::size_t c = 0; c < class_count; ++c) score[c] += bt->second[c];
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < class_count; ++c)
            if (score[c] > score[best]) best = c;
        return best;
    }
};

struct SyntheticResult {
    Dataset dataset;
    SyntheticOracle oracle;
};

inline SyntheticResult generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    SyntheticResult out;
    DatasetMeta& meta = out.dataset.meta;
    meta.class_count = spec.class_count;
    meta.language = "synthetic";
    for (std::size_t c = 0; c < spec.class_count; ++c)
        meta.label_names.push_back(spec.label_names.empty() ? "class_" + std::to_string(c)
                                                            : spec.label_names[c]);
    for (std::size_t a = 0; a < spec.annotator_count; ++a)
        meta.annotators.push_back(spec.annotator_names.empty() ? "ann_" + std::to_string(a)
                                                               : spec.annotator_names[a]);

    out.oracle = {spec.class_count, spec.keyword_scores, spec.biases, spec.flip_rates};

    std::vector<std::string> keywords;
    for (const auto& [kw, scores] : spec.keyword_scores) keywords.push_back(kw);
    std::size_t filler_count =
        spec.vocab_size > keywords.size() ? spec.vocab_size - keywords.size() : 1;
    std::vector<std::string> fillers;
    for (std::size_t i = 0; i < filler_count; ++i) {
        std::string n = std::to_string(i);
        fillers.push_back("w" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n);
    }

    std::size_t densest = 0;
    for (std::size_t a = 1; a < spec.annotator_count; ++a)
        if (spec.densities[a] > spec.densities[densest]) densest = a;

    Rng rng(derive_seed(seed, "synth"));
    auto make_split = [&](Split split, std::size_t count, const char* name) {
        for (std::size_t i = 0; i < count; ++i) {
            Instance inst;
            std::string n = std::to_string(i);
            inst.id = std::string(name) + "_" +
                      std::string(n.size() < 5 ? 5 - n.size() : 0, '0') + n;
            inst.split = split;

            std::size_t len = spec.min_tokens + rng.bounded(spec.max_tokens - spec.min_tokens + 1);
            std::vector<std::string> tokens;
            for (std::size_t k = 0; k < spec.keywords_per_text && !keywords.empty(); ++k)
                tokens.push_back(keywords[rng.bounded(keywords.size())]);
            while (tokens.size() < len) tokens.push_back(fillers[rng.bounded(fillers.size())]);
            rng.shuffle(tokens);
            for (std::size_t t = 0; t < tokens.size(); ++t) {
                if (t) inst.text += ' ';
                inst.text += tokens[t];
            }

            for (std::size_t a = 0; a < spec.annotator_count; ++a)
                if (rng.next_double() < spec.densities[a]) inst.annotations[a] = 0;
            if (inst.annotations.empty()) inst.annotations[densest] = 0; // keep instance labeled
            for (auto& [a, label] : inst.annotations) {
                std::size_t clean = out.oracle.noiseless_label(inst.text, a);
                label = clean;
                if (spec.flip_rates[a] > 0.0 && rng.next_double() < spec.flip_rates[a]) {
                    std::size_t shift = 1 + rng.bounded(spec.class_count - 1);
                    label = (clean + shift) % spec.class_count;
                }
            }
            out.dataset.instances.push_back(std::move(inst));
        }
    };
    make_split(Split::Train, spec.train_size, "train");
    make_split(Split::Dev, spec.dev_size, "dev");
    make_split(Split::Test, spec.test_size, "test");
    return out;
}

namespace detail {

template <typename J>
J score_table_to_json(const std::map<std::string, std::vector<double>>& table) {
    J j = J::object();
    for (const auto& [kw, v] : table) j[kw] = v;
    return j;
}

inline std::map<std::string, std::vector<double>> score_table_from_json(const nlohmann::json& j) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [kw, v] : j.items()) out[kw] = v.get<std::vector<double>>();
    return out;
}

} // namespace detail

inline nlohmann::ordered_json synthetic_spec_to_json(const SyntheticSpec& s) {
    nlohmann::ordered_json j;
    j["annotator_count"] = s.annotator_count;
    j["class_count"] = s.class_count;
    j["vocab_size"] = s.vocab_size;
    j["split_sizes"] = {{"train", s.train_size}, {"dev", s.dev_size}, {"test", s.test_size}};
    j["tokens_per_text"] = {s.min_tokens, s.max_tokens};
    j["keywords_per_text"] = s.keywords_per_text;
    j["keyword_scores"] = detail::score_table_to_json<nlohmann::ordered_json>(s.keyword_scores);
    j["biases"] = nlohmann::ordered_json::array();
    for (const auto& table : s.biases)
        j["biases"].push_back(detail::score_table_to_json<nlohmann::ordered_json>(table));
    j["flip_rates"] = s.flip_rates;
    j["densities"] = s.densities;
    if (!s.label_names.empty()) j["labels"] = s.label_names;
    if (!s.annotator_names.empty()) j["annotator_names"] = s.annotator_names;
    return j;
}

/// Starts from default_synthetic_spec() so a partial JSON object (say, only
/// split sizes) still yields a usable population.
inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    SyntheticSpec s = default_synthetic_spec();
    if (j.contains("annotator_count")) s.annotator_count = j["annotator_count"].get<std::size_t>();
    if (j.contains("class_count")) s.class_count = j["class_count"].get<std::size_t>();
    if (j.contains("vocab_size")) s.vocab_size = j["vocab_size"].get<std::size_t>();
    if (j.contains("split_sizes")) {
        const auto& sz = j["split_sizes"];
        s.train_size = sz.at("train").get<std::size_t>();
        s.dev_size = sz.at("dev").get<std::size_t>();
        s.test_size = sz.at("test").get<std::size_t>();
    }
    if (j.contains("tokens_per_text")) {
        s.min_tokens = j["tokens_per_text"].at(0).get<std::size_t>();
        s.max_tokens = j["tokens_per_text"].at(1).get<std::size_t>();
    }
    if (j.contains("keywords_per_text"))
        s.keywords_per_text = j["keywords_per_text"].get<std::size_t>();
    if (j.contains("keyword_scores"))
        s.keyword_scores = detail::score_table_from_json(j["keyword_scores"]);
    if (j.contains("biases")) {
        s.biases.clear();
        for (const auto& table : j["biases"]) s.biases.push_back(detail::score_table_from_json(table));
    }
    if (j.contains("flip_rates")) s.flip_rates = j["flip_rates"].get<std::vector<double>>();
    if (j.contains("densities")) s.densities = j["densities"].get<std::vector<double>>();
    if (j.contains("labels")) s.label_names = j["labels"].get<std::vector<std::string>>();
    if (j.contains("annotator_names"))
        s.annotator_names = j["annotator_names"].get<std::vector<std::string>>();

    // Fields left at their defaults follow an overridden annotator_count or
    // class_count: per-annotator tables truncate or pad with neutral entries,
    // score vectors truncate or pad with zeros.
    auto fit_scores = [&](std::map<std::string, std::vector<double>>& table) {
        for (auto& [kw, scores] : table) scores.resize(s.class_count, 0.0);
    };
    if (!j.contains("keyword_scores")) fit_scores(s.keyword_scores);
    if (!j.contains("biases")) {
        s.biases.resize(s.annotator_count);
        for (auto& table : s.biases) fit_scores(table);
    }
    if (!j.contains("flip_rates")) s.flip_rates.resize(s.annotator_count, 0.1);
    if (!j.contains("densities")) s.densities.resize(s.annotator_count, 1.0);

    s.validate();
    return s;
}

inline nlohmann::ordered_json oracle_to_json(const SyntheticOracle& o) {
    nlohmann::ordered_json j;
    j["class_count"] = o.class_count;
    j["flip_rates"] = o.flip_rates;
    j["bayes_accuracy"] = o.bayes_accuracy();
    j["keyword_scores"] = detail::score_table_to_json<nlohmann::ordered_json>(o.keyword_scores);
    j["biases"] = nlohmann::ordered_json::array();
    for (const auto& table : o.biases)
        j["biases"].push_back(detail::score_table_to_json<nlohmann::ordered_json>(table));
    return j;
}

} // namespace perspectra
