#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "perspectra/architecture.hpp"
#include "perspectra/synthetic.hpp"
#include "perspectra/training.hpp"

namespace perspectra {

inline const char* text_encoder_kind_name(TextEncoderKind k) {
    return k == TextEncoderKind::HashedNgram ? "hashed_ngram" : "embed_pool";
}

inline TextEncoderKind text_encoder_kind_from_string(const std::string& s) {
    if (s == "hashed_ngram") return TextEncoderKind::HashedNgram;
    if (s == "embed_pool") return TextEncoderKind::EmbedPool;
    throw std::invalid_argument("unknown text encoder kind '" + s + "'");
}

inline const char* annotator_encoder_variant_name(AnnotatorEncoderVariant v) {
    switch (v) {
        case AnnotatorEncoderVariant::OneHot: return "one_hot";
        case AnnotatorEncoderVariant::Simple: return "simple";
        case AnnotatorEncoderVariant::Complex: return "complex";
    }
    return "?";
}

inline AnnotatorEncoderVariant annotator_encoder_variant_from_string(const std::string& s) {
    if (s == "one_hot") return AnnotatorEncoderVariant::OneHot;
    if (s == "simple") return AnnotatorEncoderVariant::Simple;
    if (s == "complex") return AnnotatorEncoderVariant::Complex;
    throw std::invalid_argument("unknown annotator encoder variant '" + s + "'");
}

inline const char* combiner_variant_name(CombinerVariant v) {
    switch (v) {
        case CombinerVariant::Simple: return "simple";
        case CombinerVariant::Medium: return "medium";
        case CombinerVariant::Complex: return "complex";
        case CombinerVariant::DeepCross: return "deepcross";
    }
    return "?";
}

inline CombinerVariant combiner_variant_from_string(const std::string& s) {
    if (s == "simple") return CombinerVariant::Simple;
    if (s == "medium") return CombinerVariant::Medium;
    if (s == "complex") return CombinerVariant::Complex;
    if (s == "deepcross") return CombinerVariant::DeepCross;
    throw std::invalid_argument("unknown combiner variant '" + s + "'");
}

/// One experiment: a data source, one architecture, and a training recipe.
/// annotator_count/class_count of 0 mean "derive from the dataset"; call
/// resolve() before building models.
struct ExperimentConfig {
    std::optional<std::string> dataset_path;
    std::optional<SyntheticSpec> synthetic;
    std::uint64_t synthetic_seed = 1;
    ArchitectureSpec architecture;
    TrainConfig training;
    std::string output_dir = "out";
    std::vector<std::string> report_formats = {"json", "csv", "md"};

    void validate() const {
        require(dataset_path.has_value() != synthetic.has_value(),
                "config: exactly one data source (data.dataset or data.synthetic) required");
        training.validate();
        for (const std::string& f : report_formats)
            require(f == "json" || f == "csv" || f == "md",
                    "config: report format must be json, csv, or md");
    }

    void resolve(const DatasetMeta& meta) {
        if (architecture.annotator_count == 0) architecture.annotator_count = meta.annotators.size();
        if (architecture.class_count == 0) architecture.class_count = meta.class_count;
        if (training.max_tokens)
            architecture.text_encoder.max_tokens = static_cast<int>(*training.max_tokens);
        architecture.validate();
    }
};

namespace detail {

template <typename J>
J text_encoder_to_json(const TextEncoderConfig& c) {
    J j;
    j["kind"] = text_encoder_kind_name(c.kind);
    j["output_dim"] = c.output_dim;
    j["vocab_or_buckets"] = c.vocab_or_bucket_size;
    j["ngram_min"] = c.ngram_min;
    j["ngram_max"] = c.ngram_max;
    j["max_tokens"] = c.max_tokens;
    return j;
}

inline TextEncoderConfig text_encoder_from_json(const nlohmann::json& j) {
    TextEncoderConfig c;
    if (j.contains("kind")) c.kind = text_encoder_kind_from_string(j["kind"].get<std::string>());
    c.output_dim = j.value("output_dim", c.output_dim);
    c.vocab_or_bucket_size = j.value("vocab_or_buckets", c.vocab_or_bucket_size);
    c.ngram_min = j.value("ngram_min", c.ngram_min);
    c.ngram_max = j.value("ngram_max", c.ngram_max);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    return c;
}

template <typename J>
J annotator_encoder_to_json(const AnnotatorEncoderConfig& c) {
    J j;
    j["variant"] = annotator_encoder_variant_name(c.variant);
    j["embedding_dim"] = c.embedding_dim;
    j["dropout"] = c.dropout;
    return j;
}

inline AnnotatorEncoderConfig annotator_encoder_from_json(const nlohmann::json& j) {
    AnnotatorEncoderConfig c;
    if (j.contains("variant"))
        c.variant = annotator_encoder_variant_from_string(j["variant"].get<std::string>());
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.dropout = j.value("dropout", c.dropout);
    return c;
}

template <typename J>
J combiner_to_json(const CombinerConfig& c) {
    J j;
    j["variant"] = combiner_variant_name(c.variant);
    j["layers"] = c.layers;
    j["deep_branch_features"] = c.deep_branch_features;
    j["dropout"] = c.dropout;
    return j;
}

inline CombinerConfig combiner_from_json(const nlohmann::json& j) {
    CombinerConfig c;
    if (j.contains("variant"))
        c.variant = combiner_variant_from_string(j["variant"].get<std::string>());
    c.layers = j.value("layers", c.layers);
    c.deep_branch_features = j.value("deep_branch_features", c.deep_branch_features);
    c.dropout = j.value("dropout", c.dropout);
    return c;
}

template <typename J>
J architecture_to_json(const ArchitectureSpec& a) {
    J j;
    j["family"] = family_name(a.family);
    j["annotator_count"] = a.annotator_count;
    j["class_count"] = a.class_count;
    j["text_encoder"] = text_encoder_to_json<J>(a.text_encoder);
    if (a.family == Family::SepRec) {
        j["lambda"] = a.lambda;
        j["plus_shared"] = a.plus_shared;
    }
    if (a.is_rec()) {
        j["annotator_encoder"] = annotator_encoder_to_json<J>(a.annotator_encoder);
        j["combiner"] = combiner_to_json<J>(a.combiner);
    }
    return j;
}

inline ArchitectureSpec architecture_from_json(const nlohmann::json& j) {
    ArchitectureSpec a;
    a.family = family_from_string(j.at("family").get<std::string>());
    a.annotator_count = j.value("annotator_count", std::size_t{0});
    a.class_count = j.value("class_count", std::size_t{0});
    a.lambda = j.value("lambda", 0.0);
    a.plus_shared = j.value("plus_shared", false);
    if (j.contains("text_encoder")) a.text_encoder = text_encoder_from_json(j["text_encoder"]);
    if (!a.is_rec() && (j.contains("annotator_encoder") || j.contains("combiner")))
        throw std::invalid_argument(
            std::string("config: annotator_encoder/combiner apply to recommender families only, "
                        "not '") +
            family_name(a.family) + "'");
    if (j.contains("annotator_encoder"))
        a.annotator_encoder = annotator_encoder_from_json(j["annotator_encoder"]);
    if (j.contains("combiner")) a.combiner = combiner_from_json(j["combiner"]);
    return a;
}

template <typename J>
J training_to_json(const TrainConfig& t) {
    J j;
    j["learning_rate"] = t.learning_rate;
    if (t.batch_size) j["batch_size"] = *t.batch_size;
    if (t.epochs) j["epochs"] = *t.epochs;
    if (t.max_tokens) j["max_tokens"] = *t.max_tokens;
    j["seeds"] = t.seeds;
    return j;
}

inline TrainConfig training_from_json(const nlohmann::json& j) {
    TrainConfig t;
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    if (j.contains("batch_size")) t.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("epochs")) t.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("max_tokens")) t.max_tokens = j["max_tokens"].get<std::size_t>();
    if (j.contains("seeds")) t.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    return t;
}

} // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    const nlohmann::json& data = j.at("data");
    if (data.contains("dataset")) c.dataset_path = data["dataset"].get<std::string>();
    if (data.contains("synthetic")) {
        c.synthetic = synthetic_spec_from_json(data["synthetic"]);
        c.synthetic_seed = data.value("synthetic_seed", std::uint64_t{1});
    }
    c.architecture = detail::architecture_from_json(j.at("architecture"));
    if (j.contains("training")) c.training = detail::training_from_json(j["training"]);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("report_formats"))
        c.report_formats = j["report_formats"].get<std::vector<std::string>>();
    c.validate();
    return c;
}

template <typename J = nlohmann::ordered_json>
J config_to_json(const ExperimentConfig& c) {
    J j;
    J data;
    if (c.dataset_path) data["dataset"] = *c.dataset_path;
    if (c.synthetic) {
        data["synthetic"] = synthetic_spec_to_json(*c.synthetic);
        data["synthetic_seed"] = c.synthetic_seed;
    }
    j["data"] = std::move(data);
    j["architecture"] = detail::architecture_to_json<J>(c.architecture);
    j["training"] = detail::training_to_json<J>(c.training);
    j["output_dir"] = c.output_dir;
    j["report_formats"] = c.report_formats;
    return j;
}

/// Canonical identity of an experiment: sorted-key compact JSON with the
/// run-irrelevant fields (seed list, output directory, report formats)
/// removed, hashed to 16 hex digits. Runs that differ only in those fields
/// share an output tree.
inline std::string config_hash(const ExperimentConfig& c) {
    nlohmann::json j = config_to_json<nlohmann::json>(c); // plain json sorts keys
    j.erase("output_dir");
    j.erase("report_formats");
    j["training"].erase("seeds");
    std::string canonical = j.dump();
    std::uint64_t h = fnv1a64(canonical);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config: " + path.string() + ": " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config: " + path.string() + ": schema error: " + e.what());
    }
}

} // namespace perspectra
