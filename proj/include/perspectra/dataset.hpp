#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "perspectra/tensor.hpp"

namespace perspectra {

enum class Split { Train, Dev, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Dev: return "dev";
        case Split::Test: return "test";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "dev") return Split::Dev;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split '" + s + "'");
}

/// One labeled instance. `annotations` maps annotator index -> class index and
/// is sparse: only the annotators who labeled this instance appear. Abstains
/// are already dropped at load time.
struct Instance {
    std::string id;
    Split split = Split::Train;
    std::string text;
    std::optional<std::string> text_pair;
    std::map<std::size_t, std::size_t> annotations;
};

struct DatasetMeta {
    std::size_t class_count = 0;
    std::vector<std::string> label_names;
    std::vector<std::string> annotators; // order defines annotator indices
    std::string language = "en";

    std::optional<std::size_t> label_index(const std::string& name) const {
        for (std::size_t i = 0; i < label_names.size(); ++i)
            if (label_names[i] == name) return i;
        return std::nullopt;
    }

    std::optional<std::size_t> annotator_index(const std::string& name) const {
        for (std::size_t i = 0; i < annotators.size(); ++i)
            if (annotators[i] == name) return i;
        return std::nullopt;
    }

    void validate() const {
        require(class_count >= 2, "dataset meta: k must be >= 2");
        require(label_names.size() == class_count,
                "dataset meta: labels list must have exactly k entries");
        require(!annotators.empty(), "dataset meta: annotator registry must not be empty");
    }
};

struct Dataset {
    DatasetMeta meta;
    std::vector<Instance> instances;

    std::vector<const Instance*> split_instances(Split s) const {
        std::vector<const Instance*> out;
        for (const Instance& inst : instances)
            if (inst.split == s) out.push_back(&inst);
        return out;
    }

    const Instance* find(const std::string& id) const {
        for (const Instance& inst : instances)
            if (inst.id == id) return &inst;
        return nullptr;
    }

    std::size_t annotation_count() const {
        std::size_t n = 0;
        for (const Instance& inst : instances) n += inst.annotations.size();
        return n;
    }

    bool has_text_pairs() const {
        for (const Instance& inst : instances)
            if (inst.text_pair) return true;
        return false;
    }
};

/// Plurality vote over one instance's annotations; ties go to the lowest class
/// index and are flagged so reports can exclude them.
struct MajorityLabel {
    std::size_t label = 0;
    bool tie = false;
};

inline MajorityLabel aggregate_majority(const std::map<std::size_t, std::size_t>& annotations,
                                        std::size_t class_count) {
    require(!annotations.empty(), "aggregate_majority: empty annotation map");
    std::vector<std::size_t> counts(class_count, 0);
    for (const auto& [annotator, label] : annotations) {
        require(label < class_count, "aggregate_majority: class index out of range");
        ++counts[label];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < class_count; ++c)
        if (counts[c] > counts[best]) best = c;
    bool tie = false;
    for (std::size_t c = 0; c < class_count; ++c)
        if (c != best && counts[c] == counts[best]) tie = true;
    return {best, tie};
}

/// (instance, label) list for one annotator — the annotator-wise dataset split.
struct ViewItem {
    const Instance* instance = nullptr;
    std::size_t label = 0;
};

inline std::vector<ViewItem> annotator_view(const Dataset& d, std::size_t annotator_index) {
    require(annotator_index < d.meta.annotators.size(), "annotator_view: index out of range");
    std::vector<ViewItem> out;
    for (const Instance& inst : d.instances) {
        auto it = inst.annotations.find(annotator_index);
        if (it != inst.annotations.end()) out.push_back({&inst, it->second});
    }
    return out;
}

inline std::vector<ViewItem> annotator_view(const Dataset& d, std::size_t annotator_index,
                                            Split split) {
    std::vector<ViewItem> out;
    for (ViewItem v : annotator_view(d, annotator_index))
        if (v.instance->split == split) out.push_back(v);
    return out;
}

namespace detail {

[[noreturn]] inline void data_error(const std::filesystem::path& file, std::size_t line,
                                    const std::string& what) {
    throw std::runtime_error(concat(file.string(), ":", line, ": ", what));
}

} // namespace detail

/// Reads meta.json + data.jsonl from `dir`. Abstain markers are dropped per
/// instance; instances left with no annotations are dropped with a warning.
inline Dataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::path meta_path = dir / "meta.json";
    fs::path data_path = dir / "data.jsonl";
    if (!fs::exists(meta_path))
        throw std::runtime_error("dataset: missing " + meta_path.string());
    if (!fs::exists(data_path))
        throw std::runtime_error("dataset: missing " + data_path.string());

    Dataset d;
    {
        std::ifstream in(meta_path);
        nlohmann::json j = nlohmann::json::parse(in);
        d.meta.class_count = j.at("k").get<std::size_t>();
        d.meta.label_names = j.at("labels").get<std::vector<std::string>>();
        d.meta.annotators = j.at("annotators").get<std::vector<std::string>>();
        d.meta.language = j.value("language", "en");
        d.meta.validate();
    }

    std::ifstream in(data_path);
    std::string line;
    std::size_t line_no = 0;
    std::size_t dropped = 0;
    std::unordered_set<std::string> seen_ids;
    for (; std::getline(in, line); ) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            detail::data_error(data_path, line_no, std::string("bad JSON: ") + e.what());
        }
        Instance inst;
        try {
            inst.id = j.at("id").get<std::string>();
            inst.split = split_from_string(j.at("split").get<std::string>());
            inst.text = j.at("text").get<std::string>();
            if (j.contains("text_pair") && !j["text_pair"].is_null())
                inst.text_pair = j["text_pair"].get<std::string>();
            for (const auto& [annotator, label] : j.at("annotations").items()) {
                auto a = d.meta.annotator_index(annotator);
                if (!a) detail::data_error(data_path, line_no, "unknown annotator '" + annotator + "'");
                std::string label_str = label.get<std::string>();
                if (label_str == "abstain") continue;
                auto c = d.meta.label_index(label_str);
                if (!c) detail::data_error(data_path, line_no, "unknown label '" + label_str + "'");
                inst.annotations[*a] = *c;
            }
        } catch (const nlohmann::json::exception& e) {
            detail::data_error(data_path, line_no, std::string("bad instance: ") + e.what());
        }
        if (!seen_ids.insert(inst.id).second)
            detail::data_error(data_path, line_no, "duplicate instance id '" + inst.id + "'");
        if (inst.annotations.empty()) {
            ++dropped;
            continue;
        }
        d.instances.push_back(std::move(inst));
    }
    if (dropped > 0)
        std::cerr << "warning: dropped " << dropped << " instance(s) with no usable annotations ("
                  << data_path.string() << ")\n";
    return d;
}

/// Writes meta.json + data.jsonl in canonical field order so that loading and
/// re-serializing a dataset is the identity.
inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        nlohmann::ordered_json meta;
        meta["k"] = d.meta.class_count;
        meta["labels"] = d.meta.label_names;
        meta["annotators"] = d.meta.annotators;
        meta["language"] = d.meta.language;
        std::ofstream out(dir / "meta.json");
        out << meta.dump(2) << "\n";
    }
    std::ofstream out(dir / "data.jsonl");
    for (const Instance& inst : d.instances) {
        nlohmann::ordered_json j;
        j["id"] = inst.id;
        j["split"] = split_name(inst.split);
        j["text"] = inst.text;
        if (inst.text_pair) j["text_pair"] = *inst.text_pair;
        else j["text_pair"] = nullptr;
        nlohmann::ordered_json ann = nlohmann::ordered_json::object();
        for (const auto& [a, c] : inst.annotations) // std::map: registry-index order
            ann[d.meta.annotators.at(a)] = d.meta.label_names.at(c);
        j["annotations"] = std::move(ann);
        out << j.dump() << "\n";
    }
}

} // namespace perspectra
