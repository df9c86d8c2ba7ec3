#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "perspectra/dataset.hpp"
#include "perspectra/synthetic.hpp"

using namespace perspectra;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("perspectra_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

const char* kMeta = R"({"k": 3, "labels": ["neg", "neu", "pos"],
                        "annotators": ["alice", "bob", "cara"], "language": "en"})";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

} // namespace

TEST_CASE("load parses splits, pairs, and annotator indices") {
    TempDir dir("load");
    write_file(dir.path / "meta.json", kMeta);
    write_file(dir.path / "data.jsonl",
               R"({"id": "a", "split": "train", "text": "Hello", "text_pair": null, "annotations": {"alice": "neg", "cara": "pos"}})"
               "\n"
               R"({"id": "b", "split": "dev", "text": "Yes", "text_pair": "No", "annotations": {"bob": "neu"}})"
               "\n");
    Dataset d = load_dataset(dir.path);
    REQUIRE(d.meta.class_count == 3);
    REQUIRE(d.meta.annotators == std::vector<std::string>{"alice", "bob", "cara"});
    REQUIRE(d.instances.size() == 2);
    const Instance* a = d.find("a");
    REQUIRE(a->split == Split::Train);
    REQUIRE(!a->text_pair);
    REQUIRE(a->annotations == std::map<std::size_t, std::size_t>{{0, 0}, {2, 2}});
    const Instance* b = d.find("b");
    REQUIRE(b->split == Split::Dev);
    REQUIRE(b->text_pair == "No");
    REQUIRE(d.annotation_count() == 3);
    REQUIRE(d.has_text_pairs());
}

TEST_CASE("abstain annotations are dropped at load") {
    TempDir dir("abstain");
    write_file(dir.path / "meta.json", kMeta);
    write_file(dir.path / "data.jsonl",
               R"({"id": "a", "split": "train", "text": "t", "text_pair": null, "annotations": {"alice": "abstain", "bob": "pos"}})"
               "\n");
    Dataset d = load_dataset(dir.path);
    REQUIRE(d.instances[0].annotations == std::map<std::size_t, std::size_t>{{1, 2}});
}

TEST_CASE("instances with no labels after abstain filtering are dropped") {
    TempDir dir("allabstain");
    write_file(dir.path / "meta.json", kMeta);
    write_file(dir.path / "data.jsonl",
               R"({"id": "a", "split": "train", "text": "t", "text_pair": null, "annotations": {"alice": "abstain"}})"
               "\n"
               R"({"id": "b", "split": "train", "text": "u", "text_pair": null, "annotations": {"bob": "neg"}})"
               "\n");
    Dataset d = load_dataset(dir.path);
    REQUIRE(d.instances.size() == 1);
    REQUIRE(d.instances[0].id == "b");
}

TEST_CASE("loader errors carry file and line") {
    TempDir dir("errors");
    write_file(dir.path / "meta.json", kMeta);

    SECTION("unknown annotator") {
        write_file(dir.path / "data.jsonl",
                   R"({"id": "a", "split": "train", "text": "t", "text_pair": null, "annotations": {"mallory": "neg"}})"
                   "\n");
        try {
            load_dataset(dir.path);
            FAIL("expected error");
        } catch (const std::exception& e) {
            std::string msg = e.what();
            REQUIRE(msg.find("data.jsonl:1") != std::string::npos);
            REQUIRE(msg.find("mallory") != std::string::npos);
        }
    }
    SECTION("unknown label") {
        write_file(dir.path / "data.jsonl",
                   R"({"id": "a", "split": "train", "text": "t", "text_pair": null, "annotations": {"alice": "meh"}})"
                   "\n");
        REQUIRE_THROWS_WITH(load_dataset(dir.path), Catch::Matchers::ContainsSubstring("meh"));
    }
    SECTION("duplicate id reports the second line") {
        write_file(dir.path / "data.jsonl",
                   R"({"id": "a", "split": "train", "text": "t", "text_pair": null, "annotations": {"alice": "neg"}})"
                   "\n"
                   R"({"id": "a", "split": "train", "text": "u", "text_pair": null, "annotations": {"bob": "pos"}})"
                   "\n");
        try {
            load_dataset(dir.path);
            FAIL("expected error");
        } catch (const std::exception& e) {
            REQUIRE(std::string(e.what()).find("data.jsonl:2") != std::string::npos);
        }
    }
    SECTION("bad split") {
        write_file(dir.path / "data.jsonl",
                   R"({"id": "a", "split": "validation", "text": "t", "text_pair": null, "annotations": {"alice": "neg"}})"
                   "\n");
        REQUIRE_THROWS(load_dataset(dir.path));
    }
    SECTION("missing meta") {
        fs::remove(dir.path / "meta.json");
        REQUIRE_THROWS(load_dataset(dir.path));
    }
}

TEST_CASE("save then load is the identity and saves are canonical") {
    SyntheticResult r = generate_synthetic(default_synthetic_spec(), 33);
    TempDir dir("roundtrip");
    save_dataset(r.dataset, dir.path);
    Dataset back = load_dataset(dir.path);
    REQUIRE(back.meta.class_count == r.dataset.meta.class_count);
    REQUIRE(back.meta.annotators == r.dataset.meta.annotators);
    REQUIRE(back.instances.size() == r.dataset.instances.size());
    for (std::size_t i = 0; i < back.instances.size(); ++i) {
        REQUIRE(back.instances[i].id == r.dataset.instances[i].id);
        REQUIRE(back.instances[i].split == r.dataset.instances[i].split);
        REQUIRE(back.instances[i].text == r.dataset.instances[i].text);
        REQUIRE(back.instances[i].text_pair == r.dataset.instances[i].text_pair);
        REQUIRE(back.instances[i].annotations == r.dataset.instances[i].annotations);
    }

    // canonical bytes: second save of the reloaded data is identical
    TempDir dir2("roundtrip2");
    save_dataset(back, dir2.path);
    REQUIRE(slurp(dir.path / "data.jsonl") == slurp(dir2.path / "data.jsonl"));
    REQUIRE(slurp(dir.path / "meta.json") == slurp(dir2.path / "meta.json"));
}

TEST_CASE("majority vote: plurality, ties to the lowest class and flagged") {
    REQUIRE(aggregate_majority({{0, 1}, {1, 1}, {2, 0}}, 3).label == 1);
    REQUIRE(!aggregate_majority({{0, 1}, {1, 1}, {2, 0}}, 3).tie);

    MajorityLabel t = aggregate_majority({{0, 2}, {1, 0}}, 3);
    REQUIRE(t.label == 0); // 0 and 2 tie, lowest wins
    REQUIRE(t.tie);

    MajorityLabel solo = aggregate_majority({{4, 2}}, 3);
    REQUIRE(solo.label == 2);
    REQUIRE(!solo.tie);

    REQUIRE_THROWS_AS(aggregate_majority({}, 3), std::invalid_argument);
    REQUIRE_THROWS_AS(aggregate_majority({{0, 7}}, 3), std::invalid_argument);
}

TEST_CASE("annotator views partition the annotations") {
    SyntheticResult r = generate_synthetic(default_synthetic_spec(), 5);
    const Dataset& d = r.dataset;
    std::size_t across_views = 0;
    for (std::size_t a = 0; a < d.meta.annotators.size(); ++a) {
        auto view = annotator_view(d, a);
        across_views += view.size();
        for (const ViewItem& item : view) {
            REQUIRE(item.instance->annotations.count(a) == 1);
            REQUIRE(item.label == item.instance->annotations.at(a));
        }
    }
    REQUIRE(across_views == d.annotation_count());

    auto test_only = annotator_view(d, 0, Split::Test);
    for (const ViewItem& item : test_only) REQUIRE(item.instance->split == Split::Test);
}

TEST_CASE("synthetic generation is deterministic and spec-shaped") {
    SyntheticSpec spec = default_synthetic_spec();
    SyntheticResult a = generate_synthetic(spec, 99);
    SyntheticResult b = generate_synthetic(spec, 99);
    SyntheticResult c = generate_synthetic(spec, 100);

    REQUIRE(a.dataset.instances.size() == spec.train_size + spec.dev_size + spec.test_size);
    REQUIRE(a.dataset.split_instances(Split::Train).size() == spec.train_size);
    REQUIRE(a.dataset.split_instances(Split::Dev).size() == spec.dev_size);
    REQUIRE(a.dataset.split_instances(Split::Test).size() == spec.test_size);
    REQUIRE(a.dataset.meta.annotators.size() == 5);

    for (std::size_t i = 0; i < a.dataset.instances.size(); ++i) {
        REQUIRE(a.dataset.instances[i].text == b.dataset.instances[i].text);
        REQUIRE(a.dataset.instances[i].annotations == b.dataset.instances[i].annotations);
    }
    bool any_diff = false;
    for (std::size_t i = 0; i < a.dataset.instances.size() && !any_diff; ++i)
        any_diff = a.dataset.instances[i].text != c.dataset.instances[i].text;
    REQUIRE(any_diff);

    // every instance has at least one annotation; token counts within bounds
    for (const Instance& inst : a.dataset.instances) {
        REQUIRE(!inst.annotations.empty());
        auto toks = tokenize(inst.text);
        REQUIRE(toks.size() >= spec.min_tokens);
        REQUIRE(toks.size() <= spec.max_tokens);
    }
}

TEST_CASE("densities control annotation sparsity") {
    SyntheticSpec spec = default_synthetic_spec();
    SyntheticResult r = generate_synthetic(spec, 1);
    std::vector<std::size_t> counts(5, 0);
    for (const Instance& inst : r.dataset.instances)
        for (const auto& [a, lbl] : inst.annotations) ++counts[a];
    std::size_t n = r.dataset.instances.size();
    // dense annotators label everything, sparse ones roughly their density share
    REQUIRE(counts[0] == n);
    REQUIRE(counts[1] == n);
    REQUIRE(counts[2] == n);
    REQUIRE(std::abs(static_cast<double>(counts[3]) / n - 0.35) < 0.06);
    REQUIRE(std::abs(static_cast<double>(counts[4]) / n - 0.15) < 0.05);
}

TEST_CASE("zero flip rate reproduces the oracle's noiseless labels") {
    SyntheticSpec spec = default_synthetic_spec();
    spec.flip_rates.assign(5, 0.0);
    SyntheticResult r = generate_synthetic(spec, 17);
    for (const Instance& inst : r.dataset.instances)
        for (const auto& [a, label] : inst.annotations)
            REQUIRE(label == r.oracle.noiseless_label(inst.text, a));
    for (double acc : r.oracle.bayes_accuracy()) REQUIRE(acc == 1.0);
}

TEST_CASE("flipped labels deviate from the oracle at roughly the flip rate") {
    SyntheticSpec spec = default_synthetic_spec();
    SyntheticResult r = generate_synthetic(spec, 21);
    std::size_t flips = 0, total = 0;
    for (const Instance& inst : r.dataset.instances)
        for (const auto& [a, label] : inst.annotations) {
            ++total;
            if (label != r.oracle.noiseless_label(inst.text, a)) ++flips;
        }
    double rate = static_cast<double>(flips) / static_cast<double>(total);
    REQUIRE(rate == Catch::Approx(0.1).margin(0.03));
}

TEST_CASE("systematic bias makes annotators disagree on keyworded texts") {
    SyntheticSpec spec = default_synthetic_spec();
    spec.keywords_per_text = 1; // one keyword -> disagreement is purely the bias table
    spec.flip_rates.assign(5, 0.0);
    spec.densities.assign(5, 1.0);
    SyntheticResult r = generate_synthetic(spec, 3);
    // annotator 1 relabels kw00 texts as class 1 while annotator 0 reads the shared table
    bool saw_disagreement = false;
    for (const Instance& inst : r.dataset.instances) {
        if (inst.text.find("kw00") == std::string::npos) continue;
        REQUIRE(inst.annotations.at(0) == 0);
        REQUIRE(inst.annotations.at(1) == 1);
        saw_disagreement = true;
    }
    REQUIRE(saw_disagreement);
}

TEST_CASE("synthetic spec json round trip with adaptive defaults") {
    nlohmann::json j = {{"annotator_count", 2}, {"class_count", 4}};
    SyntheticSpec s = synthetic_spec_from_json(j);
    REQUIRE(s.annotator_count == 2);
    REQUIRE(s.class_count == 4);
    REQUIRE(s.biases.size() == 2);
    REQUIRE(s.flip_rates.size() == 2);
    REQUIRE(s.densities.size() == 2);
    for (const auto& [kw, scores] : s.keyword_scores) REQUIRE(scores.size() == 4);
    REQUIRE_NOTHROW(generate_synthetic(s, 1));

    // full round trip through to_json preserves the spec
    SyntheticSpec base = default_synthetic_spec();
    SyntheticSpec again = synthetic_spec_from_json(synthetic_spec_to_json(base));
    REQUIRE(again.keyword_scores == base.keyword_scores);
    REQUIRE(again.biases == base.biases);
    REQUIRE(again.densities == base.densities);

    // inconsistent explicit tables still rejected
    nlohmann::json bad = {{"annotator_count", 3}, {"flip_rates", {0.1, 0.1}}};
    REQUIRE_THROWS_AS(synthetic_spec_from_json(bad), std::invalid_argument);
}

TEST_CASE("no-annotation draws fall back to the densest annotator") {
    SyntheticSpec spec = default_synthetic_spec();
    spec.annotator_count = 2;
    spec.biases.resize(2);
    spec.flip_rates = {0.0, 0.0};
    spec.densities = {0.9, 0.05}; // joint miss probability is noticeable
    spec.annotator_names.clear();
    spec.label_names.clear();
    SyntheticResult r = generate_synthetic(spec, 77);
    for (const Instance& inst : r.dataset.instances) REQUIRE(!inst.annotations.empty());
}
