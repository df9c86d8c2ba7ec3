#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "perspectra/architecture.hpp"
#include "perspectra/evaluation.hpp"
#include "perspectra/rng.hpp"

using namespace perspectra;

namespace {

// majority model whose final projection is zeroed: uniform probabilities,
// argmax ties resolve to class 0 -> a deterministic constant-0 predictor
Model constant_zero_predictor(std::size_t k) {
    ArchitectureSpec s;
    s.family = Family::Majority;
    s.annotator_count = 1;
    s.class_count = k;
    s.text_encoder.output_dim = 4;
    s.text_encoder.vocab_or_bucket_size = 16;
    Model m = build_model(s, 1);
    for (double& v : m.params.at("head.0.out.W").data) v = 0.0;
    for (double& v : m.params.at("head.0.out.b").data) v = 0.0;
    return m;
}

Instance make_instance(std::string id, Split split, std::string text,
                       std::map<std::size_t, std::size_t> ann) {
    Instance i;
    i.id = std::move(id);
    i.split = split;
    i.text = std::move(text);
    i.annotations = std::move(ann);
    return i;
}

EvaluationReport report_with(double avg, const std::string& hash) {
    EvaluationReport r;
    r.per_annotator_f1 = {avg, avg};
    r.annotator_average = avg;
    r.min_f1 = avg;
    r.max_f1 = avg;
    r.predicted_kappa = 0.5;
    r.baseline_per_annotator = {30.0, 30.0};
    r.baseline_average = 30.0;
    r.config_hash = hash;
    return r;
}

} // namespace

TEST_CASE("macro f1 worked examples") {
    REQUIRE(macro_f1({0, 1, 2, 1}, {0, 1, 2, 1}, 3) == 100.0);

    // class0 F = 2/3, class1 F = 0.8 -> mean 220/3
    REQUIRE(macro_f1({0, 0, 1, 1}, {0, 1, 1, 1}, 2) ==
            Catch::Approx(220.0 / 3.0).epsilon(1e-12));

    // constant predictor: class0 F = 0.8, class1 F = 0
    REQUIRE(macro_f1({0, 0, 1}, {0, 0, 0}, 2) == Catch::Approx(40.0).epsilon(1e-12));

    REQUIRE_THROWS_AS(macro_f1({0, 1}, {0}, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(macro_f1({}, {}, 2), std::invalid_argument);
}

TEST_CASE("macro f1 averages only classes present in gold or pred") {
    // class 2 never appears; K=5 must not dilute the mean
    double with_k3 = macro_f1({0, 0, 1}, {0, 0, 0}, 3);
    double with_k5 = macro_f1({0, 0, 1}, {0, 0, 0}, 5);
    REQUIRE(with_k3 == with_k5);
    REQUIRE(with_k3 == Catch::Approx(40.0).epsilon(1e-12));
}

TEST_CASE("macro f1 is invariant under consistent class relabeling") {
    Rng rng(derive_seed(31337, "relabel"));
    std::vector<std::size_t> gold, pred;
    for (int i = 0; i < 200; ++i) {
        gold.push_back(rng.bounded(3));
        pred.push_back(rng.bounded(3));
    }
    auto swap02 = [](std::vector<std::size_t> v) {
        for (std::size_t& x : v) x = x == 0 ? 2 : (x == 2 ? 0 : x);
        return v;
    };
    REQUIRE(macro_f1(gold, pred, 3) ==
            Catch::Approx(macro_f1(swap02(gold), swap02(pred), 3)).epsilon(1e-12));
}

TEST_CASE("fleiss kappa worked example evaluates to 11/20") {
    // items (A,A,A),(A,A,B),(B,B,B): P-bar = 7/9, category shares 5/9 and 4/9
    // give P-bar_e = 41/81, so the standard formula yields exactly 0.55.
    FleissResult r = fleiss_kappa({{0, 0, 0}, {0, 0, 1}, {1, 1, 1}}, 2);
    REQUIRE(r.kappa == Catch::Approx(0.55).epsilon(1e-12));
    REQUIRE(!r.exact_uniform);
}

TEST_CASE("identical predictions give kappa 1") {
    // two categories used across items, rows identical per item
    FleissResult r = fleiss_kappa({{0, 0, 0}, {1, 1, 1}, {0, 0, 0}}, 2);
    REQUIRE(r.kappa == 1.0);
    REQUIRE(!r.exact_uniform);
}

TEST_CASE("all-identical single category is flagged and reported as 1") {
    FleissResult r = fleiss_kappa({{1, 1}, {1, 1}}, 3);
    REQUIRE(r.kappa == 1.0);
    REQUIRE(r.exact_uniform);
}

TEST_CASE("independent uniform ratings give kappa near zero") {
    Rng rng(derive_seed(4242, "kappa_mc"));
    std::vector<std::vector<std::size_t>> matrix;
    for (int i = 0; i < 4000; ++i)
        matrix.push_back({rng.bounded(3), rng.bounded(3), rng.bounded(3)});
    REQUIRE(std::abs(fleiss_kappa(matrix, 3).kappa) < 0.05);
}

TEST_CASE("fleiss kappa rejects bad matrices") {
    REQUIRE_THROWS_AS(fleiss_kappa({}, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(fleiss_kappa({{0}}, 2), std::invalid_argument);          // 1 rater
    REQUIRE_THROWS_AS(fleiss_kappa({{0, 1}, {0}}, 2), std::invalid_argument);  // ragged
}

TEST_CASE("two-step scoring is per-annotator-first") {
    // Annotator 0 labels both test items 0; annotator 1 labels them 0 and 1.
    // A constant-0 predictor scores (100 + 33.33)/2 = 66.67 per-annotator-first,
    // but 42.86 if the annotations were pooled first - the orders disagree.
    Dataset d;
    d.meta.class_count = 2;
    d.meta.label_names = {"no", "yes"};
    d.meta.annotators = {"a0", "a1"};
    d.instances.push_back(make_instance("tr", Split::Train, "train text", {{0, 0}}));
    d.instances.push_back(make_instance("t1", Split::Test, "first", {{0, 0}, {1, 0}}));
    d.instances.push_back(make_instance("t2", Split::Test, "second", {{0, 0}, {1, 1}}));

    Model m = constant_zero_predictor(2);
    EvaluationReport rep = two_step_score(m, d);
    REQUIRE(rep.per_annotator_f1[0] == Catch::Approx(100.0).epsilon(1e-12));
    REQUIRE(rep.per_annotator_f1[1] == Catch::Approx(100.0 / 3.0).epsilon(1e-12));
    REQUIRE(rep.annotator_average == Catch::Approx(200.0 / 3.0).epsilon(1e-12));

    double pooled = macro_f1({0, 0, 0, 1}, {0, 0, 0, 0}, 2);
    REQUIRE(pooled == Catch::Approx(300.0 / 7.0).epsilon(1e-12));
    REQUIRE(rep.annotator_average != pooled);

    // average is exactly the mean; min <= average <= max
    REQUIRE(rep.min_f1 <= rep.annotator_average);
    REQUIRE(rep.annotator_average <= rep.max_f1);

    // constant predictor -> all rows identical -> flagged uniform kappa of 1
    REQUIRE(rep.predicted_kappa == 1.0);
    REQUIRE(rep.kappa_exact_uniform);
}

TEST_CASE("annotators without test items are warned and excluded") {
    Dataset d;
    d.meta.class_count = 2;
    d.meta.label_names = {"no", "yes"};
    d.meta.annotators = {"busy", "idle"};
    d.instances.push_back(make_instance("tr", Split::Train, "t", {{0, 0}}));
    d.instances.push_back(make_instance("te", Split::Test, "u", {{0, 1}}));

    ArchitectureSpec s;
    s.family = Family::SepHeads;
    s.annotator_count = 2;
    s.class_count = 2;
    s.text_encoder.output_dim = 4;
    s.text_encoder.vocab_or_bucket_size = 16;
    Model m = build_model(s, 2);
    EvaluationReport rep = two_step_score(m, d);
    REQUIRE(rep.excluded_annotators == std::vector<std::size_t>{1});
    REQUIRE(std::isnan(rep.per_annotator_f1[1]));
    REQUIRE(!std::isnan(rep.per_annotator_f1[0]));
    REQUIRE(rep.annotator_average == rep.per_annotator_f1[0]);
}

TEST_CASE("naive baseline predicts the most frequent aggregated train label") {
    Dataset d;
    d.meta.class_count = 2;
    d.meta.label_names = {"no", "yes"};
    d.meta.annotators = {"p", "q"};
    // aggregated train labels: 1, 1, 0 -> most frequent is 1
    d.instances.push_back(make_instance("r1", Split::Train, "a", {{0, 1}, {1, 1}}));
    d.instances.push_back(make_instance("r2", Split::Train, "b", {{0, 1}}));
    d.instances.push_back(make_instance("r3", Split::Train, "c", {{0, 0}, {1, 0}}));
    // balanced test gold per annotator
    d.instances.push_back(make_instance("t1", Split::Test, "d", {{0, 0}, {1, 1}}));
    d.instances.push_back(make_instance("t2", Split::Test, "e", {{0, 1}, {1, 0}}));

    BaselineResult base = naive_baseline(d);
    REQUIRE(base.label == 1);
    // constant-1 on gold {0,1}: class1 F = 2/3, class0 F = 0 -> 33.33
    REQUIRE(base.per_annotator[0] == Catch::Approx(100.0 / 3.0).epsilon(1e-12));
    REQUIRE(base.per_annotator[1] == Catch::Approx(100.0 / 3.0).epsilon(1e-12));
    REQUIRE(base.average == Catch::Approx(100.0 / 3.0).epsilon(1e-12));

    // most-frequent tie resolves to the lowest class index
    Dataset tie = d;
    tie.instances.erase(tie.instances.begin() + 1); // aggregated train labels now {1, 0}
    BaselineResult tied = naive_baseline(tie);
    REQUIRE(tied.label == 0);
}

TEST_CASE("aggregate_runs means and sample stds") {
    std::vector<EvaluationReport> runs{report_with(50.0, "h"), report_with(60.0, "h")};
    runs[0].seed = 1;
    runs[1].seed = 2;
    AggregateReport agg = aggregate_runs(runs);
    REQUIRE(agg.annotator_average.mean == Catch::Approx(55.0).epsilon(1e-12));
    REQUIRE(agg.annotator_average.std == Catch::Approx(std::sqrt(50.0)).epsilon(1e-12));
    REQUIRE(agg.seeds == std::vector<std::uint64_t>{1, 2});
    REQUIRE(agg.config_hash == "h");
    REQUIRE(agg.per_annotator.size() == 2);
    REQUIRE(agg.per_annotator[0].mean == Catch::Approx(55.0));

    AggregateReport single = aggregate_runs({report_with(50.0, "h")});
    REQUIRE(single.annotator_average.std == 0.0);

    std::vector<EvaluationReport> mixed{report_with(50.0, "h"), report_with(60.0, "other")};
    REQUIRE_THROWS_AS(aggregate_runs(mixed), std::invalid_argument);
    REQUIRE_THROWS_AS(aggregate_runs({}), std::invalid_argument);
}

TEST_CASE("report json round trip preserves NaN markers") {
    EvaluationReport r = report_with(42.0, "deadbeefdeadbeef");
    r.per_annotator_f1.push_back(std::numeric_limits<double>::quiet_NaN());
    r.excluded_annotators = {2};
    r.seed = 99;
    EvaluationReport back = report_from_json(report_to_json(r));
    REQUIRE(back.annotator_average == r.annotator_average);
    REQUIRE(back.per_annotator_f1.size() == 3);
    REQUIRE(std::isnan(back.per_annotator_f1[2]));
    REQUIRE(back.excluded_annotators == r.excluded_annotators);
    REQUIRE(back.seed == 99);
    REQUIRE(back.config_hash == r.config_hash);
    REQUIRE(back.predicted_kappa == r.predicted_kappa);
}

TEST_CASE("table generators emit one row per entry") {
    AggregateReport agg = aggregate_runs({report_with(50.0, "h"), report_with(60.0, "h")});
    std::vector<NamedAggregate> rows{{"share_rec", "toy", agg}, {"majority", "toy", agg}};

    std::string csv = results_table_csv(rows);
    REQUIRE(csv.find("model,task,f1_mean,f1_std,predicted_kappa") == 0);
    REQUIRE(csv.find("share_rec,toy,") != std::string::npos);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);

    std::string range_csv = annotator_range_table_csv(rows);
    REQUIRE(range_csv.find("model,min,max") == 0);
    REQUIRE(std::count(range_csv.begin(), range_csv.end(), '\n') == 3);

    std::string md = results_table_markdown(rows);
    REQUIRE(md.find("| share_rec |") != std::string::npos);
    std::string range_md = annotator_range_table_markdown(rows);
    REQUIRE(range_md.find("| majority |") != std::string::npos);

    REQUIRE(annotator_level_min(agg) == Catch::Approx(55.0));
    REQUIRE(annotator_level_max(agg) == Catch::Approx(55.0));
}

TEST_CASE("format_mean_std renders the table convention") {
    REQUIRE(format_mean_std(MeanStd{26.14, 0.0}) == "26.14 ± 0.00");
    REQUIRE(format_mean_std(MeanStd{55.0, std::sqrt(50.0)}) == "55.00 ± 7.07");
}
