#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "perspectra/architecture.hpp"

using namespace perspectra;

namespace {

ArchitectureSpec small_spec(Family family, std::size_t n = 3, std::size_t k = 3) {
    ArchitectureSpec s;
    s.family = family;
    s.annotator_count = n;
    s.class_count = k;
    s.text_encoder.output_dim = 6;
    s.text_encoder.vocab_or_bucket_size = 32;
    s.annotator_encoder.variant = AnnotatorEncoderVariant::Simple;
    s.annotator_encoder.embedding_dim = 4;
    s.annotator_encoder.dropout = 0.0;
    s.combiner.variant = CombinerVariant::Simple;
    s.combiner.dropout = 0.0;
    return s;
}

// sep_rec model with hand-set 1x1 encoders for exact coupling arithmetic
Model tiny_sep_rec(const std::vector<double>& weights, const std::vector<double>& biases,
                   double lambda, bool plus_shared = false) {
    ArchitectureSpec s;
    s.family = Family::SepRec;
    s.annotator_count = weights.size();
    s.class_count = 2;
    s.lambda = lambda;
    s.plus_shared = plus_shared;
    s.text_encoder.output_dim = 1;
    s.text_encoder.vocab_or_bucket_size = 1;
    s.annotator_encoder.variant = AnnotatorEncoderVariant::OneHot;
    s.combiner.variant = CombinerVariant::Simple;
    Model m = build_model(s, 1);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        std::string p = "text_enc." + std::to_string(i) + ".";
        m.params.at(p + "W").data[0] = weights[i];
        m.params.at(p + "b").data[0] = biases[i];
    }
    return m;
}

double total_abs(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += std::abs(v);
    return s;
}

} // namespace

TEST_CASE("family names round trip") {
    for (Family f : {Family::Majority, Family::PerAnnotator, Family::SepHeads, Family::ShareRec,
                     Family::SepRec})
        REQUIRE(family_from_string(family_name(f)) == f);
    REQUIRE_THROWS_AS(family_from_string("frankenmodel"), std::invalid_argument);
}

TEST_CASE("lambda and plus_shared are sep_rec-only knobs") {
    ArchitectureSpec s = small_spec(Family::ShareRec);
    s.lambda = 0.1;
    REQUIRE_THROWS_AS(s.validate(), std::invalid_argument);
    s.lambda = 0.0;
    s.plus_shared = true;
    REQUIRE_THROWS_AS(s.validate(), std::invalid_argument);
    s.plus_shared = false;
    REQUIRE_NOTHROW(s.validate());
    ArchitectureSpec r = small_spec(Family::SepRec);
    r.lambda = -0.5; // negative values are legal (decoupling)
    r.plus_shared = true;
    REQUIRE_NOTHROW(r.validate());
}

TEST_CASE("parameter layout per family") {
    auto prefixes = [](const Model& m) {
        std::set<std::string> blocks;
        for (const auto& e : m.params.entries()) {
            std::string name = e.name;
            std::size_t first = name.find('.');
            std::size_t second = name.find('.', first + 1);
            blocks.insert(name.substr(0, name.rfind('.', second) == std::string::npos
                                             ? first
                                             : second));
        }
        return blocks;
    };

    Model maj = build_model(small_spec(Family::Majority), 5);
    REQUIRE(text_encoder_prefixes(maj.spec) == std::vector<std::string>{"text_enc.0."});
    REQUIRE(head_prefixes(maj.spec) == std::vector<std::string>{"head.0."});

    Model per = build_model(small_spec(Family::PerAnnotator), 5);
    REQUIRE(text_encoder_prefixes(per.spec) ==
            std::vector<std::string>{"text_enc.0.", "text_enc.1.", "text_enc.2."});
    REQUIRE(head_prefixes(per.spec) ==
            std::vector<std::string>{"head.0.", "head.1.", "head.2."});

    Model sh = build_model(small_spec(Family::SepHeads), 5);
    REQUIRE(text_encoder_prefixes(sh.spec) == std::vector<std::string>{"text_enc.0."});
    REQUIRE(head_prefixes(sh.spec).size() == 3);

    Model srec = build_model(small_spec(Family::ShareRec), 5);
    REQUIRE(text_encoder_prefixes(srec.spec) == std::vector<std::string>{"text_enc.0."});
    REQUIRE(head_prefixes(srec.spec).empty());
    REQUIRE(!srec.params.names_with_prefix("user_enc.").empty());
    REQUIRE(!srec.params.names_with_prefix("combiner.").empty());

    ArchitectureSpec plus = small_spec(Family::SepRec);
    plus.plus_shared = true;
    REQUIRE(text_encoder_prefixes(plus) ==
            std::vector<std::string>{"text_enc.0.", "text_enc.1.", "text_enc.2.",
                                     "text_enc.shared."});
    (void)prefixes;
}

TEST_CASE("single linear layers report the documented parameter counts") {
    ParameterSet p;
    Rng rng(derive_seed(1, "count"));
    init_linear_params(p, "wide.", 768, 768, rng);
    REQUIRE(p.total_scalars() == 590592);
    ParameterSet q;
    init_linear_params(q, "proj.", 768, 3, rng);
    REQUIRE(q.total_scalars() == 2307);
}

TEST_CASE("count_parameters groups by block and sums to the total") {
    Model m = build_model(small_spec(Family::PerAnnotator), 5);
    ParameterBreakdown br = count_parameters(m);
    REQUIRE(br.total == m.params.total_scalars());
    std::size_t from_blocks = 0;
    for (const auto& [block, n] : br.blocks) from_blocks += n;
    REQUIRE(from_blocks == br.total);
    auto block_size = [&](const std::string& want) -> std::size_t {
        for (const auto& [block, n] : br.blocks)
            if (block == want) return n;
        FAIL("missing block " + want);
        return 0;
    };
    REQUIRE(block_size("head.2") > 0);
    // replicated encoders report the same size
    REQUIRE(block_size("text_enc.0") == block_size("text_enc.1"));
}

TEST_CASE("template init starts replicated blocks identical") {
    Model m = build_model(small_spec(Family::PerAnnotator), 11);
    REQUIRE(m.params.at("text_enc.0.W").data == m.params.at("text_enc.1.W").data);
    REQUIRE(m.params.at("text_enc.1.W").data == m.params.at("text_enc.2.W").data);
    REQUIRE(m.params.at("head.0.l0.W").data == m.params.at("head.2.l0.W").data);

    // same role, same seed -> same tensors across families where shapes coincide
    Model maj = build_model(small_spec(Family::Majority), 11);
    REQUIRE(maj.params.at("text_enc.0.W").data == m.params.at("text_enc.0.W").data);
    ArchitectureSpec plus = small_spec(Family::SepRec);
    plus.plus_shared = true;
    Model sr = build_model(plus, 11);
    REQUIRE(sr.params.at("text_enc.shared.W").data == m.params.at("text_enc.0.W").data);
}

TEST_CASE("build_model is deterministic in the seed") {
    Model a = build_model(small_spec(Family::ShareRec), 3);
    Model b = build_model(small_spec(Family::ShareRec), 3);
    Model c = build_model(small_spec(Family::ShareRec), 4);
    REQUIRE(a.params.at("combiner.out.W").data == b.params.at("combiner.out.W").data);
    REQUIRE(a.params.at("combiner.out.W").data != c.params.at("combiner.out.W").data);
}

TEST_CASE("predictions are probability rows") {
    for (Family f : {Family::Majority, Family::PerAnnotator, Family::SepHeads, Family::ShareRec,
                     Family::SepRec}) {
        Model m = build_model(small_spec(f), 21);
        auto rows = predict_all(m, "some words to classify");
        REQUIRE(rows.size() == 3);
        for (const auto& row : rows) {
            REQUIRE(row.size() == 3);
            double total = 0.0;
            for (double p : row) {
                REQUIRE(p > 0.0);
                total += p;
            }
            REQUIRE(total == Catch::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("majority is annotator-invariant by construction") {
    Model m = build_model(small_spec(Family::Majority), 33);
    auto rows = predict_all(m, "the quick brown fox");
    REQUIRE(rows[0] == rows[1]);
    REQUIRE(rows[1] == rows[2]);
    REQUIRE(predict(m, "the quick brown fox", 2) == rows[0]);
}

TEST_CASE("zeroed final projection predicts the uniform distribution") {
    Model m = build_model(small_spec(Family::Majority), 5);
    for (double& v : m.params.at("head.0.out.W").data) v = 0.0;
    for (double& v : m.params.at("head.0.out.b").data) v = 0.0;
    for (double p : predict(m, "anything at all", 0))
        REQUIRE(p == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("per-annotator heads diverge once a head is perturbed") {
    Model m = build_model(small_spec(Family::SepHeads), 7);
    auto before = predict_all(m, "shared text");
    REQUIRE(before[0] == before[1]); // identical init
    m.params.at("head.1.out.b").data[0] += 1.0;
    auto after = predict_all(m, "shared text");
    REQUIRE(after[0] != after[1]);
    REQUIRE(after[0] == before[0]); // untouched heads unaffected
}

TEST_CASE("sep_heads gradients never cross heads") {
    ArchitectureSpec s = small_spec(Family::SepHeads);
    Model m = build_model(s, 9);
    Graph g;
    ParamBinder bind(g, m.params);
    TextFeatures feats = featurize_text(s.text_encoder, "gradient isolation text");
    NodeId logits = model_forward(g, bind, s, feats, 1);
    std::vector<double> w(s.class_count, 1.0);
    g.backward(g.cross_entropy_weighted(logits, 0, w));
    auto grads = bind.gradients();
    for (const auto& [name, grad] : grads) {
        REQUIRE(name.find("head.0.") == std::string::npos);
        REQUIRE(name.find("head.2.") == std::string::npos);
    }
    // the shared encoder and the routed head do receive gradient
    REQUIRE(total_abs(grads.at("text_enc.0.W")) > 0.0);
    REQUIRE(total_abs(grads.at("head.1.out.W")) > 0.0);
}

TEST_CASE("per_annotator shares zero tensors across annotators") {
    ArchitectureSpec s = small_spec(Family::PerAnnotator);
    Model m = build_model(s, 13);
    Graph g;
    ParamBinder bind(g, m.params);
    TextFeatures feats = featurize_text(s.text_encoder, "full isolation text");
    NodeId logits = model_forward(g, bind, s, feats, 2);
    std::vector<double> w(s.class_count, 1.0);
    g.backward(g.cross_entropy_weighted(logits, 1, w));
    for (const auto& [name, grad] : bind.gradients()) {
        bool own = name.rfind("text_enc.2.", 0) == 0 || name.rfind("head.2.", 0) == 0;
        REQUIRE(own);
    }
}

TEST_CASE("share_rec text activations are annotator-independent") {
    ArchitectureSpec s = small_spec(Family::ShareRec);
    Model m = build_model(s, 15);
    TextFeatures feats = featurize_text(s.text_encoder, "same trunk for everyone");
    Graph g(false);
    ParamBinder bind(g, m.params);
    ForwardTrace t0, t1;
    model_forward(g, bind, s, feats, 0, false, nullptr, &t0);
    model_forward(g, bind, s, feats, 1, false, nullptr, &t1);
    REQUIRE(g.value(t0.text_vec).data == g.value(t1.text_vec).data);
    REQUIRE(t0.has_user);
    REQUIRE(g.value(t0.user_vec).data != g.value(t1.user_vec).data);
}

TEST_CASE("plus_shared fuses the shared encoder by addition") {
    ArchitectureSpec s = small_spec(Family::SepRec);
    s.plus_shared = true;
    Model m = build_model(s, 17);
    TextFeatures feats = featurize_text(s.text_encoder, "fusion check");
    auto text_vec = [&](const Model& model) {
        Graph g(false);
        ParamBinder bind(g, model.params);
        ForwardTrace t;
        model_forward(g, bind, model.spec, feats, 0, false, nullptr, &t);
        return g.value(t.text_vec).data;
    };
    std::vector<double> both = text_vec(m);

    Model no_shared = m;
    for (const std::string& n : no_shared.params.names_with_prefix("text_enc.shared."))
        for (double& v : no_shared.params.at(n).data) v = 0.0;
    std::vector<double> own_only = text_vec(no_shared);

    Model no_own = m;
    for (const std::string& n : no_own.params.names_with_prefix("text_enc.0."))
        for (double& v : no_own.params.at(n).data) v = 0.0;
    std::vector<double> shared_only = text_vec(no_own);

    for (std::size_t i = 0; i < both.size(); ++i)
        REQUIRE(both[i] == Catch::Approx(own_only[i] + shared_only[i]).margin(1e-12));
}

TEST_CASE("coupling penalty worked examples") {
    // two encoders with weight vectors [1,2] and [1,4], tied biases:
    // sum of squared diffs = 4, one pair, lambda 0.5 -> 2.0
    {
        ArchitectureSpec s;
        s.family = Family::SepRec;
        s.annotator_count = 2;
        s.class_count = 2;
        s.lambda = 0.5;
        s.text_encoder.output_dim = 2;
        s.text_encoder.vocab_or_bucket_size = 1;
        s.annotator_encoder.variant = AnnotatorEncoderVariant::OneHot;
        s.combiner.variant = CombinerVariant::Simple;
        Model m = build_model(s, 1);
        m.params.at("text_enc.0.W").data = {1.0, 2.0};
        m.params.at("text_enc.1.W").data = {1.0, 4.0};
        m.params.at("text_enc.0.b").data = {0.0, 0.0};
        m.params.at("text_enc.1.b").data = {0.0, 0.0};
        REQUIRE(coupling_penalty(m, 0.5) == Catch::Approx(2.0).epsilon(1e-12));
    }

    // three encoders W = 0, 1, 3 with tied biases: pairwise squares 1+9+4 over 3 pairs
    Model c = tiny_sep_rec({0.0, 1.0, 3.0}, {0.0, 0.0, 0.0}, 1.0);
    REQUIRE(coupling_penalty(c, 1.0) == Catch::Approx(14.0 / 3.0).epsilon(1e-12));
    REQUIRE(mean_pairwise_encoder_distance(c) == Catch::Approx(14.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("coupling penalty matches a brute-force oracle on random layouts") {
    ArchitectureSpec s = small_spec(Family::SepRec);
    s.lambda = 0.7;
    Rng rng(derive_seed(99, "couple"));
    for (int trial = 0; trial < 5; ++trial) {
        Model m = build_model(s, 1000 + trial);
        for (auto& e : m.params.entries())
            for (double& v : e.value.data) v = rng.uniform(-2.0, 2.0);

        double brute = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < s.annotator_count; ++i)
            for (std::size_t j = i + 1; j < s.annotator_count; ++j) {
                ++pairs;
                for (const char* leaf : {"W", "b"}) {
                    const Tensor& wi =
                        m.params.at("text_enc." + std::to_string(i) + "." + leaf);
                    const Tensor& wj =
                        m.params.at("text_enc." + std::to_string(j) + "." + leaf);
                    for (std::size_t t = 0; t < wi.size(); ++t) {
                        double d = wi.data[t] - wj.data[t];
                        brute += d * d;
                    }
                }
            }
        brute *= s.lambda / static_cast<double>(pairs);
        REQUIRE(coupling_penalty(m, s.lambda) == Catch::Approx(brute).margin(1e-12));

        // lambda-linearity is exact
        REQUIRE(coupling_penalty(m, 2.0 * s.lambda) == 2.0 * coupling_penalty(m, s.lambda));
        REQUIRE(coupling_penalty(m, 0.0) == 0.0);

        // permutation symmetry: swapping two encoders leaves the value unchanged
        Model swapped = m;
        for (const char* leaf : {"W", "b"})
            std::swap(swapped.params.at(std::string("text_enc.0.") + leaf).data,
                      swapped.params.at(std::string("text_enc.2.") + leaf).data);
        REQUIRE(coupling_penalty(swapped, s.lambda) ==
                Catch::Approx(coupling_penalty(m, s.lambda)).margin(1e-12));
    }
}

TEST_CASE("coupling penalty ignores the plus_shared encoder") {
    Model m = tiny_sep_rec({1.0, 2.0}, {0.0, 0.0}, 1.0, /*plus_shared=*/true);
    double before = coupling_penalty(m, 1.0);
    m.params.at("text_enc.shared.W").data[0] = 1e6;
    REQUIRE(coupling_penalty(m, 1.0) == before);
}

TEST_CASE("coupling penalty gradient matches finite differences") {
    ArchitectureSpec s = small_spec(Family::SepRec);
    s.annotator_count = 3;
    Model m = build_model(s, 77);
    Rng rng(derive_seed(77, "couple_fd"));
    for (auto& e : m.params.entries())
        for (double& v : e.value.data) v = rng.uniform(-1.0, 1.0);

    Graph g;
    ParamBinder bind(g, m.params);
    NodeId pen = coupling_penalty_node(g, bind, s, 1.3);
    g.backward(pen);
    auto grads = bind.gradients();

    double h = 1e-6;
    for (const std::string& name :
         {std::string("text_enc.0.W"), std::string("text_enc.1.b"), std::string("text_enc.2.W")}) {
        Tensor& t = m.params.at(name);
        for (std::size_t i = 0; i < std::min<std::size_t>(t.size(), 5); ++i) {
            double orig = t.data[i];
            auto value_at = [&](double v) {
                t.data[i] = v;
                return coupling_penalty(m, 1.3);
            };
            double fd = (value_at(orig + h) - value_at(orig - h)) / (2 * h);
            t.data[i] = orig;
            REQUIRE(grads.at(name).data[i] == Catch::Approx(fd).margin(1e-5));
        }
    }
}

TEST_CASE("coupling penalty requires sep_rec with at least two encoders") {
    Model share = build_model(small_spec(Family::ShareRec), 5);
    REQUIRE_THROWS_AS(coupling_penalty(share, 1.0), std::invalid_argument);
    ArchitectureSpec solo = small_spec(Family::SepRec);
    solo.annotator_count = 1;
    Model one = build_model(solo, 5);
    REQUIRE_THROWS_AS(coupling_penalty(one, 1.0), std::invalid_argument);
}

TEST_CASE("sep_rec +shared owns n+1 text encoders") {
    ArchitectureSpec s = small_spec(Family::SepRec);
    s.plus_shared = true;
    Model m = build_model(s, 3);
    std::size_t encoders = 0;
    for (const std::string& p : text_encoder_prefixes(s))
        if (!m.params.names_with_prefix(p).empty()) ++encoders;
    REQUIRE(encoders == s.annotator_count + 1);
}

TEST_CASE("every family backpropagates finite gradients end to end") {
    for (Family f : {Family::Majority, Family::PerAnnotator, Family::SepHeads, Family::ShareRec,
                     Family::SepRec}) {
        ArchitectureSpec s = small_spec(f);
        if (f == Family::SepRec) s.combiner.variant = CombinerVariant::DeepCross;
        Model m = build_model(s, 55);
        Graph g;
        ParamBinder bind(g, m.params);
        TextFeatures feats = featurize_text(s.text_encoder, "finite gradients everywhere");
        NodeId logits = model_forward(g, bind, s, feats, 0);
        std::vector<double> w(s.class_count, 1.0);
        NodeId loss = g.cross_entropy_weighted(logits, 2, w);
        if (f == Family::SepRec) loss = g.add(loss, coupling_penalty_node(g, bind, s, 0.4));
        g.backward(loss);
        for (const auto& [name, grad] : bind.gradients())
            for (double v : grad.data) REQUIRE(std::isfinite(v));
    }
}
