#pragma once

#include <optional>
#include <string>
#include <vector>

#include "perspectra/annotator_encoder.hpp"
#include "perspectra/combiner.hpp"
#include "perspectra/text_encoder.hpp"

namespace perspectra {

/// The architecture continuum, from fully annotator-agnostic to fully
/// annotator-specific:
///   majority       one text encoder + one head, trained on aggregated labels
///   sep_heads      one shared text encoder + one head per annotator
///   share_rec      one shared text encoder + user encoder + combiner
///   sep_rec        one text encoder per annotator + user encoder + combiner
///   per_annotator  n fully disjoint (encoder + head) models
enum class Family { Majority, PerAnnotator, SepHeads, ShareRec, SepRec };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::Majority: return "majority";
        case Family::PerAnnotator: return "per_annotator";
        case Family::SepHeads: return "sep_heads";
        case Family::ShareRec: return "share_rec";
        case Family::SepRec: return "sep_rec";
    }
    return "?";
}

inline Family family_from_string(const std::string& s) {
    if (s == "majority") return Family::Majority;
    if (s == "per_annotator") return Family::PerAnnotator;
    if (s == "sep_heads") return Family::SepHeads;
    if (s == "share_rec") return Family::ShareRec;
    if (s == "sep_rec") return Family::SepRec;
    throw std::invalid_argument("unknown architecture family '" + s + "'");
}

/// One point on the continuum. lambda weights the encoder-coupling penalty and
/// plus_shared adds an extra shared text encoder; both apply to sep_rec only.
struct ArchitectureSpec {
    Family family = Family::Majority;
    std::size_t annotator_count = 1;
    std::size_t class_count = 2;
    double lambda = 0.0;
    bool plus_shared = false;
    TextEncoderConfig text_encoder;
    AnnotatorEncoderConfig annotator_encoder;
    CombinerConfig combiner;

    bool is_rec() const { return family == Family::ShareRec || family == Family::SepRec; }

    std::size_t combiner_input_dim() const {
        return static_cast<std::size_t>(text_encoder.output_dim) +
               annotator_encoder.output_dim(annotator_count);
    }

    void validate() const {
        require(annotator_count >= 1, "architecture: annotator_count must be >= 1");
        require(class_count >= 2, "architecture: class_count must be >= 2");
        text_encoder.validate();
        if (family != Family::SepRec) {
            require(lambda == 0.0, "architecture: lambda applies to the sep_rec family only");
            require(!plus_shared,
                    "architecture: plus_shared applies to the sep_rec family only");
        }
        if (is_rec()) {
            annotator_encoder.validate();
            combiner.validate();
        }
    }
};

/// Prefixes of the text-encoder instances a family owns, in checkpoint order.
/// The optional shared encoder of sep_rec(+shared) is listed last.
inline std::vector<std::string> text_encoder_prefixes(const ArchitectureSpec& spec) {
    std::vector<std::string> out;
    if (spec.family == Family::PerAnnotator || spec.family == Family::SepRec) {
        for (std::size_t i = 0; i < spec.annotator_count; ++i)
            out.push_back("text_enc." + std::to_string(i) + ".");
        if (spec.family == Family::SepRec && spec.plus_shared) out.push_back("text_enc.shared.");
    } else {
        out.push_back("text_enc.0.");
    }
    return out;
}

inline std::vector<std::string> head_prefixes(const ArchitectureSpec& spec) {
    std::vector<std::string> out;
    if (spec.family == Family::Majority) {
        out.push_back("head.0.");
    } else if (spec.family == Family::PerAnnotator || spec.family == Family::SepHeads) {
        for (std::size_t i = 0; i < spec.annotator_count; ++i)
            out.push_back("head." + std::to_string(i) + ".");
    }
    return out;
}

struct Model {
    ArchitectureSpec spec;
    ParameterSet params;
};

namespace detail {

inline void copy_with_prefix(const ParameterSet& tmpl, ParameterSet& dst,
                             const std::string& prefix) {
    for (const ParameterSet::Entry& e : tmpl.entries()) dst.add(prefix + e.name, e.value);
}

} // namespace detail

/// Deterministic build. Every instance of a role (text encoder, head) is copied
/// from one seeded template, so multi-encoder families start with identical
/// encoders and families agree on initial weights wherever shapes agree.
inline Model build_model(const ArchitectureSpec& spec, std::uint64_t seed) {
    spec.validate();
    Model m{spec, {}};
    std::size_t text_dim = static_cast<std::size_t>(spec.text_encoder.output_dim);

    {
        ParameterSet tmpl;
        Rng rng(derive_seed(seed, "text_enc"));
        init_text_encoder_params(tmpl, "", spec.text_encoder, rng);
        for (const std::string& p : text_encoder_prefixes(spec))
            detail::copy_with_prefix(tmpl, m.params, p);
    }
    if (!spec.is_rec()) {
        ParameterSet tmpl;
        Rng rng(derive_seed(seed, "head"));
        init_linear_params(tmpl, "l0.", text_dim, text_dim, rng);
        init_linear_params(tmpl, "out.", text_dim, spec.class_count, rng);
        for (const std::string& p : head_prefixes(spec)) detail::copy_with_prefix(tmpl, m.params, p);
    } else {
        Rng urng(derive_seed(seed, "user_enc"));
        init_annotator_encoder_params(m.params, "user_enc.", spec.annotator_encoder,
                                      spec.annotator_count, urng);
        Rng crng(derive_seed(seed, "combiner"));
        init_combiner_params(m.params, "combiner.", spec.combiner, spec.combiner_input_dim(),
                             spec.class_count, crng);
    }
    return m;
}

/// Classification head: linear T->T, tanh, linear T->K.
inline NodeId head_forward(Graph& g, ParamBinder& bind, const std::string& prefix, NodeId x) {
    return linear(g, bind, prefix + "out.", g.tanh_act(linear(g, bind, prefix + "l0.", x)));
}

/// Intermediate nodes of one forward pass, for inspection and tests.
struct ForwardTrace {
    NodeId text_vec = 0;
    NodeId user_vec = 0;
    NodeId logits = 0;
    bool has_user = false;
};

/// Routes one (featurized text, annotator) pair through the family's wiring and
/// returns the logits node. majority ignores annotator_index.
inline NodeId model_forward(Graph& g, ParamBinder& bind, const ArchitectureSpec& spec,
                            const TextFeatures& feats, std::size_t annotator_index,
                            bool train_mode = false, Rng* dropout_rng = nullptr,
                            ForwardTrace* trace = nullptr) {
    if (spec.family != Family::Majority && annotator_index >= spec.annotator_count)
        throw std::invalid_argument(detail::concat("model_forward: annotator index ",
                                                   annotator_index, " out of range for ",
                                                   spec.annotator_count, " annotators"));
    std::string own_enc = (spec.family == Family::PerAnnotator || spec.family == Family::SepRec)
                              ? "text_enc." + std::to_string(annotator_index) + "."
                              : "text_enc.0.";
    NodeId tv = text_encoder_forward(g, bind, own_enc, spec.text_encoder, feats);
    if (spec.family == Family::SepRec && spec.plus_shared)
        tv = g.add(tv, text_encoder_forward(g, bind, "text_enc.shared.", spec.text_encoder, feats));

    NodeId logits;
    ForwardTrace t;
    t.text_vec = tv;
    if (spec.is_rec()) {
        NodeId uv = annotator_encoder_forward(g, bind, "user_enc.", spec.annotator_encoder,
                                              spec.annotator_count, annotator_index, train_mode,
                                              dropout_rng);
        t.user_vec = uv;
        t.has_user = true;
        logits = combiner_forward(g, bind, "combiner.", spec.combiner, tv, uv, train_mode,
                                  dropout_rng);
    } else {
        std::string head = spec.family == Family::Majority
                               ? "head.0."
                               : "head." + std::to_string(annotator_index) + ".";
        logits = head_forward(g, bind, head, tv);
    }
    t.logits = logits;
    if (trace) *trace = t;
    return logits;
}

/// Eval-mode class distribution for one (text, annotator) pair.
inline std::vector<double> predict(const Model& m, const std::string& text,
                                   std::size_t annotator_index,
                                   const std::optional<std::string>& text_pair = std::nullopt) {
    TextFeatures feats = featurize_text(m.spec.text_encoder, text, text_pair);
    Graph g(false);
    ParamBinder bind(g, m.params);
    NodeId logits = model_forward(g, bind, m.spec, feats, annotator_index);
    return softmax(g.value(logits).data);
}

/// One distribution row per annotator; row a == predict(m, text, a).
inline std::vector<std::vector<double>> predict_all(
    const Model& m, const std::string& text,
    const std::optional<std::string>& text_pair = std::nullopt) {
    TextFeatures feats = featurize_text(m.spec.text_encoder, text, text_pair);
    std::vector<std::vector<double>> rows;
    rows.reserve(m.spec.annotator_count);
    for (std::size_t a = 0; a < m.spec.annotator_count; ++a) {
        Graph g(false);
        ParamBinder bind(g, m.params);
        rows.push_back(softmax(g.value(model_forward(g, bind, m.spec, feats, a)).data));
    }
    return rows;
}

/// Coupling penalty over the annotator-specific text encoders of a sep_rec
/// model: lambda * sum_{i<j} |W_i - W_j|^2 / (number of pairs), built from
/// graph ops so it is differentiable w.r.t. every encoder. The plus_shared
/// encoder does not participate.
inline NodeId coupling_penalty_node(Graph& g, ParamBinder& bind, const ArchitectureSpec& spec,
                                    double lambda) {
    if (spec.family != Family::SepRec)
        throw std::invalid_argument("coupling_penalty: defined for the sep_rec family only");
    std::size_t n = spec.annotator_count;
    if (n < 2) throw std::invalid_argument("coupling_penalty: needs at least 2 annotators");

    const ParameterSet& params = bind.params();
    std::vector<std::vector<std::string>> names(n); // per encoder, suffix-sorted order
    std::vector<std::string> suffixes;
    for (const std::string& full : params.names_with_prefix("text_enc.0."))
        suffixes.push_back(full.substr(std::string("text_enc.0.").size()));
    for (std::size_t i = 0; i < n; ++i) {
        std::string prefix = "text_enc." + std::to_string(i) + ".";
        if (params.names_with_prefix(prefix).size() != suffixes.size())
            throw std::invalid_argument("coupling_penalty: encoder layouts differ in tensor count");
        for (const std::string& s : suffixes) {
            std::string name = prefix + s;
            if (!params.contains(name))
                throw std::invalid_argument("coupling_penalty: encoder " + std::to_string(i) +
                                            " is missing tensor '" + s + "'");
            if (!params.at(name).same_shape(params.at("text_enc.0." + s)))
                throw std::invalid_argument("coupling_penalty: tensor '" + s +
                                            "' has mismatched shapes across encoders");
            names[i].push_back(name);
        }
    }

    std::vector<NodeId> pair_terms;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t k = 0; k < suffixes.size(); ++k) {
                NodeId d = g.sub(bind(names[i][k]), bind(names[j][k]));
                pair_terms.push_back(g.sum(g.mul(d, d)));
            }
    // Accumulate in value order: the rounded total then depends only on the
    // multiset of pair distances, so relabeling encoders cannot change it.
    std::sort(pair_terms.begin(), pair_terms.end(), [&g](NodeId a, NodeId b) {
        return g.value(a).data[0] < g.value(b).data[0];
    });
    double pairs = static_cast<double>(n * (n - 1) / 2);
    return g.scale(g.add_many(pair_terms), lambda / pairs);
}

inline double coupling_penalty(const Model& m, double lambda) {
    Graph g(false);
    ParamBinder bind(g, m.params);
    return g.value(coupling_penalty_node(g, bind, m.spec, lambda)).data[0];
}

/// Unscaled mean pairwise squared distance between annotator text encoders; the
/// quantity the coupling penalty pushes down (up, for negative lambda).
inline double mean_pairwise_encoder_distance(const Model& m) { return coupling_penalty(m, 1.0); }

struct ParameterBreakdown {
    std::size_t total = 0;
    std::vector<std::pair<std::string, std::size_t>> blocks; // insertion order
};

/// Exact trainable-scalar count, grouped by component instance
/// (text_enc.0, head.2, user_enc, combiner, ...).
inline ParameterBreakdown count_parameters(const Model& m) {
    ParameterBreakdown out;
    auto block_of = [](const std::string& name) {
        std::size_t dot = name.find('.');
        std::string first = name.substr(0, dot);
        if (first == "text_enc" || first == "head") {
            std::size_t dot2 = name.find('.', dot + 1);
            return name.substr(0, dot2);
        }
        return first;
    };
    for (const ParameterSet::Entry& e : m.params.entries()) {
        std::string block = block_of(e.name);
        out.total += e.value.size();
        bool found = false;
        for (auto& [b, c] : out.blocks)
            if (b == block) {
                c += e.value.size();
                found = true;
                break;
            }
        if (!found) out.blocks.emplace_back(block, e.value.size());
    }
    return out;
}

} // namespace perspectra
