#pragma once

#include <string>

#include "perspectra/layers.hpp"

namespace perspectra {

enum class AnnotatorEncoderVariant { OneHot, Simple, Complex };

/// Annotator-id blocks: a bare one-hot, a single linear layer (no activation),
/// or a 3-layer ReLU feed-forward stack. Simple and complex apply one dropout
/// after the stack in train mode.
struct AnnotatorEncoderConfig {
    AnnotatorEncoderVariant variant = AnnotatorEncoderVariant::Complex;
    int embedding_dim = 0; // 0 = variant default (simple 25, complex 50)
    double dropout = 0.20;

    int resolved_dim() const {
        if (embedding_dim > 0) return embedding_dim;
        switch (variant) {
            case AnnotatorEncoderVariant::OneHot: return 0; // dimension is the annotator count
            case AnnotatorEncoderVariant::Simple: return 25;
            case AnnotatorEncoderVariant::Complex: return 50;
        }
        return 0;
    }

    int output_dim(int annotator_count) const {
        return variant == AnnotatorEncoderVariant::OneHot ? annotator_count : resolved_dim();
    }

    void validate() const {
        require(dropout >= 0.0 && dropout < 1.0, "annotator encoder: dropout must lie in [0,1)");
        if (variant != AnnotatorEncoderVariant::OneHot)
            require(resolved_dim() >= 1, "annotator encoder: embedding_dim must be positive");
    }
};

inline void init_annotator_encoder_params(ParameterSet& params, const std::string& prefix,
                                          const AnnotatorEncoderConfig& cfg, int annotator_count,
                                          Rng& rng) {
    cfg.validate();
    std::size_t n = static_cast<std::size_t>(annotator_count);
    std::size_t d = static_cast<std::size_t>(cfg.resolved_dim());
    switch (cfg.variant) {
        case AnnotatorEncoderVariant::OneHot:
            break; // no parameters
        case AnnotatorEncoderVariant::Simple: {
            // linear layer on the one-hot input, stored as an embedding row per annotator
            Tensor E = Tensor::zeros({n, d});
            init_uniform_fan_in(E, n, rng);
            Tensor b = Tensor::zeros({d});
            init_uniform_fan_in(b, n, rng);
            params.add(prefix + "emb", std::move(E));
            params.add(prefix + "b", std::move(b));
            break;
        }
        case AnnotatorEncoderVariant::Complex: {
            Tensor E = Tensor::zeros({n, d});
            init_uniform_fan_in(E, n, rng);
            Tensor b = Tensor::zeros({d});
            init_uniform_fan_in(b, n, rng);
            params.add(prefix + "l0.emb", std::move(E));
            params.add(prefix + "l0.b", std::move(b));
            init_linear_params(params, prefix + "l1.", d, d, rng);
            init_linear_params(params, prefix + "l2.", d, d, rng);
            break;
        }
    }
}

inline NodeId annotator_encoder_forward(Graph& g, ParamBinder& bind, const std::string& prefix,
                                        const AnnotatorEncoderConfig& cfg, int annotator_count,
                                        int index, bool train_mode, Rng* dropout_rng) {
    if (index < 0 || index >= annotator_count)
        throw std::invalid_argument(detail::concat("annotator index ", index,
                                                   " out of range [0,", annotator_count, ")"));
    std::uint32_t row = static_cast<std::uint32_t>(index);
    switch (cfg.variant) {
        case AnnotatorEncoderVariant::OneHot: {
            Tensor onehot = Tensor::zeros({static_cast<std::size_t>(annotator_count)});
            onehot.data[row] = 1.0;
            return g.constant(std::move(onehot));
        }
        case AnnotatorEncoderVariant::Simple: {
            NodeId h = g.add(g.embedding_mean(bind(prefix + "emb"), {row}), bind(prefix + "b"));
            if (train_mode && cfg.dropout > 0.0) h = apply_dropout(g, h, cfg.dropout, *dropout_rng);
            return h;
        }
        case AnnotatorEncoderVariant::Complex: {
            NodeId h = g.relu(
                g.add(g.embedding_mean(bind(prefix + "l0.emb"), {row}), bind(prefix + "l0.b")));
            h = g.relu(linear(g, bind, prefix + "l1.", h));
            h = g.relu(linear(g, bind, prefix + "l2.", h));
            if (train_mode && cfg.dropout > 0.0) h = apply_dropout(g, h, cfg.dropout, *dropout_rng);
            return h;
        }
    }
    throw std::logic_error("unreachable");
}

/// Eval-mode vector for one annotator; the spec-level encode_annotator operation.
inline std::vector<double> encode_annotator(const ParameterSet& params, const std::string& prefix,
                                            const AnnotatorEncoderConfig& cfg, int annotator_count,
                                            int index) {
    Graph g(false);
    ParamBinder bind(g, params);
    NodeId out = annotator_encoder_forward(g, bind, prefix, cfg, annotator_count, index, false, nullptr);
    return g.value(out).data;
}

inline std::size_t annotator_encoder_param_count(const AnnotatorEncoderConfig& cfg,
                                                 int annotator_count) {
    std::size_t n = static_cast<std::size_t>(annotator_count);
    std::size_t d = static_cast<std::size_t>(cfg.resolved_dim());
    switch (cfg.variant) {
        case AnnotatorEncoderVariant::OneHot: return 0;
        case AnnotatorEncoderVariant::Simple: return n * d + d;
        case AnnotatorEncoderVariant::Complex: return (n * d + d) + 2 * (d * d + d);
    }
    return 0;
}

} // namespace perspectra
