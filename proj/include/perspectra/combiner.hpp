#pragma once

#include <string>

#include "perspectra/layers.hpp"

namespace perspectra {

enum class CombinerVariant { Simple, Medium, Complex, DeepCross };
enum class Activation { None, Relu, Tanh };

/// Fuses the text vector and the annotator vector into class logits.
///
/// Feed-forward variants run `layers` fully-connected layers on the
/// concatenation (hidden width = input width, activation after hidden layers,
/// none after the final projection, dropout after hidden layers in train mode):
/// simple = 1 layer / no activation, medium = 3 / ReLU, complex = 5 / tanh.
///
/// DeepCross runs `layers` cross layers on x0 in parallel with a one-hidden-layer
/// ReLU branch of `deep_branch_features` units, concatenates both, and projects
/// to the class count.
struct CombinerConfig {
    CombinerVariant variant = CombinerVariant::DeepCross;
    int layers = 0;                        // 0 = variant default
    Activation activation = Activation::None; // ignored unless overridden
    bool activation_overridden = false;
    int deep_branch_features = 30;
    double dropout = 0.20;

    int resolved_layers() const {
        if (layers > 0) return layers;
        switch (variant) {
            case CombinerVariant::Simple: return 1;
            case CombinerVariant::Medium: return 3;
            case CombinerVariant::Complex: return 5;
            case CombinerVariant::DeepCross: return 3; // cross layers
        }
        return 1;
    }

    Activation resolved_activation() const {
        if (activation_overridden) return activation;
        switch (variant) {
            case CombinerVariant::Simple: return Activation::None;
            case CombinerVariant::Medium: return Activation::Relu;
            case CombinerVariant::Complex: return Activation::Tanh;
            case CombinerVariant::DeepCross: return Activation::Relu;
        }
        return Activation::None;
    }

    void validate() const {
        require(deep_branch_features >= 1, "combiner: deep_branch_features must be >= 1");
        require(dropout >= 0.0 && dropout < 1.0, "combiner: dropout must lie in [0,1)");
        require(resolved_layers() >= 1, "combiner: needs at least one layer");
    }
};

/// One cross layer: x0 (*) (W x + b) + x, all dimensions equal to |x0|.
inline NodeId cross_layer(Graph& g, NodeId x0, NodeId x, NodeId w, NodeId b) {
    const Tensor& X0 = g.value(x0);
    const Tensor& X = g.value(x);
    const Tensor& W = g.value(w);
    const Tensor& B = g.value(b);
    std::size_t d = X0.size();
    if (X0.rank() != 1 || X.rank() != 1 || X.size() != d || W.rank() != 2 || W.rows() != d ||
        W.cols() != d || B.rank() != 1 || B.size() != d)
        throw std::invalid_argument(detail::concat(
            "cross_layer: all dimensions must equal |x0|=", d, "; got x ", shape_str(X.shape),
            ", W ", shape_str(W.shape), ", b ", shape_str(B.shape)));
    return g.add(g.mul(x0, g.add(g.matvec(w, x), b)), x);
}

inline void init_combiner_params(ParameterSet& params, const std::string& prefix,
                                 const CombinerConfig& cfg, std::size_t input_dim,
                                 std::size_t class_count, Rng& rng) {
    cfg.validate();
    int layers = cfg.resolved_layers();
    if (cfg.variant == CombinerVariant::DeepCross) {
        for (int l = 0; l < layers; ++l)
            init_linear_params(params, prefix + "cross" + std::to_string(l) + ".", input_dim,
                               input_dim, rng);
        std::size_t deep = static_cast<std::size_t>(cfg.deep_branch_features);
        init_linear_params(params, prefix + "deep.", input_dim, deep, rng);
        init_linear_params(params, prefix + "out.", input_dim + deep, class_count, rng);
        return;
    }
    for (int l = 0; l + 1 < layers; ++l)
        init_linear_params(params, prefix + "l" + std::to_string(l) + ".", input_dim, input_dim,
                           rng);
    init_linear_params(params, prefix + "out.", input_dim, class_count, rng);
}

inline NodeId combiner_forward(Graph& g, ParamBinder& bind, const std::string& prefix,
                               const CombinerConfig& cfg, NodeId text_vec, NodeId user_vec,
                               bool train_mode, Rng* dropout_rng) {
    NodeId x0 = g.concat(text_vec, user_vec);
    int layers = cfg.resolved_layers();
    if (cfg.variant == CombinerVariant::DeepCross) {
        NodeId x = x0;
        for (int l = 0; l < layers; ++l) {
            std::string p = prefix + "cross" + std::to_string(l) + ".";
            x = cross_layer(g, x0, x, bind(p + "W"), bind(p + "b"));
        }
        NodeId deep = g.relu(linear(g, bind, prefix + "deep.", x0));
        return linear(g, bind, prefix + "out.", g.concat(x, deep));
    }
    NodeId h = x0;
    Activation act = cfg.resolved_activation();
    for (int l = 0; l + 1 < layers; ++l) {
        h = linear(g, bind, prefix + "l" + std::to_string(l) + ".", h);
        if (act == Activation::Relu) h = g.relu(h);
        else if (act == Activation::Tanh) h = g.tanh_act(h);
        if (train_mode && cfg.dropout > 0.0) h = apply_dropout(g, h, cfg.dropout, *dropout_rng);
    }
    return linear(g, bind, prefix + "out.", h); // no activation after final projection
}

/// Eval-mode logits from explicit vectors; the spec-level combine operation.
inline std::vector<double> combine(const ParameterSet& params, const std::string& prefix,
                                   const CombinerConfig& cfg, const std::vector<double>& text_vec,
                                   const std::vector<double>& user_vec) {
    Graph g(false);
    ParamBinder bind(g, params);
    NodeId logits = combiner_forward(g, bind, prefix, cfg, g.constant(Tensor::vector(text_vec)),
                                     g.constant(Tensor::vector(user_vec)), false, nullptr);
    return g.value(logits).data;
}

inline std::size_t combiner_param_count(const CombinerConfig& cfg, std::size_t input_dim,
                                        std::size_t class_count) {
    int layers = cfg.resolved_layers();
    if (cfg.variant == CombinerVariant::DeepCross) {
        std::size_t deep = static_cast<std::size_t>(cfg.deep_branch_features);
        return static_cast<std::size_t>(layers) * (input_dim * input_dim + input_dim) +
               (input_dim * deep + deep) + ((input_dim + deep) * class_count + class_count);
    }
    return static_cast<std::size_t>(layers - 1) * (input_dim * input_dim + input_dim) +
           (input_dim * class_count + class_count);
}

} // namespace perspectra
