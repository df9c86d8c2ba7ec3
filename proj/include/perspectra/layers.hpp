#pragma once

#include <string>

#include "perspectra/autodiff.hpp"
#include "perspectra/params.hpp"
#include "perspectra/rng.hpp"

namespace perspectra {

/// y = W x + b
inline NodeId linear(Graph& g, ParamBinder& bind, const std::string& prefix, NodeId x) {
    return g.add(g.matvec(bind(prefix + "W"), x), bind(prefix + "b"));
}

inline void init_linear_params(ParameterSet& params, const std::string& prefix, std::size_t in,
                               std::size_t out, Rng& rng) {
    Tensor W = Tensor::zeros({out, in});
    init_uniform_fan_in(W, in, rng);
    Tensor b = Tensor::zeros({out});
    init_uniform_fan_in(b, in, rng);
    params.add(prefix + "W", std::move(W));
    params.add(prefix + "b", std::move(b));
}

/// Inverted dropout: each unit is zeroed with probability p, survivors are
/// scaled by 1/(1-p). The mask enters the graph as a constant, so gradients flow
/// through the kept units only. Call only in train mode; eval skips dropout.
inline NodeId apply_dropout(Graph& g, NodeId x, double p, Rng& rng) {
    require(p >= 0.0 && p < 1.0, "dropout: p must lie in [0,1)");
    if (p == 0.0) return x;
    Tensor mask = Tensor::zeros(g.value(x).shape);
    double keep_scale = 1.0 / (1.0 - p);
    for (double& m : mask.data) m = rng.next_double() < p ? 0.0 : keep_scale;
    return g.mul(x, g.constant(std::move(mask)));
}

} // namespace perspectra
