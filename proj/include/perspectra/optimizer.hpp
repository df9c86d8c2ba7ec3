#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "perspectra/params.hpp"
#include "perspectra/tensor.hpp"

namespace perspectra {

struct AdamWConfig {
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Adam with decoupled weight decay:
///   m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
///   p <- p - lr * mhat/(sqrt(vhat)+eps) - lr * wd * p
///
/// Moment slots are created lazily and bias correction uses each slot's own
/// update count, so parameters that enter training late (sparsely routed heads,
/// per-annotator blocks) are corrected by their actual history. The global step
/// counter increments once per step() call.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return step_; }

    /// Applies one update to every parameter present in `grads`.
    void step(ParameterSet& params, const std::unordered_map<std::string, Tensor>& grads) {
        for (const auto& [name, grad] : grads) {
            Tensor& p = params.at(name);
            if (!p.same_shape(grad))
                throw std::invalid_argument(detail::concat(
                    "optimizer: gradient shape ", shape_str(grad.shape),
                    " does not match parameter '", name, "' shape ", shape_str(p.shape)));
            Slot& s = slot_for(name, p.shape);
            s.updates += 1;
            double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.updates));
            double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.updates));
            for (std::size_t i = 0; i < p.size(); ++i) {
                double g = grad.data[i];
                s.m.data[i] = cfg_.beta1 * s.m.data[i] + (1.0 - cfg_.beta1) * g;
                s.v.data[i] = cfg_.beta2 * s.v.data[i] + (1.0 - cfg_.beta2) * g * g;
                double mhat = s.m.data[i] / bc1;
                double vhat = s.v.data[i] / bc2;
                p.data[i] -= cfg_.learning_rate * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                                   cfg_.weight_decay * p.data[i]);
            }
        }
        step_ += 1;
    }

private:
    struct Slot {
        Tensor m, v;
        std::uint64_t updates = 0;
    };

    Slot& slot_for(const std::string& name, const Shape& shape) {
        auto it = slots_.find(name);
        if (it == slots_.end()) {
            Slot s;
            s.m = Tensor::zeros(shape);
            s.v = Tensor::zeros(shape);
            it = slots_.emplace(name, std::move(s)).first;
        }
        return it->second;
    }

    AdamWConfig cfg_;
    std::uint64_t step_ = 0;
    std::unordered_map<std::string, Slot> slots_;
};

} // namespace perspectra
