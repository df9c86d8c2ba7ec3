#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "perspectra/autodiff.hpp"
#include "perspectra/rng.hpp"
#include "perspectra/tensor.hpp"

namespace perspectra {

/// Ordered collection of named weight tensors. Insertion order is the canonical
/// order used by checkpoints, so identical build steps give identical layouts.
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Tensor value;
    };

    Tensor& add(const std::string& name, Tensor t) {
        if (index_.count(name))
            throw std::invalid_argument("parameter '" + name + "' already exists");
        t.requires_grad = true;
        index_[name] = entries_.size();
        entries_.push_back({name, std::move(t)});
        return entries_.back().value;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
        return entries_[it->second].value;
    }

    const Tensor& at(const std::string& name) const {
        return const_cast<ParameterSet*>(this)->at(name);
    }

    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const Entry& e : entries_) n += e.value.size();
        return n;
    }

    std::vector<std::string> names_with_prefix(const std::string& prefix) const {
        std::vector<std::string> out;
        for (const Entry& e : entries_)
            if (e.name.rfind(prefix, 0) == 0) out.push_back(e.name);
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Kaiming-style uniform init in +-sqrt(1/fan_in).
inline void init_uniform_fan_in(Tensor& t, std::size_t fan_in, Rng& rng) {
    double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
}

/// Binds named parameters into a graph, one leaf per parameter per graph, so
/// gradients accumulate across all uses within a batch.
class ParamBinder {
public:
    ParamBinder(Graph& g, const ParameterSet& params) : g_(g), params_(params) {}

    NodeId operator()(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        NodeId id = g_.leaf(params_.at(name), true, name);
        bound_.emplace(name, id);
        return id;
    }

    bool bound(const std::string& name) const { return bound_.count(name) != 0; }

    const ParameterSet& params() const { return params_; }

    /// Gradients of every parameter bound into the graph; call after backward().
    std::unordered_map<std::string, Tensor> gradients() const {
        std::unordered_map<std::string, Tensor> out;
        for (const auto& [name, id] : bound_) out.emplace(name, g_.gradient(id));
        return out;
    }

private:
    Graph& g_;
    const ParameterSet& params_;
    std::unordered_map<std::string, NodeId> bound_;
};

} // namespace perspectra
