#pragma once

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "perspectra/architecture.hpp"
#include "perspectra/dataset.hpp"
#include "perspectra/optimizer.hpp"

namespace perspectra {

/// The ten fixed seeds used for multi-run experiments, in protocol order.
inline const std::vector<std::uint64_t> kDefaultSeeds = {
    2923262358u, 1842330218u, 827634346u,  171049425u, 991167630u,
    1070299506u, 762227973u,  555596930u,  1010185121u, 419984946u,
};

inline std::size_t default_epochs(Family f, bool pair_dataset) {
    switch (f) {
        case Family::Majority: return 10;
        case Family::PerAnnotator: return 10; // per annotator model
        case Family::SepHeads: return 7;
        case Family::SepRec: return 12;
        case Family::ShareRec: return pair_dataset ? 14 : 20;
    }
    return 10;
}

struct TrainConfig {
    double learning_rate = 1e-5;
    std::optional<std::size_t> batch_size;  // default 8; sep_rec defaults to 2
    std::optional<std::size_t> epochs;      // family- and dataset-dependent default
    std::vector<std::uint64_t> seeds = kDefaultSeeds;
    std::optional<std::size_t> max_tokens;  // overrides the text encoder's limit

    std::size_t resolved_batch_size(Family f) const {
        if (batch_size) return *batch_size;
        return f == Family::SepRec ? 2 : 8;
    }

    std::size_t resolved_epochs(Family f, bool pair_dataset) const {
        return epochs ? *epochs : default_epochs(f, pair_dataset);
    }

    void validate() const {
        require(learning_rate > 0.0, "training: learning_rate must be positive");
        if (batch_size) require(*batch_size >= 1, "training: batch_size must be >= 1");
        require(!seeds.empty(), "training: seed list must not be empty");
        if (max_tokens) require(*max_tokens >= 1, "training: max_tokens must be >= 1");
    }
};

/// Inverse-frequency class weights for one annotator's train view:
/// w_c = N / (K * n_c). Unobserved classes get weight 0 and are flagged
/// rather than receiving an infinite weight.
struct ClassWeightRow {
    std::vector<double> weights;
    std::vector<std::size_t> zero_classes;
};

inline ClassWeightRow compute_class_weights(const std::vector<std::size_t>& labels,
                                            std::size_t class_count) {
    require(!labels.empty(), "compute_class_weights: empty label list");
    std::vector<std::size_t> counts(class_count, 0);
    for (std::size_t label : labels) {
        require(label < class_count, "compute_class_weights: class index out of range");
        ++counts[label];
    }
    ClassWeightRow row;
    double N = static_cast<double>(labels.size());
    double K = static_cast<double>(class_count);
    for (std::size_t c = 0; c < class_count; ++c) {
        if (counts[c] == 0) {
            row.weights.push_back(0.0);
            row.zero_classes.push_back(c);
        } else {
            row.weights.push_back(N / (K * static_cast<double>(counts[c])));
        }
    }
    return row;
}

/// The training unit: one (instance, annotator, label) annotation pair.
/// Majority-family items carry the aggregated label and annotator 0.
struct TrainItem {
    const Instance* instance = nullptr;
    std::size_t annotator = 0;
    std::size_t label = 0;
};

/// Deterministic shuffle keyed by (seed, epoch), then fixed-size chunks with
/// the last short batch kept.
inline std::vector<std::vector<TrainItem>> make_batches(std::vector<TrainItem> items,
                                                        std::size_t batch_size,
                                                        std::uint64_t seed, std::size_t epoch) {
    require(batch_size >= 1, "make_batches: batch_size must be >= 1");
    Rng rng(derive_seed(seed, "batch", epoch));
    rng.shuffle(items);
    std::vector<std::vector<TrainItem>> batches;
    for (std::size_t start = 0; start < items.size(); start += batch_size) {
        std::size_t end = std::min(items.size(), start + batch_size);
        batches.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(start),
                             items.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

/// One weight row per annotator; majority models use a single row (index 0).
using ClassWeightTable = std::vector<std::vector<double>>;

/// Mean class-weighted cross-entropy over the batch, plus the coupling
/// penalty once per batch for sep_rec models with nonzero lambda.
inline NodeId build_batch_loss(Graph& g, ParamBinder& bind, const ArchitectureSpec& spec,
                               const std::vector<TrainItem>& batch,
                               const ClassWeightTable& weights, double lambda, bool train_mode,
                               Rng* dropout_rng) {
    require(!batch.empty(), "batch_loss: empty batch");
    std::vector<NodeId> item_losses;
    for (const TrainItem& item : batch) {
        std::size_t row = spec.family == Family::Majority ? 0 : item.annotator;
        if (row >= weights.size())
            throw std::invalid_argument(detail::concat("batch_loss: no class-weight row for annotator ",
                                                       item.annotator));
        TextFeatures feats =
            featurize_text(spec.text_encoder, item.instance->text, item.instance->text_pair);
        NodeId logits =
            model_forward(g, bind, spec, feats, item.annotator, train_mode, dropout_rng);
        item_losses.push_back(g.cross_entropy_weighted(logits, item.label, weights[row]));
    }
    NodeId loss = g.mean_many(item_losses);
    if (spec.family == Family::SepRec && lambda != 0.0 && spec.annotator_count >= 2)
        loss = g.add(loss, coupling_penalty_node(g, bind, spec, lambda));
    return loss;
}

/// Loss value as seen by the optimizer, minus dropout noise (eval-mode pass).
inline double batch_loss(const Model& m, const std::vector<TrainItem>& batch,
                         const ClassWeightTable& weights, double lambda) {
    Graph g(false);
    ParamBinder bind(g, m.params);
    return g.value(build_batch_loss(g, bind, m.spec, batch, weights, lambda, false, nullptr))
        .data[0];
}

struct RunRecord {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<double> epoch_losses; // mean batch loss per epoch
    std::string checkpoint_path;
    double wall_time_seconds = 0.0;
    // mean pairwise encoder distance after training; sep_rec with n >= 2 only
    double final_encoder_distance = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    Model model;
    RunRecord record;
};

namespace detail {

struct EpochStats {
    double loss_sum = 0.0;
    std::size_t batches = 0;
};

/// Runs `epochs` passes of AdamW over `items` against the given weight table.
/// Only parameters bound into a batch's graph receive an update, so untouched
/// sub-networks (other heads, other encoders) stay bit-identical.
inline void run_epoch_loop(Model& m, const std::vector<TrainItem>& items,
                           const ClassWeightTable& weights, const TrainConfig& cfg,
                           std::size_t epochs, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t dropout_salt, std::vector<EpochStats>& stats) {
    require(!items.empty(), "train: no train items for this family");
    AdamWConfig opt_cfg;
    opt_cfg.learning_rate = cfg.learning_rate;
    AdamW opt(opt_cfg);
    Rng dropout_rng(derive_seed(seed, "dropout", dropout_salt));
    if (stats.size() < epochs) stats.resize(epochs);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        auto batches = make_batches(items, batch_size, seed, epoch);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            Graph g(false);
            ParamBinder bind(g, m.params);
            NodeId loss = build_batch_loss(g, bind, m.spec, batches[b], weights, m.spec.lambda,
                                           true, &dropout_rng);
            double value = g.value(loss).data[0];
            if (!std::isfinite(value))
                throw std::runtime_error(detail::concat(
                    "training diverged: non-finite loss at epoch ", epoch, ", batch ", b));
            g.backward(loss);
            opt.step(m.params, bind.gradients());
            stats[epoch].loss_sum += value;
            ++stats[epoch].batches;
        }
    }
}

} // namespace detail

/// Full training procedure for one seed. per_annotator trains its n disjoint
/// sub-models sequentially with the same recipe; the other families train
/// end-to-end on shuffled annotation pairs (majority on aggregated labels).
inline TrainResult train(const ArchitectureSpec& spec, const Dataset& d, const TrainConfig& cfg,
                         std::uint64_t seed) {
    spec.validate();
    cfg.validate();
    require(spec.annotator_count == d.meta.annotators.size() ||
                spec.family == Family::Majority,
            "train: architecture annotator_count must match the dataset registry");
    require(spec.class_count == d.meta.class_count,
            "train: architecture class_count must match the dataset");
    auto train_instances = d.split_instances(Split::Train);
    require(!train_instances.empty(), "train: empty train split");

    auto started = std::chrono::steady_clock::now();
    ArchitectureSpec effective = spec;
    if (cfg.max_tokens) effective.text_encoder.max_tokens = static_cast<int>(*cfg.max_tokens);
    TrainResult out{build_model(effective, seed), {}};
    out.record.seed = seed;

    std::size_t n = d.meta.annotators.size();
    std::size_t batch_size = cfg.resolved_batch_size(spec.family);
    std::size_t epochs = cfg.resolved_epochs(spec.family, d.has_text_pairs());
    std::vector<detail::EpochStats> stats;

    if (spec.family == Family::Majority) {
        std::vector<TrainItem> items;
        std::vector<std::size_t> agg_labels;
        for (const Instance* inst : train_instances) {
            std::size_t label = aggregate_majority(inst->annotations, d.meta.class_count).label;
            items.push_back({inst, 0, label});
            agg_labels.push_back(label);
        }
        ClassWeightTable weights{compute_class_weights(agg_labels, d.meta.class_count).weights};
        detail::run_epoch_loop(out.model, items, weights, cfg, epochs, batch_size, seed, 0, stats);
    } else if (spec.family == Family::PerAnnotator) {
        ClassWeightTable weights(n);
        std::vector<std::vector<TrainItem>> per_annotator_items(n);
        for (std::size_t a = 0; a < n; ++a) {
            auto view = annotator_view(d, a, Split::Train);
            require(!view.empty(), "train: annotator '" + d.meta.annotators[a] +
                                       "' has no train items for per_annotator");
            std::vector<std::size_t> labels;
            for (const ViewItem& v : view) {
                per_annotator_items[a].push_back({v.instance, a, v.label});
                labels.push_back(v.label);
            }
            weights[a] = compute_class_weights(labels, d.meta.class_count).weights;
        }
        for (std::size_t a = 0; a < n; ++a)
            detail::run_epoch_loop(out.model, per_annotator_items[a], weights, cfg, epochs,
                                   batch_size, seed, a, stats);
    } else {
        ClassWeightTable weights(n);
        std::vector<TrainItem> items;
        for (std::size_t a = 0; a < n; ++a) {
            auto view = annotator_view(d, a, Split::Train);
            std::vector<std::size_t> labels;
            for (const ViewItem& v : view) {
                items.push_back({v.instance, a, v.label});
                labels.push_back(v.label);
            }
            if (labels.empty()) {
                std::cerr << "warning: annotator '" << d.meta.annotators[a]
                          << "' has no train annotations\n";
                weights[a].assign(d.meta.class_count, 0.0);
            } else {
                weights[a] = compute_class_weights(labels, d.meta.class_count).weights;
            }
        }
        detail::run_epoch_loop(out.model, items, weights, cfg, epochs, batch_size, seed, 0, stats);
    }

    for (const detail::EpochStats& s : stats)
        out.record.epoch_losses.push_back(s.batches ? s.loss_sum / static_cast<double>(s.batches)
                                                    : 0.0);
    if (spec.family == Family::SepRec && spec.annotator_count >= 2)
        out.record.final_encoder_distance = mean_pairwise_encoder_distance(out.model);
    out.record.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

} // namespace perspectra
