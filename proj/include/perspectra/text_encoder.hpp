#pragma once

#include <optional>
#include <string>
#include <vector>

#include "perspectra/autodiff.hpp"
#include "perspectra/params.hpp"
#include "perspectra/rng.hpp"
#include "perspectra/tokenize.hpp"

namespace perspectra {

enum class TextEncoderKind { HashedNgram, EmbedPool };

/// Desk-scale trainable text encoders standing in for a pretrained LLM:
///   hashed_ngram — linear projection of an L2-normalized hashed n-gram count vector
///   embed_pool   — mean of trainable token embeddings, then one linear+tanh layer
struct TextEncoderConfig {
    TextEncoderKind kind = TextEncoderKind::HashedNgram;
    int output_dim = 64;
    int vocab_or_bucket_size = 512; // hash buckets (hashed_ngram) or vocab rows (embed_pool)
    int ngram_min = 1;
    int ngram_max = 2;
    int max_tokens = 512;

    void validate() const {
        require(output_dim >= 1, "text encoder: output_dim must be positive");
        require(vocab_or_bucket_size >= 1, "text encoder: vocab/bucket size must be positive");
        require(max_tokens >= 1, "text encoder: max_tokens must be >= 1");
        require(ngram_min >= 1 && ngram_max >= ngram_min,
                "text encoder: ngram range must satisfy 1 <= min <= max");
    }
};

/// Per-instance features, computed once and reused across epochs. Token n-grams
/// are joined with 0x1f and bucketed by 32-bit FNV-1a.
struct TextFeatures {
    std::vector<double> counts;           // hashed_ngram: normalized bucket counts
    std::vector<std::uint32_t> token_ids; // embed_pool: hashed token ids
};

inline std::uint32_t ngram_bucket(const std::vector<std::string>& tokens, std::size_t start,
                                  std::size_t n, std::uint32_t buckets) {
    std::string key;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) key.push_back('\x1f');
        key += tokens[start + i];
    }
    return fnv1a32(key) % buckets;
}

inline TextFeatures featurize_text(const TextEncoderConfig& cfg, std::string_view text,
                                   const std::optional<std::string>& text_pair = std::nullopt) {
    cfg.validate();
    std::vector<std::string> tokens =
        tokenize_instance(text, text_pair, static_cast<std::size_t>(cfg.max_tokens));
    TextFeatures f;
    if (cfg.kind == TextEncoderKind::HashedNgram) {
        std::uint32_t buckets = static_cast<std::uint32_t>(cfg.vocab_or_bucket_size);
        f.counts.assign(buckets, 0.0);
        for (std::size_t n = static_cast<std::size_t>(cfg.ngram_min);
             n <= static_cast<std::size_t>(cfg.ngram_max); ++n) {
            if (tokens.size() < n) break;
            for (std::size_t s = 0; s + n <= tokens.size(); ++s)
                f.counts[ngram_bucket(tokens, s, n, buckets)] += 1.0;
        }
        double norm = 0.0;
        for (double c : f.counts) norm += c * c;
        if (norm > 0.0) {
            norm = 1.0 / std::sqrt(norm);
            for (double& c : f.counts) c *= norm;
        }
    } else {
        f.token_ids.reserve(tokens.size());
        for (const std::string& t : tokens)
            f.token_ids.push_back(fnv1a32(t) %
                                  static_cast<std::uint32_t>(cfg.vocab_or_bucket_size));
    }
    return f;
}

inline void init_text_encoder_params(ParameterSet& params, const std::string& prefix,
                                     const TextEncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    std::size_t out = static_cast<std::size_t>(cfg.output_dim);
    std::size_t v = static_cast<std::size_t>(cfg.vocab_or_bucket_size);
    if (cfg.kind == TextEncoderKind::HashedNgram) {
        Tensor W = Tensor::zeros({out, v});
        init_uniform_fan_in(W, v, rng);
        Tensor b = Tensor::zeros({out});
        init_uniform_fan_in(b, v, rng);
        params.add(prefix + "W", std::move(W));
        params.add(prefix + "b", std::move(b));
    } else {
        Tensor emb = Tensor::zeros({v, out});
        init_uniform_fan_in(emb, out, rng);
        Tensor W = Tensor::zeros({out, out});
        init_uniform_fan_in(W, out, rng);
        Tensor b = Tensor::zeros({out});
        init_uniform_fan_in(b, out, rng);
        params.add(prefix + "emb", std::move(emb));
        params.add(prefix + "W", std::move(W));
        params.add(prefix + "b", std::move(b));
    }
}

inline NodeId text_encoder_forward(Graph& g, ParamBinder& bind, const std::string& prefix,
                                   const TextEncoderConfig& cfg, const TextFeatures& feats) {
    if (cfg.kind == TextEncoderKind::HashedNgram) {
        if (feats.counts.size() != static_cast<std::size_t>(cfg.vocab_or_bucket_size))
            throw std::invalid_argument(detail::concat(
                "text encoder '", prefix, "': features have ", feats.counts.size(),
                " buckets, config expects ", cfg.vocab_or_bucket_size));
        NodeId x = g.constant(Tensor::vector(feats.counts));
        return g.add(g.matvec(bind(prefix + "W"), x), bind(prefix + "b"));
    }
    NodeId pooled = g.embedding_mean(bind(prefix + "emb"), feats.token_ids);
    return g.tanh_act(g.add(g.matvec(bind(prefix + "W"), pooled), bind(prefix + "b")));
}

/// Eval-mode encoding of a single text; the spec-level encode_text operation.
inline std::vector<double> encode_text(const ParameterSet& params, const std::string& prefix,
                                       const TextEncoderConfig& cfg, std::string_view text,
                                       const std::optional<std::string>& text_pair = std::nullopt) {
    Graph g(false);
    ParamBinder bind(g, params);
    NodeId out = text_encoder_forward(g, bind, prefix, cfg, featurize_text(cfg, text, text_pair));
    return g.value(out).data;
}

inline std::size_t text_encoder_param_count(const TextEncoderConfig& cfg) {
    std::size_t out = static_cast<std::size_t>(cfg.output_dim);
    std::size_t v = static_cast<std::size_t>(cfg.vocab_or_bucket_size);
    if (cfg.kind == TextEncoderKind::HashedNgram) return out * v + out;
    return v * out + out * out + out;
}

} // namespace perspectra
