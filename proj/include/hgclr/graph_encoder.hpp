#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hgclr/ops.hpp"
#include "hgclr/rng.hpp"
#include "hgclr/taxonomy.hpp"
#include "hgclr/tensor.hpp"
#include "hgclr/vocab.hpp"

namespace hgclr {

struct GraphConfig {
    std::int64_t d_h = 64;
    std::int64_t heads = 4;
    std::int64_t layers = 1;
    bool use_attention = true;  // false = node features only ("remove graph encoder")
    bool name_emb = true;
    bool spatial = true;
    bool edge = true;

    void validate() const {
        if (d_h <= 0 || heads <= 0 || layers <= 0)
            throw InvalidArgument("graph encoder: sizes must be positive");
        if (d_h % heads != 0) throw InvalidArgument("graph encoder: d_h must be divisible by heads");
    }
};

// Self-attention over label nodes with spatial (distance-bucket) and edge
// (path-mean) additive biases shared across heads. Node features are the sum
// of a learnable label embedding and the mean shared-token embedding of the
// label's name.
template <class S>
class GraphEncoder {
  public:
    GraphEncoder(const Taxonomy& tax, GraphConfig cfg, Tensor<S> shared_token_table,
                 const Vocabulary& vocab, RngStream init)
        : cfg_(cfg), k_(tax.num_labels()), token_table_(std::move(shared_token_table)) {
        cfg_.validate();
        const auto d = cfg_.d_h;
        label_emb_ = Tensor<S>::randn({k_, d}, init, kInitStd, true);
        if (cfg_.use_attention) {
            bias_spec_ = tax.bias_spec(cfg_.spatial, cfg_.edge);
            layers_.resize(static_cast<std::size_t>(cfg_.layers));
            for (auto& l : layers_) {
                l.wq = Tensor<S>::randn({d, d}, init, kInitStd, true);
                l.wk = Tensor<S>::randn({d, d}, init, kInitStd, true);
                l.wv = Tensor<S>::randn({d, d}, init, kInitStd, true);
                l.wo = Tensor<S>::randn({d, d}, init, kInitStd, true);
                // Zero-initialized biases start the layer at plain attention.
                l.b_table = Tensor<S>::zeros({tax.max_bucket() + 1}, true);
                l.w_edge = Tensor<S>::zeros({tax.num_edges()}, true);
                l.ln_g = Tensor<S>::filled({d}, S(1), true);
                l.ln_b = Tensor<S>::zeros({d}, true);
            }
        }
        // Pre-tokenized name ids per label; unknown-only or empty names give
        // empty groups, which fall back to the label embedding alone.
        name_offsets_.push_back(0);
        for (std::int32_t id = 0; id < k_; ++id) {
            for (auto tid : vocab.name_token_ids(tax.name(id))) name_ids_.push_back(tid);
            name_offsets_.push_back(static_cast<std::int64_t>(name_ids_.size()));
        }
    }

    const GraphConfig& config() const { return cfg_; }
    std::int64_t num_labels() const { return k_; }
    Tensor<S>& label_embedding() { return label_emb_; }
    const Tensor<S>& token_table() const { return token_table_; }
    std::int64_t forward_calls() const { return forward_calls_; }

    // f_i = label_emb(y_i) + mean of shared token embeddings of the name.
    Tensor<S> node_features() const {
        if (!cfg_.name_emb) return label_emb_;
        return add(label_emb_, embedding_bag_mean(token_table_, name_ids_, name_offsets_));
    }

    // Per-head attention logits (heads, k, k) including spatial/edge bias.
    Tensor<S> attention_matrix(const Tensor<S>& features, std::size_t layer = 0) const {
        if (!cfg_.use_attention) throw InvalidArgument("graph encoder: attention disabled");
        const auto& l = layers_.at(layer);
        const auto dh = cfg_.d_h / cfg_.heads;
        const S s = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));
        auto f3 = reshape(features, {1, k_, cfg_.d_h});
        auto q = split_heads(scale(matmul(f3, l.wq), s), cfg_.heads);
        auto kk = split_heads(matmul(f3, l.wk), cfg_.heads);
        auto scores = bmm_nt(q, kk);
        if (cfg_.spatial || cfg_.edge)
            scores = add_broadcast0(scores, graph_bias(l.b_table, l.w_edge, bias_spec_));
        return scores;
    }

    // L = LayerNorm(softmax(A^G) V + F), stacked `layers` times.
    Tensor<S> encode_labels() const {
        ++forward_calls_;
        auto x = node_features();
        if (!cfg_.use_attention) return x;
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const auto& l = layers_[li];
            auto probs = softmax_lastdim(attention_matrix(x, li));
            auto v = split_heads(matmul(reshape(x, {1, k_, cfg_.d_h}), l.wv), cfg_.heads);
            auto ctx = reshape(merge_heads(bmm(probs, v), cfg_.heads), {k_, cfg_.d_h});
            x = layer_norm(add(matmul(ctx, l.wo), x), l.ln_g, l.ln_b, kLnEps);
        }
        return x;
    }

    void collect_params(std::vector<std::pair<std::string, Tensor<S>>>& out) {
        out.emplace_back("graph.label_emb", label_emb_);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& l = layers_[i];
            const std::string p = "graph.layer" + std::to_string(i) + ".";
            out.emplace_back(p + "wq", l.wq);
            out.emplace_back(p + "wk", l.wk);
            out.emplace_back(p + "wv", l.wv);
            out.emplace_back(p + "wo", l.wo);
            out.emplace_back(p + "b_table", l.b_table);
            out.emplace_back(p + "w_edge", l.w_edge);
            out.emplace_back(p + "ln_g", l.ln_g);
            out.emplace_back(p + "ln_b", l.ln_b);
        }
    }

    static constexpr double kInitStd = 0.02;
    static constexpr S kLnEps = S(1e-5);

  private:
    struct Layer {
        Tensor<S> wq, wk, wv, wo;
        Tensor<S> b_table, w_edge;
        Tensor<S> ln_g, ln_b;
    };

    GraphConfig cfg_;
    std::int64_t k_;
    Tensor<S> token_table_;  // shared with the text encoder
    Tensor<S> label_emb_;
    std::vector<Layer> layers_;
    GraphBiasSpec bias_spec_;
    std::vector<std::int32_t> name_ids_;
    std::vector<std::int64_t> name_offsets_;
    mutable std::int64_t forward_calls_ = 0;
};

}  // namespace hgclr
