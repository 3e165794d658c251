#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgclr/ops.hpp"
#include "hgclr/rng.hpp"
#include "hgclr/tensor.hpp"
#include "hgclr/vocab.hpp"

namespace hgclr {

struct EncoderConfig {
    std::int64_t vocab_size = 0;
    std::int64_t d_h = 64;
    std::int64_t n_layers = 2;
    std::int64_t n_heads = 4;
    std::int64_t max_len = 128;
    std::int64_t ffn_mult = 4;
    double dropout = 0.1;

    void validate() const {
        if (vocab_size <= 0) throw InvalidArgument("encoder: vocab_size must be positive");
        if (d_h <= 0 || n_layers <= 0 || n_heads <= 0 || max_len < 3 || ffn_mult <= 0)
            throw InvalidArgument("encoder: sizes must be positive");
        if (d_h % n_heads != 0) throw InvalidArgument("encoder: d_h must be divisible by n_heads");
        if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("encoder: dropout in [0,1)");
    }
};

template <class S>
struct EncodedBatch {
    Tensor<S> hidden;  // (B, n, d)
    Tensor<S> pooled;  // (B, d) = hidden[:, 0, :]
};

// Pre-norm transformer encoder with learned position embeddings and
// first-token pooling. The token table is shared with label name embeddings;
// the [ZERO] row is pinned to zeros and receives no updates.
template <class S>
class TextEncoder {
  public:
    TextEncoder(EncoderConfig cfg, RngStream init) : cfg_(cfg) {
        cfg_.validate();
        const auto d = cfg_.d_h;
        token_emb_ = Tensor<S>::randn({cfg_.vocab_size, d}, init, kInitStd, true);
        for (std::int64_t c = 0; c < d; ++c) token_emb_.data()[Vocabulary::kZero * d + c] = S(0);
        pos_emb_ = Tensor<S>::randn({cfg_.max_len, d}, init, kInitStd, true);
        const auto ff = d * cfg_.ffn_mult;
        blocks_.resize(static_cast<std::size_t>(cfg_.n_layers));
        for (auto& b : blocks_) {
            b.wq = Tensor<S>::randn({d, d}, init, kInitStd, true);
            b.bq = Tensor<S>::zeros({d}, true);
            b.wk = Tensor<S>::randn({d, d}, init, kInitStd, true);
            b.bk = Tensor<S>::zeros({d}, true);
            b.wv = Tensor<S>::randn({d, d}, init, kInitStd, true);
            b.bv = Tensor<S>::zeros({d}, true);
            b.wo = Tensor<S>::randn({d, d}, init, kInitStd, true);
            b.bo = Tensor<S>::zeros({d}, true);
            b.ln1_g = Tensor<S>::filled({d}, S(1), true);
            b.ln1_b = Tensor<S>::zeros({d}, true);
            b.ln2_g = Tensor<S>::filled({d}, S(1), true);
            b.ln2_b = Tensor<S>::zeros({d}, true);
            b.w1 = Tensor<S>::randn({d, ff}, init, kInitStd, true);
            b.b1 = Tensor<S>::zeros({ff}, true);
            b.w2 = Tensor<S>::randn({ff, d}, init, kInitStd, true);
            b.b2 = Tensor<S>::zeros({d}, true);
        }
        final_g_ = Tensor<S>::filled({d}, S(1), true);
        final_b_ = Tensor<S>::zeros({d}, true);
    }

    const EncoderConfig& config() const { return cfg_; }
    Tensor<S>& token_table() { return token_emb_; }
    const Tensor<S>& token_table() const { return token_emb_; }
    Tensor<S>& position_table() { return pos_emb_; }

    // Pure table lookup; position embeddings are added inside encode so the
    // positive sampler can gate raw token embeddings.
    Tensor<S> embed_tokens(const std::vector<std::int32_t>& ids, std::int64_t batch,
                           std::int64_t seq_len) const {
        return embedding_lookup(token_emb_, ids, {batch, seq_len});
    }

    EncodedBatch<S> encode(const Tensor<S>& embeddings, const std::vector<std::uint8_t>& pad_mask,
                           bool training, RngStream* dropout_rng) const {
        if (embeddings.rank() != 3 || embeddings.dim(2) != cfg_.d_h)
            throw ShapeError("encode: embeddings must be (B, n, d_h)");
        const std::int64_t B = embeddings.dim(0), N = embeddings.dim(1);
        if (N > cfg_.max_len)
            throw InvalidArgument("encode: sequence length " + std::to_string(N) +
                                  " exceeds max_len " + std::to_string(cfg_.max_len));
        if (static_cast<std::int64_t>(pad_mask.size()) != B * N)
            throw ShapeError("encode: pad mask size mismatch");
        const bool drop = training && cfg_.dropout > 0.0 && dropout_rng != nullptr;
        const auto dh = cfg_.d_h / cfg_.n_heads;
        const S qscale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));

        auto x = add_positions(embeddings, pos_emb_);
        for (const auto& b : blocks_) {
            auto h = layer_norm(x, b.ln1_g, b.ln1_b, kLnEps);
            auto q = split_heads(scale(add_bias_lastdim(matmul(h, b.wq), b.bq), qscale), cfg_.n_heads);
            auto k = split_heads(add_bias_lastdim(matmul(h, b.wk), b.bk), cfg_.n_heads);
            auto v = split_heads(add_bias_lastdim(matmul(h, b.wv), b.bv), cfg_.n_heads);
            auto probs = softmax_lastdim(add_key_mask(bmm_nt(q, k), pad_mask, B, cfg_.n_heads));
            auto ctx = merge_heads(bmm(probs, v), cfg_.n_heads);
            auto attn = add_bias_lastdim(matmul(ctx, b.wo), b.bo);
            if (drop) attn = dropout(attn, cfg_.dropout, *dropout_rng);
            x = add(x, attn);

            auto h2 = layer_norm(x, b.ln2_g, b.ln2_b, kLnEps);
            auto ff = add_bias_lastdim(
                matmul(relu(add_bias_lastdim(matmul(h2, b.w1), b.b1)), b.w2), b.b2);
            if (drop) ff = dropout(ff, cfg_.dropout, *dropout_rng);
            x = add(x, ff);
        }
        x = layer_norm(x, final_g_, final_b_, kLnEps);
        return EncodedBatch<S>{x, take_position(x, 0)};
    }

    void collect_params(std::vector<std::pair<std::string, Tensor<S>>>& out) {
        out.emplace_back("encoder.token_emb", token_emb_);
        out.emplace_back("encoder.pos_emb", pos_emb_);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            auto& b = blocks_[i];
            const std::string p = "encoder.block" + std::to_string(i) + ".";
            out.emplace_back(p + "wq", b.wq);
            out.emplace_back(p + "bq", b.bq);
            out.emplace_back(p + "wk", b.wk);
            out.emplace_back(p + "bk", b.bk);
            out.emplace_back(p + "wv", b.wv);
            out.emplace_back(p + "bv", b.bv);
            out.emplace_back(p + "wo", b.wo);
            out.emplace_back(p + "bo", b.bo);
            out.emplace_back(p + "ln1_g", b.ln1_g);
            out.emplace_back(p + "ln1_b", b.ln1_b);
            out.emplace_back(p + "ln2_g", b.ln2_g);
            out.emplace_back(p + "ln2_b", b.ln2_b);
            out.emplace_back(p + "w1", b.w1);
            out.emplace_back(p + "b1", b.b1);
            out.emplace_back(p + "w2", b.w2);
            out.emplace_back(p + "b2", b.b2);
        }
        out.emplace_back("encoder.final_g", final_g_);
        out.emplace_back("encoder.final_b", final_b_);
    }

    static constexpr double kInitStd = 0.02;
    static constexpr S kLnEps = S(1e-5);

  private:
    struct Block {
        Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor<S> ln1_g, ln1_b, ln2_g, ln2_b;
        Tensor<S> w1, b1, w2, b2;
    };

    EncoderConfig cfg_;
    Tensor<S> token_emb_;
    Tensor<S> pos_emb_;
    std::vector<Block> blocks_;
    Tensor<S> final_g_, final_b_;
};

}  // namespace hgclr
