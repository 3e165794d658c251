#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hgclr/ops.hpp"
#include "hgclr/rng.hpp"
#include "hgclr/tensor.hpp"

namespace hgclr {

// Hierarchy-guided positive-sample construction: token-vs-label attention,
// Gumbel-Softmax over the label axis, ground-truth probability aggregation,
// and the detach-style threshold gate.
template <class S>
class PositiveSampler {
  public:
    PositiveSampler(std::int64_t d_h, RngStream init) : d_h_(d_h) {
        wq_ = Tensor<S>::randn({d_h, d_h}, init, kInitStd, true);
        wk_ = Tensor<S>::randn({d_h, d_h}, init, kInitStd, true);
    }

    std::int64_t forward_calls() const { return forward_calls_; }

    // A[b,i,j] = (e_i Wq) (l_j Wk)^T / sqrt(d_h); single-head as written.
    Tensor<S> token_label_scores(const Tensor<S>& token_embeddings,
                                 const Tensor<S>& label_features) const {
        ++forward_calls_;
        if (token_embeddings.rank() != 3 || label_features.rank() != 2 ||
            token_embeddings.dim(2) != d_h_ || label_features.dim(1) != d_h_)
            throw ShapeError("token_label_scores: incompatible shapes");
        const S s = S(1) / static_cast<S>(std::sqrt(static_cast<double>(d_h_)));
        auto q = matmul(token_embeddings, wq_);
        auto k = matmul(label_features, wk_);
        return scale(matmul_nt(q, k), s);
    }

    // P[b,i] = sum over the document's ground-truth labels of the per-token
    // Gumbel-Softmax across all labels. `member_mask` is (batch, k) bytes.
    Tensor<S> sample_token_probs(const Tensor<S>& scores, const std::vector<std::uint8_t>& member_mask,
                                 S temperature, const Tensor<S>& noise) const {
        if (scores.rank() != 3) throw ShapeError("sample_token_probs: scores must be (B, n, k)");
        const std::int64_t B = scores.dim(0), K = scores.dim(2);
        if (static_cast<std::int64_t>(member_mask.size()) != B * K)
            throw ShapeError("sample_token_probs: member mask size mismatch");
        for (std::int64_t b = 0; b < B; ++b) {
            bool any = false;
            for (std::int64_t j = 0; j < K && !any; ++j)
                any = member_mask[static_cast<std::size_t>(b * K + j)] != 0;
            if (!any) throw InvalidArgument("sample_token_probs: empty label set in row " +
                                            std::to_string(b));
        }
        auto probs = gumbel_softmax_with_noise(scores, noise, temperature);
        return masked_sum_lastdim(probs, member_mask, B);
    }

    // Appendix-style gate: hard positions copy e exactly, dropped positions
    // are the zero-embedding token; dP = e at threshold-kept positions.
    GateResult<S> build_positive(const Tensor<S>& token_embeddings, const Tensor<S>& retain_probs,
                                 double gamma, const std::vector<std::uint8_t>& special_mask,
                                 const std::vector<std::uint8_t>& pad_mask, GateMode mode) const {
        std::vector<std::uint8_t> force_drop(pad_mask.size());
        for (std::size_t i = 0; i < pad_mask.size(); ++i) force_drop[i] = pad_mask[i] ? 0 : 1;
        return gate_embeddings(token_embeddings, retain_probs, gamma, special_mask, force_drop, mode);
    }

    void collect_params(std::vector<std::pair<std::string, Tensor<S>>>& out) {
        out.emplace_back("sampler.wq", wq_);
        out.emplace_back("sampler.wk", wk_);
    }

    Tensor<S>& wq() { return wq_; }
    Tensor<S>& wk() { return wk_; }

    static constexpr double kInitStd = 0.02;

  private:
    std::int64_t d_h_;
    Tensor<S> wq_, wk_;
    mutable std::int64_t forward_calls_ = 0;
};

}  // namespace hgclr
