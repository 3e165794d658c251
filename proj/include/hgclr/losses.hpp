#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgclr/ops.hpp"
#include "hgclr/rng.hpp"
#include "hgclr/tensor.hpp"

namespace hgclr {

// Two-layer projection without biases: c = W2 ReLU(W1 h), applied rowwise.
// Shared between the original and positive branches.
template <class S>
class ProjectionHead {
  public:
    ProjectionHead(std::int64_t d_h, RngStream init) {
        w1_ = Tensor<S>::randn({d_h, d_h}, init, kInitStd, true);
        w2_ = Tensor<S>::randn({d_h, d_h}, init, kInitStd, true);
    }

    Tensor<S> project(const Tensor<S>& h) const { return matmul(relu(matmul(h, w1_)), w2_); }

    void collect_params(std::vector<std::pair<std::string, Tensor<S>>>& out) {
        out.emplace_back("projection.w1", w1_);
        out.emplace_back("projection.w2", w2_);
    }

    Tensor<S>& w1() { return w1_; }
    Tensor<S>& w2() { return w2_; }

    static constexpr double kInitStd = 0.02;

  private:
    Tensor<S> w1_, w2_;
};

// NT-Xent over a batch of N positive pairs: 2N rows, partner-positive,
// every other row negative, self excluded from the denominator.
template <class S>
Tensor<S> ntxent_loss(const Tensor<S>& c, const Tensor<S>& c_positive, S tau) {
    if (!(tau > S(0))) throw InvalidArgument("ntxent_loss: tau must be positive");
    if (c.rank() != 2 || c_positive.rank() != 2 || c.shape() != c_positive.shape())
        throw ShapeError("ntxent_loss: branches must share shape (N, d)");
    const std::int64_t N = c.dim(0);
    auto z = row_normalize(concat_rows(c, c_positive));
    auto sims = scale(matmul_nt(z, z), S(1) / tau);

    // Self-similarities leave the denominator via a large negative constant.
    auto diag = Tensor<S>::zeros({2 * N, 2 * N});
    for (std::int64_t i = 0; i < 2 * N; ++i)
        diag.data()[i * 2 * N + i] = detail::mask_neg<S>();
    auto masked = add(sims, diag);

    std::vector<std::int64_t> partner(static_cast<std::size_t>(2 * N));
    for (std::int64_t m = 0; m < 2 * N; ++m)
        partner[static_cast<std::size_t>(m)] = m < N ? m + N : m - N;
    return mean_all(sub(logsumexp_lastdim(masked), gather_pairs(masked, partner)));
}

// Eq.-style double sum over documents and labels, computed from logits in the
// stable form; MeanBatch divides by N only.
template <class S>
Tensor<S> bce_multilabel_loss(const Tensor<S>& logits, const std::vector<std::uint8_t>& multihot,
                              BceReduction reduction) {
    if (static_cast<std::int64_t>(multihot.size()) != logits.numel())
        throw ShapeError("bce_multilabel_loss: target size mismatch");
    std::vector<S> targets(multihot.size());
    for (std::size_t i = 0; i < multihot.size(); ++i) targets[i] = multihot[i] ? S(1) : S(0);
    return bce_with_logits(logits, targets, reduction);
}

template <class S>
struct LossReport {
    S classification = S(0);           // L^C
    S positive_classification = S(0);  // classification loss of the positive branch
    S contrastive = S(0);
    S lambda = S(0);
    S total = S(0);
};

}  // namespace hgclr
