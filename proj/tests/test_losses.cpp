#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hgclr/gradcheck.hpp"
#include "hgclr/losses.hpp"

using namespace hgclr;

namespace {

void set_identity(Tensor64& t) {
    const auto d = t.dim(0);
    for (std::int64_t i = 0; i < d; ++i)
        for (std::int64_t j = 0; j < d; ++j) t.data()[i * d + j] = i == j ? 1.0 : 0.0;
}

// Independent oracle: materialize the full 2N x 2N cosine matrix and evaluate
// the loss termwise with plain loops.
double ntxent_bruteforce(const std::vector<std::vector<double>>& c,
                         const std::vector<std::vector<double>>& chat, double tau) {
    const std::size_t n = c.size();
    std::vector<std::vector<double>> z;
    for (auto& r : c) z.push_back(r);
    for (auto& r : chat) z.push_back(r);
    auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
        double d = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            d += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return d / (std::sqrt(na) * std::sqrt(nb));
    };
    double total = 0;
    for (std::size_t m = 0; m < 2 * n; ++m) {
        const std::size_t partner = m < n ? m + n : m - n;
        double denom = 0;
        for (std::size_t i = 0; i < 2 * n; ++i)
            if (i != m) denom += std::exp(cos(z[m], z[i]) / tau);
        total += -std::log(std::exp(cos(z[m], z[partner]) / tau) / denom);
    }
    return total / static_cast<double>(2 * n);
}

// Naive probability-space BCE with boundary clamping, used as the oracle for
// the stable logit form.
double bce_naive(const std::vector<double>& p, const std::vector<double>& y) {
    double total = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
        total += -y[i] * std::log(q) - (1.0 - y[i]) * std::log(1.0 - q);
    }
    return total;
}

}  // namespace

TEST_CASE("projection head basics") {
    ProjectionHead<double> head(3, RngStream(1, RngStream::kInit));

    auto zero = head.project(Tensor64::zeros({2, 3}));
    for (std::int64_t i = 0; i < zero.numel(); ++i) CHECK(zero.values()[static_cast<std::size_t>(i)] == 0.0);

    set_identity(head.w1());
    set_identity(head.w2());
    auto h = Tensor64::from_data({1, 3}, {0.5, 1.0, 2.0});
    auto c = head.project(h);
    for (std::int64_t i = 0; i < 3; ++i) CHECK(c.at(0, i) == h.at(0, i));

    ProjectionHead<double> head2(4, RngStream(2, RngStream::kInit));
    RngStream rng(3, 1);
    auto x = Tensor64::randn({3, 4}, rng, 1.0, true);
    std::vector<std::pair<std::string, Tensor64>> params{{"x", x}};
    head2.collect_params(params);
    auto f = [&]() {
        RngStream wr(4, 99);
        auto w = Tensor64::zeros({3, 4});
        for (auto& v : w.mutable_values()) v = wr.normal();
        return sum_all(mul(head2.project(x), w));
    };
    CHECK(finite_diff_gradcheck<double>(f, params, 1e-6).max_rel_err < 1e-4);
}

TEST_CASE("ntxent: single pair gives exactly zero") {
    auto c = Tensor64::from_data({1, 3}, {0.2, -1.0, 0.4});
    auto chat = Tensor64::from_data({1, 3}, {1.0, 0.5, -0.2});
    CHECK(ntxent_loss(c, chat, 1.0).item() == 0.0);
}

TEST_CASE("ntxent: hand-enumerated two-pair batch") {
    auto c = Tensor64::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    auto chat = Tensor64::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    // Every example: -log(e / (e + 2)) = ln(1 + 2/e).
    CHECK(ntxent_loss(c, chat, 1.0).item() ==
          doctest::Approx(std::log(1.0 + 2.0 / std::exp(1.0))).epsilon(1e-12));
    CHECK(ntxent_loss(c, chat, 1.0).item() == doctest::Approx(0.5514447139320511).epsilon(1e-10));
}

TEST_CASE("ntxent matches brute force for N in 1..8") {
    for (std::int64_t n = 1; n <= 8; ++n) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            RngStream rng(seed * 31 + static_cast<std::uint64_t>(n), 5);
            const std::int64_t d = 6;
            auto c = Tensor64::randn({n, d}, rng, 1.0, false);
            auto chat = Tensor64::randn({n, d}, rng, 1.0, false);
            const double tau = 0.5 + rng.uniform();

            std::vector<std::vector<double>> cv, cpv;
            for (std::int64_t i = 0; i < n; ++i) {
                cv.emplace_back(c.values().begin() + i * d, c.values().begin() + (i + 1) * d);
                cpv.emplace_back(chat.values().begin() + i * d, chat.values().begin() + (i + 1) * d);
            }
            const double expect = ntxent_bruteforce(cv, cpv, tau);
            CHECK(ntxent_loss(c, chat, tau).item() == doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("ntxent is invariant to positive rescaling of rows") {
    RngStream rng(9, 1);
    auto c = Tensor64::randn({3, 4}, rng, 1.0, false);
    auto chat = Tensor64::randn({3, 4}, rng, 1.0, false);
    const double base = ntxent_loss(c, chat, 1.0).item();

    auto scaled = c.values();
    for (std::int64_t j = 0; j < 4; ++j) scaled[static_cast<std::size_t>(4 + j)] *= 7.5;
    auto c2 = Tensor64::from_data({3, 4}, scaled);
    CHECK(ntxent_loss(c2, chat, 1.0).item() == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("ntxent input contracts") {
    auto c = Tensor64::from_data({1, 2}, {1.0, 0.0});
    auto zero = Tensor64::zeros({1, 2});
    CHECK_THROWS_AS(ntxent_loss(c, zero, 1.0), NumericError);
    CHECK_THROWS_AS(ntxent_loss(c, c, 0.0), InvalidArgument);
    CHECK_THROWS_AS(ntxent_loss(c, Tensor64::zeros({2, 2}), 1.0), ShapeError);
}

TEST_CASE("ntxent gradient check") {
    RngStream rng(10, 1);
    auto c = Tensor64::randn({3, 4}, rng, 1.0, true);
    auto chat = Tensor64::randn({3, 4}, rng, 1.0, true);
    auto f = [&]() { return ntxent_loss(c, chat, 0.7); };
    CHECK(finite_diff_gradcheck<double>(f, {{"c", c}, {"chat", chat}}).max_rel_err < 1e-4);
}

TEST_CASE("bce analytic examples") {
    {  // single cell p = 0.5, y = 1 -> ln 2
        auto logits = Tensor64::zeros({1, 1});
        CHECK(bce_multilabel_loss(logits, {1}, BceReduction::Sum).item() ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    {  // p = (0.9, 0.2) vs y = (1, 0) -> -ln .9 - ln .8
        auto logits = Tensor64::from_data(
            {1, 2}, {std::log(0.9 / 0.1), std::log(0.2 / 0.8)});
        CHECK(bce_multilabel_loss(logits, {1, 0}, BceReduction::Sum).item() ==
              doctest::Approx(0.3285040669720361).epsilon(1e-10));
    }
    {  // near-perfect fit -> near-zero loss
        auto logits = Tensor64::from_data({1, 2}, {30.0, -30.0});
        CHECK(bce_multilabel_loss(logits, {1, 0}, BceReduction::Sum).item() ==
              doctest::Approx(0.0).epsilon(1e-10));
    }
}

TEST_CASE("stable logit form equals the naive clamped formula") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RngStream rng(seed, 11);
        const std::int64_t n = 3, k = 5;
        auto logits = Tensor64::randn({n, k}, rng, 3.0, false);
        std::vector<std::uint8_t> y(static_cast<std::size_t>(n * k));
        std::vector<double> yd(y.size()), p(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = rng.uniform() < 0.4 ? 1 : 0;
            yd[i] = y[i];
            const double z = logits.values()[i];
            p[i] = 1.0 / (1.0 + std::exp(-z));
        }
        CHECK(bce_multilabel_loss(logits, y, BceReduction::Sum).item() ==
              doctest::Approx(bce_naive(p, yd)).epsilon(1e-6));
    }
}

TEST_CASE("mean reduction divides by the batch size") {
    RngStream rng(12, 1);
    auto logits = Tensor64::randn({4, 3}, rng, 1.0, false);
    std::vector<std::uint8_t> y{1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0, 1};
    const double sum = bce_multilabel_loss(logits, y, BceReduction::Sum).item();
    const double mean = bce_multilabel_loss(logits, y, BceReduction::MeanBatch).item();
    CHECK(mean == doctest::Approx(sum / 4.0).epsilon(1e-12));
}

TEST_CASE("bce gradient check") {
    RngStream rng(13, 1);
    auto logits = Tensor64::randn({3, 4}, rng, 1.0, true);
    std::vector<std::uint8_t> y{1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 1, 1};
    auto f = [&]() { return bce_multilabel_loss(logits, y, BceReduction::Sum); };
    CHECK(finite_diff_gradcheck<double>(f, {{"logits", logits}}).max_rel_err < 1e-4);
}

TEST_CASE("total loss composition: L = LC + LC_hat + lambda * Lcon") {
    for (double lambda : {0.0, 0.1, 0.3, 1.0}) {
        RngStream rng(14, 1);
        auto l1 = Tensor64::randn({2, 3}, rng, 1.0, true);
        auto l2 = Tensor64::randn({2, 3}, rng, 1.0, true);
        auto c = Tensor64::randn({2, 4}, rng, 1.0, true);
        auto chat = Tensor64::randn({2, 4}, rng, 1.0, true);
        std::vector<std::uint8_t> y{1, 0, 1, 0, 1, 0};

        auto lc = bce_multilabel_loss(l1, y, BceReduction::Sum);
        auto lchat = bce_multilabel_loss(l2, y, BceReduction::Sum);
        auto lcon = ntxent_loss(c, chat, 1.0);
        auto total = add(add(lc, lchat), scale(lcon, lambda));

        LossReport<double> report;
        report.classification = lc.item();
        report.positive_classification = lchat.item();
        report.contrastive = lcon.item();
        report.lambda = lambda;
        report.total = total.item();
        CHECK(report.total ==
              doctest::Approx(report.classification + report.positive_classification +
                              lambda * report.contrastive)
                  .epsilon(1e-6));
        // λ = 0 recovers plain two-branch classification.
        if (lambda == 0.0)
            CHECK(report.total == doctest::Approx(report.classification +
                                                  report.positive_classification).epsilon(1e-12));
    }
}
