#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hgclr/gradcheck.hpp"
#include "hgclr/text_encoder.hpp"

using namespace hgclr;

namespace {

EncoderConfig toy_config(std::int64_t vocab = 12, std::int64_t d = 8, std::int64_t layers = 1,
                         std::int64_t heads = 2, std::int64_t max_len = 16) {
    EncoderConfig cfg;
    cfg.vocab_size = vocab;
    cfg.d_h = d;
    cfg.n_layers = layers;
    cfg.n_heads = heads;
    cfg.max_len = max_len;
    cfg.dropout = 0.0;
    return cfg;
}

Tensor64 weighted_sum(const Tensor64& t, std::uint64_t seed) {
    RngStream rng(seed, 99);
    auto w = Tensor64::zeros(t.shape());
    for (auto& v : w.mutable_values()) v = rng.normal();
    return sum_all(mul(t, w));
}

}  // namespace

TEST_CASE("encode output shapes and pooled row") {
    TextEncoder<double> enc(toy_config(), RngStream(1, RngStream::kInit));
    std::vector<std::int32_t> ids{2, 6, 7, 3, 2, 8, 3, 0};
    std::vector<std::uint8_t> pad{1, 1, 1, 1, 1, 1, 1, 0};
    auto e = enc.embed_tokens(ids, 2, 4);
    CHECK(e.shape() == Shape{2, 4, 8});
    auto out = enc.encode(e, pad, false, nullptr);
    CHECK(out.hidden.shape() == Shape{2, 4, 8});
    CHECK(out.pooled.shape() == Shape{2, 8});
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t c = 0; c < 8; ++c)
            CHECK(out.pooled.at(b, c) == out.hidden.at(b, 0, c));
}

TEST_CASE("embedding lookup is a pure table read") {
    TextEncoder<double> enc(toy_config(), RngStream(2, RngStream::kInit));
    auto e = enc.embed_tokens({5, 5}, 1, 2);
    for (std::int64_t c = 0; c < 8; ++c) CHECK(e.at(0, 0, c) == e.at(0, 1, c));

    // Reserved zero-embedding row starts and stays exactly zero.
    auto z = enc.embed_tokens({Vocabulary::kZero}, 1, 1);
    for (std::int64_t c = 0; c < 8; ++c) CHECK(z.at(0, 0, c) == 0.0);

    CHECK_THROWS_AS(enc.embed_tokens({99}, 1, 1), InvalidArgument);
}

TEST_CASE("sequence longer than max_len is rejected") {
    TextEncoder<double> enc(toy_config(12, 8, 1, 2, 4), RngStream(3, RngStream::kInit));
    std::vector<std::int32_t> ids(6, 2);
    std::vector<std::uint8_t> pad(6, 1);
    auto e = enc.embed_tokens(ids, 1, 6);
    CHECK_THROWS_AS(enc.encode(e, pad, false, nullptr), InvalidArgument);
}

TEST_CASE("padding invariance: extra pads leave real positions unchanged") {
    TextEncoder<double> enc(toy_config(), RngStream(4, RngStream::kInit));
    std::vector<std::int32_t> ids{2, 6, 7, 3};
    std::vector<std::uint8_t> pad{1, 1, 1, 1};
    auto short_out = enc.encode(enc.embed_tokens(ids, 1, 4), pad, false, nullptr);

    std::vector<std::int32_t> padded{2, 6, 7, 3, 0, 0};
    std::vector<std::uint8_t> pad2{1, 1, 1, 1, 0, 0};
    auto long_out = enc.encode(enc.embed_tokens(padded, 1, 6), pad2, false, nullptr);

    for (std::int64_t i = 0; i < 4; ++i)
        for (std::int64_t c = 0; c < 8; ++c)
            CHECK(long_out.hidden.at(0, i, c) ==
                  doctest::Approx(short_out.hidden.at(0, i, c)).epsilon(1e-6));
}

TEST_CASE("batch order permutation permutes outputs") {
    TextEncoder<double> enc(toy_config(), RngStream(5, RngStream::kInit));
    std::vector<std::int32_t> ids{2, 6, 7, 3, 2, 8, 9, 3};
    std::vector<std::uint8_t> pad(8, 1);
    auto out = enc.encode(enc.embed_tokens(ids, 2, 4), pad, false, nullptr);

    std::vector<std::int32_t> swapped{2, 8, 9, 3, 2, 6, 7, 3};
    auto out2 = enc.encode(enc.embed_tokens(swapped, 2, 4), pad, false, nullptr);
    for (std::int64_t i = 0; i < 4; ++i)
        for (std::int64_t c = 0; c < 8; ++c) {
            CHECK(out.hidden.at(0, i, c) == out2.hidden.at(1, i, c));
            CHECK(out.hidden.at(1, i, c) == out2.hidden.at(0, i, c));
        }
}

TEST_CASE("padded positions receive no gradient") {
    TextEncoder<double> enc(toy_config(), RngStream(6, RngStream::kInit));
    std::vector<std::int32_t> ids{2, 6, 3, 0, 2, 7, 8, 3};
    std::vector<std::uint8_t> pad{1, 1, 1, 0, 1, 1, 1, 1};
    auto e = enc.embed_tokens(ids, 2, 4);
    auto out = enc.encode(e, pad, false, nullptr);
    backward(weighted_sum(out.pooled, 7));
    // Raw embedding gradient at the padded position is exactly zero.
    for (std::int64_t c = 0; c < 8; ++c) CHECK(e.grad_at((0 * 4 + 3) * 8 + c) == 0.0);
    // And nothing reached the [PAD] table row.
    for (std::int64_t c = 0; c < 8; ++c)
        CHECK(enc.token_table().grad_at(Vocabulary::kPad * 8 + c) == 0.0);
}

TEST_CASE("full encoder passes the FD gradient check on a 2x8 toy batch") {
    TextEncoder<double> enc(toy_config(14, 8, 2, 2, 8), RngStream(7, RngStream::kInit));
    std::vector<std::int32_t> ids{2, 6, 7, 8, 9, 10, 11, 3, 2, 6, 9, 9, 3, 0, 0, 0};
    std::vector<std::uint8_t> pad{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0};
    std::vector<std::pair<std::string, Tensor64>> params;
    enc.collect_params(params);
    auto f = [&]() {
        auto out = enc.encode(enc.embed_tokens(ids, 2, 8), pad, false, nullptr);
        return weighted_sum(out.pooled, 11);
    };
    // Step 1e-6 keeps central differences off ReLU kinks; truncation error in
    // 64-bit mode stays near 1e-9.
    auto report = finite_diff_gradcheck<double>(f, params, 1e-6);
    CHECK(report.max_rel_err < 1e-4);
    MESSAGE("encoder FD worst: " << report.max_rel_err << " at " << report.worst_param);
}

TEST_CASE("dropout is active in training mode and disabled in eval") {
    auto cfg = toy_config();
    cfg.dropout = 0.5;
    TextEncoder<double> enc(cfg, RngStream(8, RngStream::kInit));
    std::vector<std::int32_t> ids{2, 6, 7, 3};
    std::vector<std::uint8_t> pad(4, 1);
    auto e = enc.embed_tokens(ids, 1, 4);

    RngStream d1(1, RngStream::kDropout), d2(2, RngStream::kDropout);
    auto a = enc.encode(e, pad, true, &d1);
    auto b = enc.encode(e, pad, true, &d2);
    CHECK(a.pooled.values() != b.pooled.values());

    auto c = enc.encode(e, pad, false, nullptr);
    auto d = enc.encode(e, pad, false, nullptr);
    CHECK(c.pooled.values() == d.pooled.values());
}
