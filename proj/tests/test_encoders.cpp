#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "milnce/encoders.hpp"
#include "milnce/rng.hpp"

using namespace milnce;

namespace {

VideoEncoderParams one_dim_video(double w1, double w2, bool withHead = false,
                                 double wa = 0.0) {
    VideoEncoderParams p;
    p.w1 = Matrix::from_rows({{w1}});
    p.b1 = {0.0};
    p.w2 = Matrix::from_rows({{w2}});
    p.b2 = {0.0};
    if (withHead) p.attn = AttentionHead{Matrix::from_rows({{wa}}), {0.0}};
    return p;
}

TextEncoderParams one_dim_text(double e, double w1, double w2) {
    TextEncoderParams p;
    p.embedding = Matrix::from_rows({{e}});
    p.w1 = Matrix::from_rows({{w1}});
    p.b1 = {0.0};
    p.w2 = Matrix::from_rows({{w2}});
    p.b2 = {0.0};
    p.maxWords = 4;
    return p;
}

}  // namespace

TEST_CASE("embed_video hand-worked cases") {
    // All-zero weights give the zero vector.
    VideoEncoderParams zero;
    zero.w1 = Matrix(3, 4);
    zero.b1.assign(4, 0.0);
    zero.w2 = Matrix(4, 2);
    zero.b2.assign(2, 0.0);
    auto out = embed_video(zero, std::vector<double>{1.0, -2.0, 3.0});
    REQUIRE(out == std::vector<double>{0.0, 0.0});

    auto p = one_dim_video(1.0, 2.0);
    REQUIRE(embed_video(p, std::vector<double>{3.0}) == std::vector<double>{6.0});
    REQUIRE(embed_video(p, std::vector<double>{-3.0}) == std::vector<double>{0.0});

    REQUIRE_THROWS_AS(embed_video(p, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("embed_text hand-worked cases") {
    auto p = one_dim_text(1.0, 1.0, 1.0);
    REQUIRE(embed_text(p, Narration{0}) == std::vector<double>{1.0});

    // Zero trainable weights (frozen table may be anything).
    auto pz = one_dim_text(7.0, 0.0, 0.0);
    REQUIRE(embed_text(pz, Narration{0}) == std::vector<double>{0.0});

    // A repeated word does not change the pooled maximum.
    REQUIRE(embed_text(p, Narration{0, 0}) == embed_text(p, Narration{0}));

    REQUIRE_THROWS_AS(embed_text(p, Narration{}), std::invalid_argument);
    REQUIRE_THROWS_AS(embed_text(p, Narration{5}), std::invalid_argument);
}

TEST_CASE("embed_text is exactly permutation invariant") {
    EncoderConfig cfg{3, 4, 6, 5, 30, 8, false};
    Rng rng(99);
    TextEncoderParams p = init_text_encoder(cfg, rng);
    Narration y{3, 17, 4, 29, 3, 11};
    Narration shuffled{29, 3, 11, 3, 17, 4};
    REQUIRE(embed_text(p, y) == embed_text(p, shuffled));
}

TEST_CASE("narrations truncate to the first maxWords tokens") {
    EncoderConfig cfg{3, 4, 6, 5, 30, 3, false};
    Rng rng(7);
    TextEncoderParams p = init_text_encoder(cfg, rng);
    Narration longNarration{1, 2, 3, 4, 5, 6};
    Narration firstThree{1, 2, 3};
    REQUIRE(embed_text(p, longNarration) == embed_text(p, firstThree));
}

TEST_CASE("attention head shares the trunk and swaps the projection") {
    auto p = one_dim_video(1.0, 2.0, true, 3.0);
    // Trunk output for x = 1 is relu(1) = 1; main projection doubles it,
    // the head triples it.
    REQUIRE(embed_video(p, std::vector<double>{1.0}) == std::vector<double>{2.0});
    REQUIRE(embed_video_attention(p, std::vector<double>{1.0}) == std::vector<double>{3.0});

    // Head equal to the main projection reproduces the main output.
    p.attn->w = p.w2;
    p.attn->b = p.b2;
    REQUIRE(embed_video_attention(p, std::vector<double>{1.0}) ==
            embed_video(p, std::vector<double>{1.0}));

    // Zero head gives the zero vector.
    p.attn->w = Matrix(1, 1);
    p.attn->b = {0.0};
    REQUIRE(embed_video_attention(p, std::vector<double>{1.0}) == std::vector<double>{0.0});

    auto noHead = one_dim_video(1.0, 2.0);
    REQUIRE_THROWS_AS(embed_video_attention(noHead, std::vector<double>{1.0}),
                      std::invalid_argument);
    auto textNoHead = one_dim_text(1.0, 1.0, 1.0);
    REQUIRE_THROWS_AS(embed_text_attention(textNoHead, Narration{0}), std::invalid_argument);
}

TEST_CASE("initialization is reproducible and within the fan bounds") {
    EncoderConfig cfg{8, 4, 16, 6, 50, 16, true};
    Rng rng(123);
    VideoEncoderParams a = init_video_encoder(cfg, rng);
    VideoEncoderParams b = init_video_encoder(cfg, Rng(123));
    REQUIRE(a.w1 == b.w1);
    REQUIRE(a.w2 == b.w2);
    REQUIRE(a.attn->w == b.attn->w);

    double limit = std::sqrt(6.0 / (8.0 + 16.0));
    for (double x : a.w1.data) {
        REQUIRE(std::abs(x) <= limit);
    }
    REQUIRE(std::all_of(a.b1.begin(), a.b1.end(), [](double x) { return x == 0.0; }));

    // Attention-head presence must not perturb the trunk draws.
    EncoderConfig noAttn = cfg;
    noAttn.attentionHeads = false;
    VideoEncoderParams c = init_video_encoder(noAttn, Rng(123));
    REQUIRE(a.w1 == c.w1);
    REQUIRE(a.w2 == c.w2);
}

TEST_CASE("text embedding table is unit-variance-ish and frozen by omission") {
    EncoderConfig cfg{8, 16, 16, 6, 400, 16, false};
    TextEncoderParams p = init_text_encoder(cfg, Rng(5));
    double sum = 0.0, sumSq = 0.0;
    for (double x : p.embedding.data) {
        sum += x;
        sumSq += x * x;
    }
    double n = static_cast<double>(p.embedding.data.size());
    REQUIRE(std::abs(sum / n) < 0.05);
    REQUIRE(sumSq / n == Catch::Approx(1.0).margin(0.05));
}
