#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "milnce/corpus.hpp"
#include "milnce/sampling.hpp"

using namespace milnce;

namespace {

Stream uniform_stream(std::size_t n, double gap = 1.0) {
    Stream s;
    s.id = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Segment seg;
        seg.timestamp = gap * static_cast<double>(i + 1);
        seg.tokens = {static_cast<std::uint32_t>(i)};
        s.segments.push_back(seg);
    }
    return s;
}

}  // namespace

TEST_CASE("positive bag takes the temporally nearest narrations") {
    Stream s = uniform_stream(7);
    CandidateBag bag = build_positive_bag(s, 0, 3, 3);
    REQUIRE(bag.candidateSegments == std::vector<std::size_t>{2, 3, 4});

    CandidateBag single = build_positive_bag(s, 0, 3, 1);
    REQUIRE(single.candidateSegments == std::vector<std::size_t>{3});

    // First segment: the window extends forward only.
    CandidateBag boundary = build_positive_bag(s, 0, 0, 5);
    REQUIRE(boundary.candidateSegments == std::vector<std::size_t>{0, 1, 2, 3, 4});

    // Last segment symmetric case.
    CandidateBag tail = build_positive_bag(s, 0, 6, 5);
    REQUIRE(tail.candidateSegments == std::vector<std::size_t>{2, 3, 4, 5, 6});
}

TEST_CASE("equidistant candidates at the window boundary resolve earlier") {
    // Timestamps 3, 4, 5, 7 with anchor index 2 (t=5): distances are
    // {2, 1, -, 2}. K=3 has two slots: segment 1 (distance 1) enters first,
    // then segments 0 and 3 tie at distance 2 and the earlier one wins.
    Stream s;
    for (double t : {3.0, 4.0, 5.0, 7.0}) {
        Segment seg;
        seg.timestamp = t;
        s.segments.push_back(seg);
    }
    CandidateBag bag = build_positive_bag(s, 0, 2, 3);
    REQUIRE(bag.candidateSegments == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("bag validation") {
    Stream s = uniform_stream(4);
    REQUIRE_THROWS_AS(build_positive_bag(s, 0, 1, 5), std::invalid_argument);   // K > length
    REQUIRE_THROWS_AS(build_positive_bag(s, 0, 1, 2), std::invalid_argument);   // even K
    REQUIRE_THROWS_AS(build_positive_bag(s, 0, 9, 3), std::invalid_argument);   // bad anchor
    // |P| == K and the anchor is always a member.
    for (std::size_t k : {1u, 3u}) {
        for (std::size_t anchor = 0; anchor < 4; ++anchor) {
            CandidateBag bag = build_positive_bag(s, 0, anchor, k);
            REQUIRE(bag.candidateSegments.size() == k);
            REQUIRE(std::count(bag.candidateSegments.begin(), bag.candidateSegments.end(),
                               anchor) == 1);
        }
    }
}

TEST_CASE("negative sets by mode") {
    // B=3 joint: 4 negatives per sample.
    auto joint = build_negatives(NegativeMode::joint, 3, 0);
    REQUIRE(joint.size() == 4);
    REQUIRE(joint == std::vector<NegativePair>{{0, 1}, {0, 2}, {1, 0}, {2, 0}});

    // B=2 joint for sample 0: {(x0,y1),(x1,y0)}.
    auto pair = build_negatives(NegativeMode::joint, 2, 0);
    REQUIRE(pair == std::vector<NegativePair>{{0, 1}, {1, 0}});

    // (y|x): fixed clip, other narrations.
    auto tgv = build_negatives(NegativeMode::text_given_video, 3, 1);
    REQUIRE(tgv == std::vector<NegativePair>{{1, 0}, {1, 2}});

    // (x|y): fixed narration, other clips.
    auto vgt = build_negatives(NegativeMode::video_given_text, 3, 1);
    REQUIRE(vgt == std::vector<NegativePair>{{0, 1}, {2, 1}});

    REQUIRE_THROWS_AS(build_negatives(NegativeMode::joint, 1, 0), std::invalid_argument);
}

TEST_CASE("joint negatives are the disjoint union of the asymmetric sets") {
    for (std::size_t b : {2u, 3u, 8u, 32u}) {
        for (std::size_t i = 0; i < b; ++i) {
            auto joint = build_negatives(NegativeMode::joint, b, i);
            auto tgv = build_negatives(NegativeMode::text_given_video, b, i);
            auto vgt = build_negatives(NegativeMode::video_given_text, b, i);
            REQUIRE(joint.size() == 2 * (b - 1));
            REQUIRE(tgv.size() == b - 1);
            REQUIRE(vgt.size() == b - 1);
            std::set<std::pair<std::size_t, std::size_t>> js, ts, vs;
            for (auto p : joint) js.insert({p.clip, p.narration});
            for (auto p : tgv) ts.insert({p.clip, p.narration});
            for (auto p : vgt) vs.insert({p.clip, p.narration});
            REQUIRE(js.size() == joint.size());
            std::set<std::pair<std::size_t, std::size_t>> unionSet = ts;
            unionSet.insert(vs.begin(), vs.end());
            REQUIRE(unionSet == js);
            for (auto p : ts) REQUIRE_FALSE(vs.count(p));
            // No same-sample (positive) pair ever shows up as a negative.
            for (auto p : js) REQUIRE(p.first != p.second);
        }
    }
}

TEST_CASE("candidate concatenation preserves temporal order and truncates") {
    Stream s;
    for (std::size_t i = 0; i < 3; ++i) {
        Segment seg;
        seg.timestamp = static_cast<double>(i + 1);
        for (std::uint32_t t = 0; t < 8; ++t) seg.tokens.push_back(i * 8 + t);
        s.segments.push_back(seg);
    }
    CandidateBag one;
    one.candidateSegments = {1};
    REQUIRE(concat_candidates(s, one, 16) == s.segments[1].tokens);

    CandidateBag two;
    two.candidateSegments = {0, 1};
    Narration cat = concat_candidates(s, two, 16);
    REQUIRE(cat.size() == 16);
    for (std::uint32_t t = 0; t < 16; ++t) REQUIRE(cat[t] == t);

    CandidateBag three;
    three.candidateSegments = {0, 1, 2};
    Narration catTrunc = concat_candidates(s, three, 16);
    REQUIRE(catTrunc.size() == 16);
    for (std::uint32_t t = 0; t < 16; ++t) REQUIRE(catTrunc[t] == t);

    CandidateBag empty;
    REQUIRE_THROWS_AS(concat_candidates(s, empty, 16), std::invalid_argument);
}

TEST_CASE("batch anchors are distinct, in range and reproducible") {
    GenConfig cfg;
    cfg.numStreams = 10;
    cfg.segmentsPerStream = 6;
    cfg.numTopics = 4;
    cfg.topicDim = 3;
    cfg.clipDim = 4;
    cfg.vocabSize = 20;
    cfg.tokensPerNarration = 3;
    cfg.seed = 3;
    Corpus corpus = generate_corpus(cfg);

    Rng r1(77), r2(77);
    auto a1 = sample_batch_anchors(corpus, 8, 16, r1);
    auto a2 = sample_batch_anchors(corpus, 8, 16, r2);
    REQUIRE(a1 == a2);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const Anchor& a : a1) {
        REQUIRE(a.streamIdx < 8);  // held-out streams are never sampled
        REQUIRE(a.segmentIdx < 6);
        REQUIRE(seen.insert({a.streamIdx, a.segmentIdx}).second);
    }
    Rng r3(1);
    REQUIRE_THROWS_AS(sample_batch_anchors(corpus, 1, 16, r3), std::invalid_argument);
}
