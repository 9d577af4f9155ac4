#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "milnce/matrix.hpp"
#include "milnce/rng.hpp"

namespace milnce {

/// Knobs for the synthetic narrated-stream generator. Narrations are noisy in
/// two ways: with probability pIrrelevant the narration is off-topic chatter,
/// and otherwise with probability 1 - pAligned it describes a segment up to
/// maxOffset positions away instead of its own clip.
struct GenConfig {
    std::size_t numStreams = 2000;
    std::size_t segmentsPerStream = 12;
    std::size_t numTopics = 20;
    std::size_t topicDim = 16;
    std::size_t clipDim = 32;
    std::size_t vocabSize = 200;
    std::size_t tokensPerNarration = 8;
    double noiseSigma = 0.1;
    double pAligned = 0.5;
    std::size_t maxOffset = 2;
    double pIrrelevant = 0.1;
    std::uint64_t seed = 1;

    void validate() const {
        if (numStreams < 1 || segmentsPerStream < 1) {
            throw std::invalid_argument("GenConfig: need at least one stream and one segment");
        }
        if (numTopics < 1 || topicDim < 1 || clipDim < 1 || tokensPerNarration < 1) {
            throw std::invalid_argument("GenConfig: dimensions must be positive");
        }
        if (vocabSize < numTopics + 1) {
            throw std::invalid_argument(
                "GenConfig: vocabSize must be at least numTopics + 1 so every topic and the "
                "noise class own a nonempty token slice");
        }
        if (pAligned < 0.0 || pAligned > 1.0 || pIrrelevant < 0.0 || pIrrelevant > 1.0) {
            throw std::invalid_argument("GenConfig: probabilities must lie in [0, 1]");
        }
        if (noiseSigma < 0.0) {
            throw std::invalid_argument("GenConfig: noiseSigma must be nonnegative");
        }
        if (pAligned < 1.0 && maxOffset < 1) {
            throw std::invalid_argument("GenConfig: maxOffset must be >= 1 when pAligned < 1");
        }
    }
};

enum class AlignmentKind : std::uint8_t {
    aligned = 0,     // narration describes its own clip
    misaligned = 1,  // narration describes a nearby segment's clip
    irrelevant = 2,  // narration is noise-class chatter, matches nothing
};

struct Segment {
    double timestamp = 0.0;
    std::uint32_t topicId = 0;          // latent class of the clip
    std::vector<double> clip;           // clipDim features
    std::vector<std::uint32_t> tokens;  // narration token ids
    std::uint32_t alignedTopicId = 0;   // topic the narration actually describes
    AlignmentKind kind = AlignmentKind::aligned;
    std::size_t matchedSegment = 0;     // index whose clip the narration describes
                                        // (meaningless when kind == irrelevant)

    bool isIrrelevant() const { return kind == AlignmentKind::irrelevant; }
};

struct Stream {
    std::size_t id = 0;
    std::vector<Segment> segments;  // strictly increasing timestamps
};

struct Corpus {
    GenConfig config;
    std::vector<Stream> streams;
};

// ---------------------------------------------------------------------------
// Topic token slices. The vocabulary is cut into numTopics + 1 disjoint
// slices of width floor(V / (numTopics + 1)); slice t belongs to topic t and
// the final slice (plus the division remainder) is the noise class used by
// irrelevant narrations. Every slice is nonempty because V >= numTopics + 1.
// ---------------------------------------------------------------------------

struct TokenSlice {
    std::uint32_t begin;
    std::uint32_t end;  // exclusive
    std::uint32_t width() const { return end - begin; }
};

/// `topic` may be numTopics, which designates the noise class.
inline TokenSlice topic_token_slice(const GenConfig& cfg, std::uint32_t topic) {
    auto w = static_cast<std::uint32_t>(cfg.vocabSize / (cfg.numTopics + 1));
    if (topic > cfg.numTopics) {
        throw std::invalid_argument("topic_token_slice: topic id out of range");
    }
    if (topic == cfg.numTopics) {
        return TokenSlice{static_cast<std::uint32_t>(cfg.numTopics * w),
                          static_cast<std::uint32_t>(cfg.vocabSize)};
    }
    return TokenSlice{topic * w, (topic + 1) * w};
}

inline std::uint32_t noise_class_id(const GenConfig& cfg) {
    return static_cast<std::uint32_t>(cfg.numTopics);
}

namespace detail {

/// Per-topic latent vectors and the fixed projection into clip space, both
/// derived from the corpus seed and independent of stream order.
struct TopicModel {
    Matrix latents;     // numTopics x topicDim, unit normal entries
    Matrix projection;  // topicDim x clipDim, normal scaled by 1/sqrt(topicDim)
};

inline TopicModel make_topic_model(const GenConfig& cfg, const Rng& root) {
    TopicModel tm;
    Rng zr = root.child("corpus.topics");
    tm.latents = Matrix(cfg.numTopics, cfg.topicDim);
    for (double& x : tm.latents.data) x = zr.next_normal();
    Rng pr = root.child("corpus.projection");
    tm.projection = Matrix(cfg.topicDim, cfg.clipDim);
    double scale = 1.0 / std::sqrt(static_cast<double>(cfg.topicDim));
    for (double& x : tm.projection.data) x = pr.next_normal() * scale;
    return tm;
}

inline std::vector<double> topic_clip_mean(const TopicModel& tm, std::uint32_t topic) {
    std::vector<double> clip(tm.projection.cols, 0.0);
    for (std::size_t k = 0; k < tm.projection.rows; ++k) {
        double z = tm.latents(topic, k);
        for (std::size_t j = 0; j < tm.projection.cols; ++j) {
            clip[j] += z * tm.projection(k, j);
        }
    }
    return clip;
}

}  // namespace detail

/// Generates one stream from its own child generator, so streams could be
/// produced in parallel without changing the result. Draw order within a
/// stream: first pass fills timestamps, topics and clips for every segment;
/// second pass draws narration branch, offset and tokens per segment.
inline Stream generate_stream(const GenConfig& cfg, const detail::TopicModel& tm,
                              std::size_t streamIdx, const Rng& root) {
    Rng rng = root.child("stream/" + std::to_string(streamIdx));
    Stream s;
    s.id = streamIdx;
    s.segments.resize(cfg.segmentsPerStream);

    double t = 0.0;
    for (auto& seg : s.segments) {
        t += rng.next_uniform(2.0, 6.0);  // clip-length-ish spacing, strictly increasing
        seg.timestamp = t;
        seg.topicId = static_cast<std::uint32_t>(rng.next_below(cfg.numTopics));
        seg.clip = detail::topic_clip_mean(tm, seg.topicId);
        for (double& x : seg.clip) x += cfg.noiseSigma * rng.next_normal();
    }

    const auto last = static_cast<std::ptrdiff_t>(cfg.segmentsPerStream) - 1;
    for (std::size_t i = 0; i < s.segments.size(); ++i) {
        Segment& seg = s.segments[i];
        if (rng.next_double() < cfg.pIrrelevant) {
            seg.kind = AlignmentKind::irrelevant;
            seg.alignedTopicId = noise_class_id(cfg);
            seg.matchedSegment = i;
        } else if (rng.next_double() < cfg.pAligned) {
            seg.kind = AlignmentKind::aligned;
            seg.alignedTopicId = seg.topicId;
            seg.matchedSegment = i;
        } else {
            seg.kind = AlignmentKind::misaligned;
            // u uniform over {-maxOffset..-1, 1..maxOffset}, target clamped to
            // the stream bounds (which can fold boundary segments back onto
            // themselves; the recorded match stays honest either way).
            auto r = rng.next_below(2 * cfg.maxOffset);
            auto u = static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(cfg.maxOffset);
            if (u >= 0) u += 1;
            auto target = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i) + u, 0, last);
            seg.matchedSegment = static_cast<std::size_t>(target);
            seg.alignedTopicId = s.segments[seg.matchedSegment].topicId;
        }
        TokenSlice slice = topic_token_slice(cfg, seg.alignedTopicId);
        seg.tokens.resize(cfg.tokensPerNarration);
        for (auto& tok : seg.tokens) {
            tok = slice.begin + static_cast<std::uint32_t>(rng.next_below(slice.width()));
        }
    }
    return s;
}

inline Corpus generate_corpus(const GenConfig& cfg) {
    cfg.validate();
    Corpus c;
    c.config = cfg;
    Rng root(cfg.seed);
    detail::TopicModel tm = detail::make_topic_model(cfg, root);
    c.streams.reserve(cfg.numStreams);
    for (std::size_t i = 0; i < cfg.numStreams; ++i) {
        c.streams.push_back(generate_stream(cfg, tm, i, root));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Ground truth for evaluation.
// ---------------------------------------------------------------------------

struct NarrationTruth {
    bool matched = false;           // false for irrelevant narrations
    std::size_t matchedSegment = 0; // within-stream index the narration describes
    std::uint32_t narratedTopic = 0;
};

/// Per stream, per segment: which clip each narration actually describes.
/// Irrelevant narrations are marked unmatched and excluded from retrieval and
/// localization scoring.
inline std::vector<std::vector<NarrationTruth>> ground_truth(const Corpus& corpus) {
    std::vector<std::vector<NarrationTruth>> gt;
    gt.reserve(corpus.streams.size());
    for (const Stream& s : corpus.streams) {
        std::vector<NarrationTruth> row;
        row.reserve(s.segments.size());
        for (const Segment& seg : s.segments) {
            row.push_back(NarrationTruth{!seg.isIrrelevant(), seg.matchedSegment,
                                         seg.alignedTopicId});
        }
        gt.push_back(std::move(row));
    }
    return gt;
}

/// Deterministic split: the last floor(fraction * n) streams (at least one,
/// at most n - 1 when n >= 2) are held out and never sampled during training.
struct StreamSplit {
    std::size_t trainEnd = 0;   // streams [0, trainEnd) train
    std::size_t total = 0;      // streams [trainEnd, total) held out

    std::size_t heldoutCount() const { return total - trainEnd; }
};

inline StreamSplit split_streams(std::size_t numStreams, double heldoutFraction) {
    StreamSplit sp;
    sp.total = numStreams;
    if (numStreams < 2 || heldoutFraction <= 0.0) {
        sp.trainEnd = numStreams;
        return sp;
    }
    auto k = static_cast<std::size_t>(static_cast<double>(numStreams) * heldoutFraction);
    k = std::min(std::max<std::size_t>(k, 1), numStreams - 1);
    sp.trainEnd = numStreams - k;
    return sp;
}

struct CorpusStats {
    double misalignedFraction = 0.0;  // misaligned branch among non-irrelevant segments
    double irrelevantFraction = 0.0;  // irrelevant among all segments
    std::size_t totalSegments = 0;
    std::size_t relevantSegments = 0;
};

inline CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats st;
    std::size_t mis = 0, irr = 0;
    for (const Stream& s : corpus.streams) {
        for (const Segment& seg : s.segments) {
            ++st.totalSegments;
            if (seg.kind == AlignmentKind::misaligned) ++mis;
            if (seg.kind == AlignmentKind::irrelevant) ++irr;
        }
    }
    st.relevantSegments = st.totalSegments - irr;
    if (st.totalSegments > 0) {
        st.irrelevantFraction =
            static_cast<double>(irr) / static_cast<double>(st.totalSegments);
    }
    if (st.relevantSegments > 0) {
        st.misalignedFraction =
            static_cast<double>(mis) / static_cast<double>(st.relevantSegments);
    }
    return st;
}

}  // namespace milnce
