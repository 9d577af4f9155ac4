#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "milnce/corpus.hpp"
#include "milnce/rng.hpp"

namespace milnce {

/// Positive candidate bag: the anchor clip paired with the K temporally
/// nearest narrations (including its own). Candidates are listed in temporal
/// order and always come from the anchor's stream.
struct CandidateBag {
    std::size_t streamIdx = 0;
    std::size_t anchorSegment = 0;
    std::vector<std::size_t> candidateSegments;  // ascending segment index, length K
};

/// Anchor narration plus the K-1 nearest narrations by timestamp distance.
/// Equidistant candidates resolve toward the earlier segment; at stream
/// boundaries the window extends on the available side so the bag always has
/// exactly K members.
inline CandidateBag build_positive_bag(const Stream& stream, std::size_t streamIdx,
                                       std::size_t anchorIdx, std::size_t k) {
    const std::size_t n = stream.segments.size();
    if (anchorIdx >= n) {
        throw std::invalid_argument("build_positive_bag: anchor index out of range");
    }
    if (k < 1 || k % 2 == 0) {
        throw std::invalid_argument("build_positive_bag: K must be odd and >= 1, got " +
                                    std::to_string(k));
    }
    if (k > n) {
        throw std::invalid_argument("build_positive_bag: K = " + std::to_string(k) +
                                    " exceeds stream length " + std::to_string(n));
    }
    const double t0 = stream.segments[anchorIdx].timestamp;
    std::vector<std::size_t> order;
    order.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
        if (j != anchorIdx) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double da = std::abs(stream.segments[a].timestamp - t0);
        double db = std::abs(stream.segments[b].timestamp - t0);
        if (da != db) return da < db;
        return a < b;  // ties toward the earlier segment
    });
    CandidateBag bag;
    bag.streamIdx = streamIdx;
    bag.anchorSegment = anchorIdx;
    bag.candidateSegments.assign(order.begin(),
                                 order.begin() + static_cast<std::ptrdiff_t>(k - 1));
    bag.candidateSegments.push_back(anchorIdx);
    std::sort(bag.candidateSegments.begin(), bag.candidateSegments.end());
    return bag;
}

enum class NegativeMode {
    joint,             // (x, y): negatives in both directions, |N| = 2(B-1)
    text_given_video,  // (y|x): fix the clip, sample narration negatives, B-1
    video_given_text,  // (x|y): fix the narration, sample clip negatives, B-1
};

inline NegativeMode negative_mode_from_string(const std::string& s) {
    if (s == "joint") return NegativeMode::joint;
    if (s == "text_given_video") return NegativeMode::text_given_video;
    if (s == "video_given_text") return NegativeMode::video_given_text;
    throw std::invalid_argument("unknown negative mode '" + s + "'");
}

inline std::string to_string(NegativeMode m) {
    switch (m) {
        case NegativeMode::joint: return "joint";
        case NegativeMode::text_given_video: return "text_given_video";
        case NegativeMode::video_given_text: return "video_given_text";
    }
    throw std::logic_error("bad NegativeMode");
}

/// A cross-sample pair (clip of sample `clip`, anchor narration of sample
/// `narration`) used as a negative.
struct NegativePair {
    std::size_t clip;
    std::size_t narration;
    bool operator==(const NegativePair&) const = default;
};

/// Batch-local negatives for sample i. Joint mode lists the (x_i, y_j) pairs
/// first, then the (x_j, y_i) pairs, j ascending in both runs.
inline std::vector<NegativePair> build_negatives(NegativeMode mode, std::size_t batchSize,
                                                 std::size_t i) {
    if (batchSize < 2) {
        throw std::invalid_argument("build_negatives: batch size must be >= 2, got " +
                                    std::to_string(batchSize));
    }
    if (i >= batchSize) {
        throw std::invalid_argument("build_negatives: sample index out of range");
    }
    std::vector<NegativePair> out;
    if (mode == NegativeMode::joint || mode == NegativeMode::text_given_video) {
        for (std::size_t j = 0; j < batchSize; ++j) {
            if (j != i) out.push_back(NegativePair{i, j});
        }
    }
    if (mode == NegativeMode::joint || mode == NegativeMode::video_given_text) {
        for (std::size_t j = 0; j < batchSize; ++j) {
            if (j != i) out.push_back(NegativePair{j, i});
        }
    }
    return out;
}

/// Cat+NCE: candidate narrations joined into one longer narration in temporal
/// order, then truncated to maxWords.
inline Narration concat_candidates(const Stream& stream, const CandidateBag& bag,
                                   std::size_t maxWords) {
    if (bag.candidateSegments.empty()) {
        throw std::invalid_argument("concat_candidates: empty bag");
    }
    Narration out;
    for (std::size_t segIdx : bag.candidateSegments) {
        const auto& toks = stream.segments[segIdx].tokens;
        for (std::uint32_t t : toks) {
            if (out.size() >= maxWords) return out;
            out.push_back(t);
        }
    }
    return out;
}

/// One training anchor: a (stream, segment) pair.
struct Anchor {
    std::size_t streamIdx;
    std::size_t segmentIdx;
    bool operator==(const Anchor&) const = default;
};

/// Uniform sample of `batchSize` distinct anchors over all (stream, segment)
/// positions in streams [0, trainEnd). Draw order defines the batch order.
inline std::vector<Anchor> sample_batch_anchors(const Corpus& corpus, std::size_t trainEnd,
                                                std::size_t batchSize, Rng& rng) {
    if (trainEnd > corpus.streams.size()) {
        throw std::invalid_argument("sample_batch_anchors: trainEnd out of range");
    }
    std::size_t total = 0;
    for (std::size_t s = 0; s < trainEnd; ++s) total += corpus.streams[s].segments.size();
    if (total < batchSize) {
        throw std::invalid_argument("sample_batch_anchors: fewer training segments (" +
                                    std::to_string(total) + ") than batch size (" +
                                    std::to_string(batchSize) + ")");
    }
    std::vector<std::size_t> chosen;
    chosen.reserve(batchSize);
    while (chosen.size() < batchSize) {
        std::size_t flat = rng.next_below(total);
        if (std::find(chosen.begin(), chosen.end(), flat) == chosen.end()) {
            chosen.push_back(flat);
        }
    }
    std::vector<Anchor> anchors;
    anchors.reserve(batchSize);
    for (std::size_t flat : chosen) {
        std::size_t s = 0;
        while (flat >= corpus.streams[s].segments.size()) {
            flat -= corpus.streams[s].segments.size();
            ++s;
        }
        anchors.push_back(Anchor{s, flat});
    }
    return anchors;
}

}  // namespace milnce
