#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "milnce/checkpoint.hpp"
#include "milnce/corpus.hpp"
#include "milnce/encoders.hpp"
#include "milnce/errors.hpp"
#include "milnce/kernels.hpp"
#include "milnce/matrix.hpp"

namespace milnce {

// ---------------------------------------------------------------------------
// Retrieval: recall-at-K and median rank.
// ---------------------------------------------------------------------------

struct RetrievalResult {
    std::map<std::size_t, double> recallAtK;
    double medianRank = 0.0;  // mean of the two middle ranks for even query counts
};

/// rank(q) = 1 + #(items scoring strictly higher than the correct item);
/// ties therefore resolve in favor of the correct item.
inline std::vector<std::size_t> retrieval_ranks(const Matrix& scores,
                                                std::span<const std::size_t> gt) {
    if (gt.size() != scores.rows) {
        throw std::invalid_argument("retrieval_ranks: one ground-truth index per query required");
    }
    std::vector<std::size_t> ranks(scores.rows);
    for (std::size_t q = 0; q < scores.rows; ++q) {
        if (gt[q] >= scores.cols) {
            throw std::invalid_argument("retrieval_ranks: ground truth out of range for query " +
                                        std::to_string(q));
        }
        const double correct = scores(q, gt[q]);
        std::size_t higher = 0;
        for (std::size_t j = 0; j < scores.cols; ++j) {
            if (scores(q, j) > correct) ++higher;
        }
        ranks[q] = 1 + higher;
    }
    return ranks;
}

inline double median_of(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("median_of: empty input");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

inline RetrievalResult retrieval_eval(const Matrix& scores, std::span<const std::size_t> gt,
                                      std::span<const std::size_t> ks) {
    std::vector<std::size_t> ranks = retrieval_ranks(scores, gt);
    RetrievalResult r;
    for (std::size_t k : ks) {
        std::size_t hit = 0;
        for (std::size_t rank : ranks) {
            if (rank <= k) ++hit;
        }
        r.recallAtK[k] = static_cast<double>(hit) / static_cast<double>(ranks.size());
    }
    std::vector<double> rd(ranks.begin(), ranks.end());
    r.medianRank = median_of(std::move(rd));
    return r;
}

// ---------------------------------------------------------------------------
// Step localization: within each held-out stream, pick the clip maximizing
// the narration score; recall is averaged per stream, then over streams.
// ---------------------------------------------------------------------------

/// `scorer(segIdx of clip, segIdx of narration)` returns the match score
/// within the current stream; ties resolve to the lowest clip index.
template <typename StreamScorer>
double localize_streams(const Corpus& corpus, std::size_t begin, std::size_t end,
                        StreamScorer&& makeScorer) {
    double total = 0.0;
    std::size_t scored = 0;
    for (std::size_t s = begin; s < end; ++s) {
        const Stream& stream = corpus.streams[s];
        auto scorer = makeScorer(s);
        std::size_t hits = 0, queries = 0;
        for (std::size_t q = 0; q < stream.segments.size(); ++q) {
            const Segment& seg = stream.segments[q];
            if (seg.isIrrelevant()) continue;
            ++queries;
            std::size_t best = 0;
            double bestScore = scorer(0, q);
            for (std::size_t j = 1; j < stream.segments.size(); ++j) {
                double sc = scorer(j, q);
                if (sc > bestScore) {
                    bestScore = sc;
                    best = j;
                }
            }
            if (best == seg.matchedSegment) ++hits;
        }
        if (queries == 0) continue;  // stream with only irrelevant narrations
        total += static_cast<double>(hits) / static_cast<double>(queries);
        ++scored;
    }
    if (scored == 0) return 0.0;
    return total / static_cast<double>(scored);
}

/// Localization with trained encoders over the held-out streams.
inline double localize_steps(const Corpus& corpus, const Encoders& enc, std::size_t begin,
                             std::size_t end) {
    return localize_streams(corpus, begin, end, [&](std::size_t s) {
        const Stream& stream = corpus.streams[s];
        Matrix f(stream.segments.size(), enc.video.w2.cols);
        Matrix g(stream.segments.size(), enc.text.w2.cols);
        for (std::size_t j = 0; j < stream.segments.size(); ++j) {
            auto fv = embed_video(enc.video, stream.segments[j].clip);
            std::copy(fv.begin(), fv.end(), f.row(j).begin());
            auto gv = embed_text(enc.text, stream.segments[j].tokens);
            std::copy(gv.begin(), gv.end(), g.row(j).begin());
        }
        Matrix s2 = score_matrix(f, g);
        return [s2](std::size_t clip, std::size_t narr) { return s2(clip, narr); };
    });
}

// ---------------------------------------------------------------------------
// Linear probe: multinomial logistic regression on frozen embeddings, plain
// full-batch gradient descent, L2 penalty on weights (bias unpenalized).
// ---------------------------------------------------------------------------

struct ProbeResult {
    double accuracy = 0.0;
    std::map<std::uint32_t, double> perClass;  // held-out accuracy per label
    std::size_t iterations = 0;
    bool converged = false;
};

struct ProbeConfig {
    double lambda = 1e-4;
    double tolerance = 1e-6;  // on the L2 norm of the full gradient
    std::size_t maxIterations = 5000;
};

inline ProbeResult linear_probe(const Matrix& embeddings,
                                std::span<const std::uint32_t> labels,
                                std::span<const std::size_t> heldOutRows,
                                const ProbeConfig& cfg = {}) {
    const std::size_t n = embeddings.rows;
    if (labels.size() != n) {
        throw std::invalid_argument("linear_probe: one label per embedding row required");
    }
    std::vector<bool> held(n, false);
    for (std::size_t r : heldOutRows) {
        if (r >= n) throw std::invalid_argument("linear_probe: held-out row out of range");
        held[r] = true;
    }
    std::vector<std::size_t> trainRows;
    for (std::size_t i = 0; i < n; ++i) {
        if (!held[i]) trainRows.push_back(i);
    }
    if (trainRows.empty() || heldOutRows.empty()) {
        throw std::invalid_argument("linear_probe: both splits must be nonempty");
    }
    std::uint32_t numClasses = 0;
    for (std::uint32_t l : labels) numClasses = std::max(numClasses, l + 1);
    {
        std::uint32_t first = labels[trainRows[0]];
        bool single = true;
        for (std::size_t r : trainRows) {
            if (labels[r] != first) {
                single = false;
                break;
            }
        }
        if (single) {
            throw std::invalid_argument("linear_probe: training split holds a single class");
        }
    }

    const std::size_t d = embeddings.cols;
    Matrix w(d, numClasses);          // penalized
    std::vector<double> bias(numClasses, 0.0);  // unpenalized
    const double invN = 1.0 / static_cast<double>(trainRows.size());

    // Fixed step size from a cheap Lipschitz bound on the softmax CE Hessian:
    // L <= 0.5 * max_i |x_i|^2 / ... conservatively, mean squared row norm.
    double meanSq = 0.0;
    for (std::size_t r : trainRows) {
        double s = 0.0;
        for (double x : embeddings.row(r)) s += x * x;
        meanSq += s;
    }
    meanSq *= invN;
    const double stepSize = 1.0 / (0.5 * (meanSq + 1.0) + cfg.lambda);

    ProbeResult result;
    std::vector<double> logits(numClasses);
    Matrix gw(d, numClasses);
    std::vector<double> gb(numClasses);
    for (std::size_t iter = 0; iter < cfg.maxIterations; ++iter) {
        std::fill(gw.data.begin(), gw.data.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t r : trainRows) {
            auto x = embeddings.row(r);
            for (std::uint32_t c = 0; c < numClasses; ++c) {
                double z = bias[c];
                for (std::size_t j = 0; j < d; ++j) z += x[j] * w(j, c);
                logits[c] = z;
            }
            std::vector<double> p = softmax(logits);
            p[labels[r]] -= 1.0;
            for (std::uint32_t c = 0; c < numClasses; ++c) {
                const double pc = p[c] * invN;
                gb[c] += pc;
                for (std::size_t j = 0; j < d; ++j) gw(j, c) += pc * x[j];
            }
        }
        for (std::size_t j = 0; j < gw.data.size(); ++j) gw.data[j] += cfg.lambda * w.data[j];
        double norm2 = 0.0;
        for (double gval : gw.data) norm2 += gval * gval;
        for (double gval : gb) norm2 += gval * gval;
        result.iterations = iter + 1;
        if (std::sqrt(norm2) <= cfg.tolerance) {
            result.converged = true;
            break;
        }
        for (std::size_t j = 0; j < w.data.size(); ++j) w.data[j] -= stepSize * gw.data[j];
        for (std::uint32_t c = 0; c < numClasses; ++c) bias[c] -= stepSize * gb[c];
    }

    std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> perClassCounts;  // hit, total
    std::size_t hits = 0;
    for (std::size_t r : heldOutRows) {
        auto x = embeddings.row(r);
        std::uint32_t best = 0;
        double bestZ = -std::numeric_limits<double>::infinity();
        for (std::uint32_t c = 0; c < numClasses; ++c) {
            double z = bias[c];
            for (std::size_t j = 0; j < d; ++j) z += x[j] * w(j, c);
            if (z > bestZ) {  // ties to the lowest class id
                bestZ = z;
                best = c;
            }
        }
        auto& pc = perClassCounts[labels[r]];
        ++pc.second;
        if (best == labels[r]) {
            ++pc.first;
            ++hits;
        }
    }
    result.accuracy = static_cast<double>(hits) / static_cast<double>(heldOutRows.size());
    for (const auto& [cls, counts] : perClassCounts) {
        result.perClass[cls] =
            static_cast<double>(counts.first) / static_cast<double>(counts.second);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Held-out evaluation bundle used by the CLI and the ablation grid.
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::vector<std::size_t> ks = {1, 5, 10};
    double heldoutFraction = 0.1;
    ProbeConfig probe;
    double probeTrainFraction = 0.8;  // of held-out clips, rest scores the probe
};

struct EvalReport {
    RetrievalResult retrieval;
    double localization = 0.0;
    ProbeResult probe;
    std::size_t queries = 0;
    std::size_t items = 0;
};

/// Text-to-video retrieval over the held-out streams: every non-irrelevant
/// narration queries the pool of all held-out clips; the correct item is the
/// clip its narration describes by construction.
inline EvalReport evaluate_heldout(const Corpus& corpus, const Encoders& enc,
                                   const EvalOptions& opts = {}) {
    StreamSplit split = split_streams(corpus.streams.size(), opts.heldoutFraction);
    if (split.heldoutCount() == 0) {
        throw std::invalid_argument("evaluate_heldout: empty held-out split");
    }
    std::vector<std::size_t> streamOffset(corpus.streams.size(), 0);
    std::size_t items = 0;
    for (std::size_t s = split.trainEnd; s < split.total; ++s) {
        streamOffset[s] = items;
        items += corpus.streams[s].segments.size();
    }

    Matrix clipEmb(items, enc.video.w2.cols);
    Matrix hiddenEmb(items, enc.video.w1.cols);  // trunk features for the probe
    std::vector<std::uint32_t> clipTopics(items);
    std::vector<std::vector<double>> queryEmb;
    std::vector<std::size_t> gt;
    std::size_t row = 0;
    for (std::size_t s = split.trainEnd; s < split.total; ++s) {
        const Stream& stream = corpus.streams[s];
        for (std::size_t j = 0; j < stream.segments.size(); ++j, ++row) {
            const Segment& seg = stream.segments[j];
            auto acts = video_forward(enc.video, seg.clip);
            std::copy(acts.output.begin(), acts.output.end(), clipEmb.row(row).begin());
            std::copy(acts.hidden.data.begin(), acts.hidden.data.end(),
                      hiddenEmb.row(row).begin());
            clipTopics[row] = seg.topicId;
            if (!seg.isIrrelevant()) {
                queryEmb.push_back(embed_text(enc.text, seg.tokens));
                gt.push_back(streamOffset[s] + seg.matchedSegment);
            }
        }
    }
    if (queryEmb.empty()) {
        throw std::invalid_argument("evaluate_heldout: no non-irrelevant narrations to query");
    }
    Matrix queries(queryEmb.size(), enc.text.w2.cols);
    for (std::size_t q = 0; q < queryEmb.size(); ++q) {
        std::copy(queryEmb[q].begin(), queryEmb[q].end(), queries.row(q).begin());
    }

    EvalReport report;
    report.items = items;
    report.queries = queryEmb.size();
    Matrix scores = score_matrix(queries, clipEmb);
    report.retrieval = retrieval_eval(scores, gt, opts.ks);
    report.localization = localize_steps(corpus, enc, split.trainEnd, split.total);

    // Probe on frozen trunk features of held-out clips; the last
    // (1 - probeTrainFraction) of rows score it.
    auto probeTrain = static_cast<std::size_t>(static_cast<double>(items) *
                                               opts.probeTrainFraction);
    probeTrain = std::min(std::max<std::size_t>(probeTrain, 1), items - 1);
    std::vector<std::size_t> heldRows;
    for (std::size_t i = probeTrain; i < items; ++i) heldRows.push_back(i);
    report.probe = linear_probe(hiddenEmb, clipTopics, heldRows, opts.probe);
    return report;
}

}  // namespace milnce
