#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "milnce/corpus.hpp"
#include "milnce/rng.hpp"
#include "milnce/trainer.hpp"

namespace milnce {

/// Central finite differences against the analytic batch gradient, end to end
/// through both encoder towers, for one loss kind. The numeric side only ever
/// evaluates the forward pass, so it stays independent of the backward code
/// it checks.
struct GradCheckReport {
    LossKind kind;
    double maxRelError = 0.0;
    std::size_t paramCount = 0;
    std::string worstParam;
};

namespace detail {

/// |a - n| / max(1, |a|, |n|), the usual finite-difference error convention.
inline double rel_error(double analytic, double numeric) {
    double denom = std::max(1.0, std::max(std::abs(analytic), std::abs(numeric)));
    return std::abs(analytic - numeric) / denom;
}

/// Small corpus with enough structure to exercise every loss path.
inline Corpus gradcheck_corpus(std::uint64_t seed) {
    GenConfig gc;
    gc.numStreams = 4;
    gc.segmentsPerStream = 5;
    gc.numTopics = 3;
    gc.topicDim = 3;
    gc.clipDim = 4;
    gc.vocabSize = 12;
    gc.tokensPerNarration = 3;
    gc.noiseSigma = 0.5;
    gc.pAligned = 0.5;
    gc.maxOffset = 1;
    gc.pIrrelevant = 0.2;
    gc.seed = seed;
    return generate_corpus(gc);
}

inline TrainConfig gradcheck_train_config(LossKind kind, std::uint64_t seed) {
    TrainConfig tc;
    tc.lossKind = kind;
    tc.bagSize = (kind == LossKind::nce || kind == LossKind::max_margin ||
                  kind == LossKind::binary_ce)
                     ? 1
                     : 3;
    tc.negMode = NegativeMode::joint;
    tc.batchSize = 3;
    tc.totalSteps = 0;
    tc.seed = seed;
    tc.encoder = EncoderConfig{4, 3, 5, 3, 12, 4, kind == LossKind::attn_nce};
    tc.heldoutFraction = 0.0;
    return tc;
}

/// Relu, max-pool and hinge kinks make finite differences unreliable when an
/// activation sits within the perturbation step of its switching point, so
/// reject draws that land too close and let the caller retry with a derived
/// seed.
inline bool safely_away_from_kinks(const Encoders& enc, const TrainConfig& cfg,
                                   const Corpus& corpus, const std::vector<Anchor>& anchors,
                                   double margin) {
    BatchWorkspace ws = batch_forward(enc, cfg, corpus, anchors);
    auto preOk = [&](const Matrix& pre) {
        for (double x : pre.data) {
            if (std::abs(x) < margin) return false;
        }
        return true;
    };
    // Rows that stem from the same token are one function of the parameters
    // and stay exactly tied under perturbation. Columns where every entry is
    // a dead relu pool to exactly zero and stay there (preOk keeps the
    // pre-activations away from the kink), so those ties are safe too. Only
    // near-ties between distinct live rows are dangerous.
    auto poolOk = [&](const TextActivations& a) {
        for (std::size_t j = 0; j < a.hidden.cols; ++j) {
            const std::size_t top = a.pooled.argmax[j];
            for (std::size_t w = 0; w < a.hidden.rows; ++w) {
                if (w == top || a.tokens[w] == a.tokens[top]) continue;
                if (a.pooled.values[j] == 0.0 && a.hidden(w, j) == 0.0) continue;
                if (a.pooled.values[j] - a.hidden(w, j) < margin) return false;
            }
        }
        return true;
    };
    for (const auto& a : ws.videoActs) {
        if (!preOk(a.pre)) return false;
    }
    for (const auto& a : ws.anchorActs) {
        if (!preOk(a.pre) || !poolOk(a)) return false;
    }
    for (const auto& group : ws.candidateActs) {
        for (const auto& a : group) {
            if (!preOk(a.pre) || !poolOk(a)) return false;
        }
    }
    if (cfg.lossKind == LossKind::max_margin) {
        for (std::size_t i = 0; i < ws.s.rows; ++i) {
            for (std::size_t j = 0; j < ws.s.cols; ++j) {
                if (j == i) continue;
                if (std::abs(cfg.margin - ws.s(i, i) + ws.s(i, j)) < margin) return false;
                if (std::abs(cfg.margin - ws.s(i, i) + ws.s(j, i)) < margin) return false;
            }
        }
    }
    if (cfg.lossKind == LossKind::max_nce) {
        // Candidates that embed to bit-identical vectors (duplicate or
        // permuted token lists, or all-dead narrations collapsing to the
        // output bias) stay tied under any parameter perturbation; only
        // near-ties between genuinely distinct embeddings break the probe.
        for (std::size_t i = 0; i < ws.scores.size(); ++i) {
            const SampleScores& sc = ws.scores[i];
            auto outputAt = [&](std::size_t k) -> const std::vector<double>& {
                std::size_t slot = ws.candidateSlots[i][k];
                return slot == kAnchorSlot ? ws.anchorActs[i].output
                                           : ws.candidateActs[i][slot].output;
            };
            std::size_t best = 0;
            for (std::size_t k = 1; k < sc.positives.size(); ++k) {
                if (sc.positives[k] > sc.positives[best]) best = k;
            }
            for (std::size_t k = 0; k < sc.positives.size(); ++k) {
                if (k == best || outputAt(k) == outputAt(best)) continue;
                if (sc.positives[best] - sc.positives[k] < margin) return false;
            }
        }
    }
    return true;
}

}  // namespace detail

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-6;
    /// Test hook: biases one analytic gradient entry so the check must fail;
    /// proves the harness can detect a broken gradient.
    bool corruptGradient = false;
};

inline GradCheckReport gradcheck_loss(LossKind kind, std::uint64_t seed,
                                      const GradCheckOptions& opts = {}) {
    TrainConfig cfg = detail::gradcheck_train_config(kind, seed);
    Corpus corpus = detail::gradcheck_corpus(Rng(seed).child("gradcheck.corpus").seed());

    Checkpoint ck;
    std::vector<Anchor> anchors;
    std::uint64_t draw = seed;
    for (int attempt = 0;; ++attempt) {
        cfg.seed = draw;
        ck = init_checkpoint(cfg);
        Rng rng = Rng(draw).child("gradcheck.batch");
        anchors = sample_batch_anchors(corpus, corpus.streams.size(), cfg.batchSize, rng);
        if (detail::safely_away_from_kinks(ck.encoders, cfg, corpus, anchors, 1e-4)) break;
        if (attempt > 64) {
            throw std::runtime_error("gradcheck: could not find a kink-free configuration");
        }
        draw = Rng::mix(draw ^ 0x6A09E667F3BCC909ull);
    }

    detail::BatchGradients bg = detail::batch_gradients(ck.encoders, cfg, corpus, anchors);
    auto params = trainable_params(ck.encoders);
    auto grads = gradient_views(bg.video, bg.text, ck.encoders.video.attn.has_value(),
                                ck.encoders.text.attn.has_value());

    GradCheckReport report;
    report.kind = kind;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].size; ++i) {
            ++report.paramCount;
            const double saved = params[p].data[i];
            params[p].data[i] = saved + opts.step;
            double up = detail::batch_loss_value(ck.encoders, cfg, corpus, anchors);
            params[p].data[i] = saved - opts.step;
            double down = detail::batch_loss_value(ck.encoders, cfg, corpus, anchors);
            params[p].data[i] = saved;
            const double numeric = (up - down) / (2.0 * opts.step);
            double analytic = grads[p].data[i];
            if (opts.corruptGradient && p == 0 && i == 0) analytic += 1.0;
            const double err = detail::rel_error(analytic, numeric);
            if (err > report.maxRelError) {
                report.maxRelError = err;
                report.worstParam = params[p].name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

/// All seven loss kinds at one seed.
inline std::vector<GradCheckReport> gradcheck_all(std::uint64_t seed,
                                                  const GradCheckOptions& opts = {}) {
    std::vector<GradCheckReport> out;
    out.reserve(kNumLossKinds);
    for (std::size_t i = 0; i < kNumLossKinds; ++i) {
        out.push_back(gradcheck_loss(static_cast<LossKind>(i), seed, opts));
    }
    return out;
}

}  // namespace milnce
