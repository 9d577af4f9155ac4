#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "milnce/checkpoint.hpp"
#include "milnce/corpus.hpp"
#include "milnce/encoders.hpp"
#include "milnce/errors.hpp"
#include "milnce/kernels.hpp"
#include "milnce/losses.hpp"
#include "milnce/sampling.hpp"

namespace milnce {

/// Linear warmup to baseLr followed by two step decays.
struct Schedule {
    double baseLr = 1e-3;
    std::size_t warmupSteps = 100;
    std::array<std::size_t, 2> decaySteps = {1200, 1600};
    double decayFactor = 0.1;
};

inline double lr_at(const Schedule& s, std::size_t t) {
    double lr = s.baseLr;
    if (s.warmupSteps > 0 && t < s.warmupSteps) {
        lr *= static_cast<double>(t) / static_cast<double>(s.warmupSteps);
    }
    for (std::size_t d : s.decaySteps) {
        if (d <= t) lr *= s.decayFactor;
    }
    return lr;
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Flat view over one named parameter tensor (biases appear as 1 x n).
struct ParamView {
    std::string name;
    double* data;
    std::size_t size;
};

struct GradView {
    const double* data;
    std::size_t size;
};

inline std::vector<ParamView> trainable_params(Encoders& e) {
    std::vector<ParamView> out;
    auto mat = [&](const char* n, Matrix& m) { out.push_back({n, m.data.data(), m.data.size()}); };
    auto vec = [&](const char* n, std::vector<double>& v) { out.push_back({n, v.data(), v.size()}); };
    mat("video.W1", e.video.w1);
    vec("video.b1", e.video.b1);
    mat("video.W2", e.video.w2);
    vec("video.b2", e.video.b2);
    if (e.video.attn) {
        mat("video.Wa", e.video.attn->w);
        vec("video.ba", e.video.attn->b);
    }
    // text.E is frozen by contract and intentionally not listed here.
    mat("text.W1", e.text.w1);
    vec("text.b1", e.text.b1);
    mat("text.W2", e.text.w2);
    vec("text.b2", e.text.b2);
    if (e.text.attn) {
        mat("text.Wa", e.text.attn->w);
        vec("text.ba", e.text.attn->b);
    }
    return out;
}

/// Gradient views in the same order as trainable_params.
inline std::vector<GradView> gradient_views(const VideoGrads& vg, const TextGrads& tg,
                                            bool videoAttn, bool textAttn) {
    std::vector<GradView> out;
    auto mat = [&](const Matrix& m) { out.push_back({m.data.data(), m.data.size()}); };
    auto vec = [&](const std::vector<double>& v) { out.push_back({v.data(), v.size()}); };
    mat(vg.dW1);
    vec(vg.db1);
    mat(vg.dW2);
    vec(vg.db2);
    if (videoAttn) {
        mat(vg.dWa);
        vec(vg.dba);
    }
    mat(tg.dW1);
    vec(tg.db1);
    mat(tg.dW2);
    vec(tg.db2);
    if (textAttn) {
        mat(tg.dWa);
        vec(tg.dba);
    }
    return out;
}

/// Bias-corrected Adam update; aborts on non-finite gradients instead of
/// clipping them.
inline void adam_step(std::span<const ParamView> params, std::span<const GradView> grads,
                      AdamState& state, const AdamConfig& cfg, double lr) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t p = 0; p < params.size(); ++p) {
        const ParamView& pv = params[p];
        const GradView& gv = grads[p];
        if (pv.size != gv.size) {
            throw std::invalid_argument("adam_step: shape mismatch for " + pv.name);
        }
        auto& m = state.m[pv.name];
        auto& v = state.v[pv.name];
        if (m.empty()) m.assign(pv.size, 0.0);
        if (v.empty()) v.assign(pv.size, 0.0);
        for (std::size_t i = 0; i < pv.size; ++i) {
            const double g = gv.data[i];
            if (!std::isfinite(g)) {
                throw NumericError("adam_step: non-finite gradient in " + pv.name +
                                   " at index " + std::to_string(i));
            }
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mHat = m[i] / bc1;
            const double vHat = v[i] / bc2;
            pv.data[i] -= lr * mHat / (std::sqrt(vHat) + cfg.epsilon);
        }
    }
}

struct TrainConfig {
    LossKind lossKind = LossKind::mil_nce;
    std::size_t bagSize = 5;  // K, odd
    NegativeMode negMode = NegativeMode::joint;
    std::size_t batchSize = 32;
    std::size_t totalSteps = 2000;
    std::uint64_t seed = 1;
    EncoderConfig encoder;
    Schedule schedule;
    AdamConfig adam;
    double margin = 0.2;          // max-margin only
    std::size_t checkpointEvery = 0;  // 0: only the final checkpoint
    std::size_t logEvery = 50;
    double heldoutFraction = 0.1;

    void validate() const {
        if (batchSize < 2) {
            throw std::invalid_argument("TrainConfig: batchSize must be >= 2");
        }
        if (bagSize < 1 || bagSize % 2 == 0) {
            throw std::invalid_argument("TrainConfig: bagSize must be odd and >= 1");
        }
        const bool singleInstance = lossKind == LossKind::nce ||
                                    lossKind == LossKind::max_margin ||
                                    lossKind == LossKind::binary_ce;
        if (singleInstance && bagSize != 1) {
            throw std::invalid_argument("TrainConfig: " + to_string(lossKind) +
                                        " is a single-instance loss; bagSize must be 1");
        }
        if ((lossKind == LossKind::max_margin || lossKind == LossKind::binary_ce) &&
            negMode != NegativeMode::joint) {
            throw std::invalid_argument("TrainConfig: " + to_string(lossKind) +
                                        " uses the joint in-batch negatives");
        }
        if (totalSteps > 0) {
            if (!(schedule.warmupSteps < schedule.decaySteps[0] &&
                  schedule.decaySteps[0] < schedule.decaySteps[1] &&
                  schedule.decaySteps[1] <= totalSteps)) {
                throw std::invalid_argument(
                    "TrainConfig: need warmupSteps < decaySteps[0] < decaySteps[1] <= totalSteps");
            }
        }
        if (heldoutFraction < 0.0 || heldoutFraction >= 1.0) {
            throw std::invalid_argument("TrainConfig: heldoutFraction must lie in [0, 1)");
        }
    }

    bool usesAttention() const { return lossKind == LossKind::attn_nce; }
    bool usesBag() const {
        return lossKind == LossKind::mil_nce || lossKind == LossKind::max_nce ||
               lossKind == LossKind::attn_nce || lossKind == LossKind::cat_nce;
    }
};

/// Fresh training state: seeded encoders, empty Adam moments, step 0.
inline Checkpoint init_checkpoint(const TrainConfig& cfg, std::string configEcho = "") {
    cfg.validate();
    EncoderConfig ec = cfg.encoder;
    ec.attentionHeads = cfg.usesAttention();
    Rng root(cfg.seed);
    Checkpoint ck;
    ck.configEcho = std::move(configEcho);
    ck.rngSeed = cfg.seed;
    ck.beta1 = cfg.adam.beta1;
    ck.beta2 = cfg.adam.beta2;
    ck.epsilon = cfg.adam.epsilon;
    ck.encoders.video = init_video_encoder(ec, root);
    ck.encoders.text = init_text_encoder(ec, root);
    return ck;
}

namespace detail {

/// Everything computed for one batch: activations, scores and the mapping
/// back from score gradients to encoder parameter gradients.
struct BatchWorkspace {
    std::vector<Anchor> anchors;
    std::vector<VideoActivations> videoActs;    // per sample
    std::vector<TextActivations> anchorActs;    // per sample, anchor narration
    // Extra bag candidates (candidate != anchor), stored per sample.
    std::vector<std::vector<TextActivations>> candidateActs;
    std::vector<std::vector<std::size_t>> candidateSlots;  // bag position -> slot; anchor = npos
    Matrix f;   // B x d
    Matrix g;   // B x d
    Matrix fa;  // attention embeddings, B x d when used
    std::vector<std::vector<double>> gaCandidates;  // per sample, per bag position
    std::vector<SampleScores> scores;
    Matrix s;   // anchor score matrix, B x B
};

constexpr std::size_t kAnchorSlot = static_cast<std::size_t>(-1);

inline BatchWorkspace batch_forward(const Encoders& enc, const TrainConfig& cfg,
                                    const Corpus& corpus, std::vector<Anchor> anchors) {
    const bool wantAttn = cfg.usesAttention();
    const std::size_t b = anchors.size();
    const std::size_t d = enc.video.w2.cols;
    BatchWorkspace ws;
    ws.anchors = std::move(anchors);
    ws.videoActs.reserve(b);
    ws.anchorActs.reserve(b);
    ws.candidateActs.resize(b);
    ws.candidateSlots.resize(b);
    ws.f = Matrix(b, d);
    ws.g = Matrix(b, d);
    if (wantAttn) ws.fa = Matrix(b, d);
    ws.gaCandidates.resize(b);

    for (std::size_t i = 0; i < b; ++i) {
        const Anchor& a = ws.anchors[i];
        const Stream& stream = corpus.streams[a.streamIdx];
        const Segment& seg = stream.segments[a.segmentIdx];
        ws.videoActs.push_back(video_forward(enc.video, seg.clip, wantAttn));
        ws.anchorActs.push_back(text_forward(enc.text, seg.tokens, wantAttn));
        std::copy(ws.videoActs[i].output.begin(), ws.videoActs[i].output.end(),
                  ws.f.row(i).begin());
        std::copy(ws.anchorActs[i].output.begin(), ws.anchorActs[i].output.end(),
                  ws.g.row(i).begin());
        if (wantAttn) {
            std::copy(ws.videoActs[i].attnOutput->begin(), ws.videoActs[i].attnOutput->end(),
                      ws.fa.row(i).begin());
        }
    }
    ws.s = score_matrix(ws.f, ws.g);

    ws.scores.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        const Anchor& a = ws.anchors[i];
        const Stream& stream = corpus.streams[a.streamIdx];
        SampleScores& sc = ws.scores[i];

        if (cfg.usesBag()) {
            CandidateBag bag = build_positive_bag(stream, a.streamIdx, a.segmentIdx, cfg.bagSize);
            if (cfg.lossKind == LossKind::cat_nce) {
                Narration cat = concat_candidates(stream, bag, enc.text.maxWords);
                ws.candidateSlots[i].push_back(0);
                ws.candidateActs[i].push_back(text_forward(enc.text, cat, false));
                sc.positives.push_back(
                    dot(ws.f.row(i), std::span<const double>(ws.candidateActs[i][0].output)));
            } else {
                if (wantAttn) sc.attn.emplace();
                for (std::size_t segIdx : bag.candidateSegments) {
                    const TextActivations* acts;
                    if (segIdx == a.segmentIdx) {
                        ws.candidateSlots[i].push_back(kAnchorSlot);
                        acts = &ws.anchorActs[i];
                    } else {
                        ws.candidateSlots[i].push_back(ws.candidateActs[i].size());
                        ws.candidateActs[i].push_back(
                            text_forward(enc.text, stream.segments[segIdx].tokens, wantAttn));
                        acts = &ws.candidateActs[i].back();
                    }
                    sc.positives.push_back(dot(ws.f.row(i), std::span<const double>(acts->output)));
                    if (wantAttn) {
                        sc.attn->push_back(
                            dot(ws.fa.row(i), std::span<const double>(*acts->attnOutput)));
                    }
                }
            }
        } else {
            sc.positives.push_back(ws.s(i, i));
        }

        NegativeMode mode = cfg.lossKind == LossKind::binary_ce ? NegativeMode::joint
                                                                : cfg.negMode;
        for (const NegativePair& np : build_negatives(mode, b, i)) {
            sc.negatives.push_back(ws.s(np.clip, np.narration));
        }
    }
    return ws;
}

/// Batch loss plus encoder parameter gradients, the shared core of the
/// training step and the finite-difference harness.
struct BatchGradients {
    double loss = 0.0;  // minimization orientation
    VideoGrads video;
    TextGrads text;

    BatchGradients(const VideoEncoderParams& v, const TextEncoderParams& t)
        : video(v), text(t) {}
};

inline BatchGradients batch_gradients(const Encoders& enc, const TrainConfig& cfg,
                                      const Corpus& corpus,
                                      const std::vector<Anchor>& anchors) {
    BatchWorkspace ws = batch_forward(enc, cfg, corpus, anchors);
    const std::size_t b = anchors.size();
    const bool wantAttn = cfg.usesAttention();

    BatchGradients out(enc.video, enc.text);
    Matrix dS(b, b);
    Matrix dF(b, ws.f.cols);
    Matrix dG(b, ws.g.cols);
    Matrix dFa;
    Matrix dGa;
    if (wantAttn) {
        dFa = Matrix(b, ws.f.cols);
        dGa = Matrix(b, ws.f.cols);
    }
    // Output grads for extra candidates, mirroring candidateActs.
    std::vector<std::vector<std::vector<double>>> dCand(b);
    std::vector<std::vector<std::vector<double>>> dCandAttn(b);
    for (std::size_t i = 0; i < b; ++i) {
        dCand[i].assign(ws.candidateActs[i].size(), std::vector<double>(ws.f.cols, 0.0));
        if (wantAttn) {
            dCandAttn[i].assign(ws.candidateActs[i].size(),
                                std::vector<double>(ws.f.cols, 0.0));
        }
    }
    std::vector<bool> anchorAttnUsed(b, false);

    if (cfg.lossKind == LossKind::max_margin) {
        MaxMarginResult mm = max_margin(ws.s, cfg.margin);
        out.loss = mm.value;
        dS = std::move(mm.dScores);
    } else {
        BatchObjective bo = batch_objective(cfg.lossKind, ws.scores);
        out.loss = bo.loss;
        for (std::size_t i = 0; i < b; ++i) {
            const LossResult& r = bo.sampleGrads[i];
            if (cfg.usesBag()) {
                for (std::size_t k = 0; k < r.dPositives.size(); ++k) {
                    const double ds = r.dPositives[k];
                    std::size_t slot = ws.candidateSlots[i][k];
                    std::span<const double> gk =
                        slot == kAnchorSlot
                            ? std::span<const double>(ws.anchorActs[i].output)
                            : std::span<const double>(ws.candidateActs[i][slot].output);
                    axpy(ds, gk, dF.row(i));
                    if (slot == kAnchorSlot) {
                        axpy(ds, ws.f.row(i), dG.row(i));
                    } else {
                        axpy(ds, ws.f.row(i), std::span<double>(dCand[i][slot]));
                    }
                    if (wantAttn && !r.dAttn.empty()) {
                        const double da = r.dAttn[k];
                        std::span<const double> gak =
                            slot == kAnchorSlot
                                ? std::span<const double>(*ws.anchorActs[i].attnOutput)
                                : std::span<const double>(*ws.candidateActs[i][slot].attnOutput);
                        axpy(da, gak, dFa.row(i));
                        if (slot == kAnchorSlot) {
                            anchorAttnUsed[i] = true;
                            axpy(da, ws.fa.row(i), dGa.row(i));
                        } else {
                            axpy(da, ws.fa.row(i), std::span<double>(dCandAttn[i][slot]));
                        }
                    }
                }
            } else {
                dS(i, i) += r.dPositives[0];
            }
            NegativeMode mode = cfg.lossKind == LossKind::binary_ce ? NegativeMode::joint
                                                                    : cfg.negMode;
            auto negs = build_negatives(mode, b, i);
            for (std::size_t j = 0; j < negs.size(); ++j) {
                dS(negs[j].clip, negs[j].narration) += r.dNegatives[j];
            }
        }
    }

    ScoreGrads sg = score_matrix_backward(ws.f, ws.g, dS);
    add_inplace(dF, sg.df);
    add_inplace(dG, sg.dg);

    for (std::size_t i = 0; i < b; ++i) {
        std::vector<double> faRow;
        const std::vector<double>* dAttn = nullptr;
        if (wantAttn) {
            faRow.assign(dFa.row(i).begin(), dFa.row(i).end());
            dAttn = &faRow;
        }
        video_backward(enc.video, ws.videoActs[i], dF.row(i), dAttn, out.video);
    }
    for (std::size_t i = 0; i < b; ++i) {
        std::vector<double> gaRow;
        const std::vector<double>* dAttn = nullptr;
        if (wantAttn && anchorAttnUsed[i]) {
            gaRow.assign(dGa.row(i).begin(), dGa.row(i).end());
            dAttn = &gaRow;
        }
        text_backward(enc.text, ws.anchorActs[i], dG.row(i), dAttn, out.text);
    }
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t c = 0; c < ws.candidateActs[i].size(); ++c) {
            const std::vector<double>* dAttn =
                wantAttn && !dCandAttn[i].empty() ? &dCandAttn[i][c] : nullptr;
            text_backward(enc.text, ws.candidateActs[i][c], dCand[i][c], dAttn, out.text);
        }
    }
    return out;
}

/// Forward-only batch loss, shared by the finite-difference harness.
inline double batch_loss_value(const Encoders& enc, const TrainConfig& cfg,
                               const Corpus& corpus, const std::vector<Anchor>& anchors) {
    BatchWorkspace ws = batch_forward(enc, cfg, corpus, anchors);
    if (cfg.lossKind == LossKind::max_margin) {
        return max_margin(ws.s, cfg.margin).value;
    }
    return batch_objective(cfg.lossKind, ws.scores).loss;
}

}  // namespace detail

/// One optimizer update. Returns the batch minimization loss.
inline double train_step(Checkpoint& ck, const TrainConfig& cfg, const Corpus& corpus,
                         std::size_t trainEnd, std::size_t stepIndex) {
    Rng stepRng = Rng(cfg.seed).child("batch/" + std::to_string(stepIndex));
    auto anchors = sample_batch_anchors(corpus, trainEnd, cfg.batchSize, stepRng);
    detail::BatchGradients bg = detail::batch_gradients(ck.encoders, cfg, corpus, anchors);
    if (!std::isfinite(bg.loss)) {
        throw NumericError("train_step: non-finite loss at step " + std::to_string(stepIndex));
    }
    auto params = trainable_params(ck.encoders);
    auto grads = gradient_views(bg.video, bg.text, ck.encoders.video.attn.has_value(),
                                ck.encoders.text.attn.has_value());
    AdamConfig ac{ck.beta1, ck.beta2, ck.epsilon};
    adam_step(params, grads, ck.adam, ac, lr_at(cfg.schedule, stepIndex + 1));
    ck.step = stepIndex + 1;
    return bg.loss;
}

/// Called after each completed update with (step, lr, loss); step counts
/// completed updates starting at 1.
using StepCallback = std::function<void(std::size_t, double, double)>;

/// Runs updates [ck.step, cfg.totalSteps). Resuming a loaded checkpoint
/// continues bit-identically to an uninterrupted run.
inline void train_continue(Checkpoint& ck, const TrainConfig& cfg, const Corpus& corpus,
                           const StepCallback& onStep = nullptr) {
    cfg.validate();
    StreamSplit split = split_streams(corpus.streams.size(), cfg.heldoutFraction);
    for (std::size_t step = ck.step; step < cfg.totalSteps; ++step) {
        double loss = train_step(ck, cfg, corpus, split.trainEnd, step);
        if (onStep) onStep(step + 1, lr_at(cfg.schedule, step + 1), loss);
    }
}

inline Checkpoint train(const TrainConfig& cfg, const Corpus& corpus,
                        std::string configEcho = "", const StepCallback& onStep = nullptr) {
    Checkpoint ck = init_checkpoint(cfg, std::move(configEcho));
    train_continue(ck, cfg, corpus, onStep);
    return ck;
}

}  // namespace milnce
