#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "milnce/kernels.hpp"
#include "milnce/matrix.hpp"
#include "milnce/rng.hpp"

namespace milnce {

/// Shapes for both embedding towers. `clipDim` is the synthetic clip feature
/// width, `embedDim` the word embedding width, `outputDim` the shared joint
/// space dimension.
struct EncoderConfig {
    std::size_t clipDim = 32;
    std::size_t embedDim = 16;
    std::size_t hiddenDim = 64;
    std::size_t outputDim = 16;
    std::size_t vocabSize = 200;
    std::size_t maxWords = 16;
    bool attentionHeads = false;
};

/// Extra projection used by the attention-pooled objective. Shares the trunk
/// with the main encoder; only this final linear layer differs.
struct AttentionHead {
    Matrix w;                // hiddenDim x outputDim
    std::vector<double> b;   // outputDim
};

struct VideoEncoderParams {
    Matrix w1;               // clipDim x hiddenDim
    std::vector<double> b1;  // hiddenDim
    Matrix w2;               // hiddenDim x outputDim
    std::vector<double> b2;  // outputDim
    std::optional<AttentionHead> attn;
};

struct TextEncoderParams {
    Matrix embedding;        // vocabSize x embedDim, frozen (receives no gradient)
    Matrix w1;               // embedDim x hiddenDim
    std::vector<double> b1;  // hiddenDim
    Matrix w2;               // hiddenDim x outputDim
    std::vector<double> b2;  // outputDim
    std::optional<AttentionHead> attn;
    std::size_t maxWords = 16;
};

/// Token id list for one narration. Ids must lie in [0, vocabSize).
using Narration = std::vector<std::uint32_t>;

namespace detail {

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), the usual symmetric scheme.
inline Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(fan_in, fan_out);
    for (double& x : m.data) x = rng.next_uniform(-limit, limit);
    return m;
}

inline Matrix unit_normal_matrix(std::size_t rows, std::size_t cols, Rng rng) {
    Matrix m(rows, cols);
    for (double& x : m.data) x = rng.next_normal();
    return m;
}

}  // namespace detail

/// Each parameter tensor is drawn from its own child generator keyed by name,
/// so the presence of the attention head never perturbs the trunk draws.
inline VideoEncoderParams init_video_encoder(const EncoderConfig& cfg, const Rng& rng) {
    VideoEncoderParams p;
    p.w1 = detail::glorot_uniform(cfg.clipDim, cfg.hiddenDim, rng.child("video.W1"));
    p.b1.assign(cfg.hiddenDim, 0.0);
    p.w2 = detail::glorot_uniform(cfg.hiddenDim, cfg.outputDim, rng.child("video.W2"));
    p.b2.assign(cfg.outputDim, 0.0);
    if (cfg.attentionHeads) {
        p.attn = AttentionHead{
            detail::glorot_uniform(cfg.hiddenDim, cfg.outputDim, rng.child("video.Wa")),
            std::vector<double>(cfg.outputDim, 0.0)};
    }
    return p;
}

inline TextEncoderParams init_text_encoder(const EncoderConfig& cfg, const Rng& rng) {
    TextEncoderParams p;
    p.embedding = detail::unit_normal_matrix(cfg.vocabSize, cfg.embedDim, rng.child("text.E"));
    p.w1 = detail::glorot_uniform(cfg.embedDim, cfg.hiddenDim, rng.child("text.W1"));
    p.b1.assign(cfg.hiddenDim, 0.0);
    p.w2 = detail::glorot_uniform(cfg.hiddenDim, cfg.outputDim, rng.child("text.W2"));
    p.b2.assign(cfg.outputDim, 0.0);
    p.attn = std::nullopt;
    if (cfg.attentionHeads) {
        p.attn = AttentionHead{
            detail::glorot_uniform(cfg.hiddenDim, cfg.outputDim, rng.child("text.Wa")),
            std::vector<double>(cfg.outputDim, 0.0)};
    }
    p.maxWords = cfg.maxWords;
    return p;
}

// ---------------------------------------------------------------------------
// Video tower: f(x) = W2^T relu(W1^T x + b1) + b2, attention head swaps the
// final projection for (Wa, ba) on the shared trunk activation.
// ---------------------------------------------------------------------------

struct VideoActivations {
    Matrix input;    // 1 x clipDim
    Matrix pre;      // 1 x hiddenDim, before relu
    Matrix hidden;   // 1 x hiddenDim
    std::vector<double> output;                 // outputDim, f(x)
    std::optional<std::vector<double>> attnOutput;  // outputDim, f_a(x)
};

inline VideoActivations video_forward(const VideoEncoderParams& p,
                                      std::span<const double> clip,
                                      bool wantAttention = false) {
    if (clip.size() != p.w1.rows) {
        throw std::invalid_argument("video_forward: clip dim " + std::to_string(clip.size()) +
                                    " does not match encoder input dim " +
                                    std::to_string(p.w1.rows));
    }
    VideoActivations a;
    a.input = Matrix(1, clip.size(), std::vector<double>(clip.begin(), clip.end()));
    a.pre = matmul(a.input, p.w1);
    for (std::size_t j = 0; j < a.pre.cols; ++j) a.pre(0, j) += p.b1[j];
    a.hidden = relu(a.pre);
    Matrix out = matmul(a.hidden, p.w2);
    a.output.assign(out.data.begin(), out.data.end());
    for (std::size_t j = 0; j < a.output.size(); ++j) a.output[j] += p.b2[j];
    if (wantAttention) {
        if (!p.attn) {
            throw std::invalid_argument("video_forward: attention head requested but absent");
        }
        Matrix ao = matmul(a.hidden, p.attn->w);
        a.attnOutput = std::vector<double>(ao.data.begin(), ao.data.end());
        for (std::size_t j = 0; j < a.attnOutput->size(); ++j) (*a.attnOutput)[j] += p.attn->b[j];
    }
    return a;
}

inline std::vector<double> embed_video(const VideoEncoderParams& p,
                                       std::span<const double> clip) {
    return video_forward(p, clip).output;
}

struct VideoGrads {
    Matrix dW1;
    std::vector<double> db1;
    Matrix dW2;
    std::vector<double> db2;
    Matrix dWa;               // empty when head absent
    std::vector<double> dba;
    Matrix dInput;            // 1 x clipDim

    explicit VideoGrads(const VideoEncoderParams& p)
        : dW1(p.w1.rows, p.w1.cols),
          db1(p.b1.size(), 0.0),
          dW2(p.w2.rows, p.w2.cols),
          db2(p.b2.size(), 0.0),
          dInput(1, p.w1.rows) {
        if (p.attn) {
            dWa = Matrix(p.attn->w.rows, p.attn->w.cols);
            dba.assign(p.attn->b.size(), 0.0);
        }
    }
};

/// Accumulates into `g`. `dAttnOut` may be null when the head was not used.
inline void video_backward(const VideoEncoderParams& p, const VideoActivations& a,
                           std::span<const double> dOut,
                           const std::vector<double>* dAttnOut, VideoGrads& g) {
    Matrix dOutM(1, dOut.size(), std::vector<double>(dOut.begin(), dOut.end()));
    MatmulGrads mg = matmul_backward(a.hidden, p.w2, dOutM);
    add_inplace(g.dW2, mg.db);
    axpy(1.0, dOut, std::span<double>(g.db2));
    Matrix dHidden = mg.da;
    if (dAttnOut) {
        if (!p.attn || !a.attnOutput) {
            throw std::invalid_argument("video_backward: attention gradient without head");
        }
        Matrix dAo(1, dAttnOut->size(), *dAttnOut);
        MatmulGrads ag = matmul_backward(a.hidden, p.attn->w, dAo);
        add_inplace(g.dWa, ag.db);
        axpy(1.0, std::span<const double>(*dAttnOut), std::span<double>(g.dba));
        add_inplace(dHidden, ag.da);
    }
    Matrix dPre = relu_backward(a.pre, dHidden);
    for (std::size_t j = 0; j < dPre.cols; ++j) g.db1[j] += dPre(0, j);
    MatmulGrads ig = matmul_backward(a.input, p.w1, dPre);
    add_inplace(g.dW1, ig.db);
    add_inplace(g.dInput, ig.da);
}

// ---------------------------------------------------------------------------
// Text tower: per-word relu(W1^T E[w] + b1), column max over words, then the
// final projection. The embedding table is frozen: no gradient reaches E.
// ---------------------------------------------------------------------------

struct TextActivations {
    std::vector<std::uint32_t> tokens;  // after truncation to maxWords
    Matrix wordEmb;   // W x embedDim, rows of E
    Matrix pre;       // W x hiddenDim
    Matrix hidden;    // W x hiddenDim
    ColMaxResult pooled;                // hiddenDim values + argmax rows
    std::vector<double> output;         // outputDim, g(y)
    std::optional<std::vector<double>> attnOutput;  // g_a(y)
};

inline TextActivations text_forward(const TextEncoderParams& p, const Narration& narration,
                                    bool wantAttention = false) {
    if (narration.empty()) {
        throw std::invalid_argument("text_forward: empty narration");
    }
    TextActivations a;
    a.tokens.assign(narration.begin(),
                    narration.begin() +
                        static_cast<std::ptrdiff_t>(std::min<std::size_t>(narration.size(),
                                                                          p.maxWords)));
    a.wordEmb = Matrix(a.tokens.size(), p.embedding.cols);
    for (std::size_t w = 0; w < a.tokens.size(); ++w) {
        if (a.tokens[w] >= p.embedding.rows) {
            throw std::invalid_argument("text_forward: token id " +
                                        std::to_string(a.tokens[w]) + " out of vocabulary (" +
                                        std::to_string(p.embedding.rows) + ")");
        }
        auto src = p.embedding.row(a.tokens[w]);
        std::copy(src.begin(), src.end(), a.wordEmb.row(w).begin());
    }
    a.pre = matmul(a.wordEmb, p.w1);
    for (std::size_t w = 0; w < a.pre.rows; ++w) {
        for (std::size_t j = 0; j < a.pre.cols; ++j) a.pre(w, j) += p.b1[j];
    }
    a.hidden = relu(a.pre);
    a.pooled = col_max_pool(a.hidden);
    Matrix pooledRow(1, a.pooled.values.size(), a.pooled.values);
    Matrix out = matmul(pooledRow, p.w2);
    a.output.assign(out.data.begin(), out.data.end());
    for (std::size_t j = 0; j < a.output.size(); ++j) a.output[j] += p.b2[j];
    if (wantAttention) {
        if (!p.attn) {
            throw std::invalid_argument("text_forward: attention head requested but absent");
        }
        Matrix ao = matmul(pooledRow, p.attn->w);
        a.attnOutput = std::vector<double>(ao.data.begin(), ao.data.end());
        for (std::size_t j = 0; j < a.attnOutput->size(); ++j) (*a.attnOutput)[j] += p.attn->b[j];
    }
    return a;
}

inline std::vector<double> embed_text(const TextEncoderParams& p, const Narration& narration) {
    return text_forward(p, narration).output;
}

/// Trunk output with the attention projection applied instead of (W2, b2).
inline std::vector<double> embed_video_attention(const VideoEncoderParams& p,
                                                 std::span<const double> clip) {
    auto a = video_forward(p, clip, /*wantAttention=*/true);
    return *a.attnOutput;
}

inline std::vector<double> embed_text_attention(const TextEncoderParams& p,
                                                const Narration& narration) {
    auto a = text_forward(p, narration, /*wantAttention=*/true);
    return *a.attnOutput;
}

struct TextGrads {
    Matrix dW1;
    std::vector<double> db1;
    Matrix dW2;
    std::vector<double> db2;
    Matrix dWa;
    std::vector<double> dba;
    // No dE: the embedding table is frozen by contract.

    explicit TextGrads(const TextEncoderParams& p)
        : dW1(p.w1.rows, p.w1.cols),
          db1(p.b1.size(), 0.0),
          dW2(p.w2.rows, p.w2.cols),
          db2(p.b2.size(), 0.0) {
        if (p.attn) {
            dWa = Matrix(p.attn->w.rows, p.attn->w.cols);
            dba.assign(p.attn->b.size(), 0.0);
        }
    }
};

inline void text_backward(const TextEncoderParams& p, const TextActivations& a,
                          std::span<const double> dOut,
                          const std::vector<double>* dAttnOut, TextGrads& g) {
    Matrix pooledRow(1, a.pooled.values.size(), a.pooled.values);
    Matrix dOutM(1, dOut.size(), std::vector<double>(dOut.begin(), dOut.end()));
    MatmulGrads mg = matmul_backward(pooledRow, p.w2, dOutM);
    add_inplace(g.dW2, mg.db);
    axpy(1.0, dOut, std::span<double>(g.db2));
    std::vector<double> dPooled(mg.da.data.begin(), mg.da.data.end());
    if (dAttnOut) {
        if (!p.attn || !a.attnOutput) {
            throw std::invalid_argument("text_backward: attention gradient without head");
        }
        Matrix dAo(1, dAttnOut->size(), *dAttnOut);
        MatmulGrads ag = matmul_backward(pooledRow, p.attn->w, dAo);
        add_inplace(g.dWa, ag.db);
        axpy(1.0, std::span<const double>(*dAttnOut), std::span<double>(g.dba));
        for (std::size_t j = 0; j < dPooled.size(); ++j) dPooled[j] += ag.da(0, j);
    }
    Matrix dHidden = col_max_pool_backward(a.pooled, a.hidden.rows, dPooled);
    Matrix dPre = relu_backward(a.pre, dHidden);
    MatmulGrads ig = matmul_backward(a.wordEmb, p.w1, dPre);
    add_inplace(g.dW1, ig.db);
    for (std::size_t j = 0; j < dPre.cols; ++j) {
        for (std::size_t w = 0; w < dPre.rows; ++w) g.db1[j] += dPre(w, j);
    }
    // ig.da would be dE rows; discarded, E is frozen.
}

}  // namespace milnce
