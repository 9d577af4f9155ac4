#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "milnce/kernels.hpp"
#include "milnce/matrix.hpp"

namespace milnce {

enum class LossKind {
    nce,
    mil_nce,
    max_nce,
    attn_nce,
    cat_nce,
    max_margin,
    binary_ce,
};

inline constexpr const char* kLossKindNames[] = {
    "nce", "mil-nce", "max-nce", "attn-nce", "cat-nce", "max-margin", "binary-ce",
};
inline constexpr std::size_t kNumLossKinds = 7;

inline LossKind loss_kind_from_string(const std::string& s) {
    for (std::size_t i = 0; i < kNumLossKinds; ++i) {
        if (s == kLossKindNames[i]) return static_cast<LossKind>(i);
    }
    throw std::invalid_argument("unknown loss kind '" + s + "'");
}

inline std::string to_string(LossKind k) { return kLossKindNames[static_cast<int>(k)]; }

/// Raw dot-product scores for one sample: the candidate-pair scores in P_i,
/// the negative-pair scores over N_i, and optionally the attention-head
/// scores aligned with the positives.
struct SampleScores {
    std::vector<double> positives;
    std::vector<double> negatives;
    std::optional<std::vector<double>> attn;
};

/// Value and score-space gradients of one per-sample objective. For the NCE
/// family `value` is the log-ratio to MAXIMIZE; binary_ce returns a value to
/// MINIMIZE. Gradients always differentiate `value` as returned.
struct LossResult {
    double value = 0.0;
    std::vector<double> dPositives;
    std::vector<double> dNegatives;
    std::vector<double> dAttn;  // empty unless the loss uses attention scores
};

namespace detail {

/// logsumexp over the concatenation [extra] ++ negatives plus the softmax
/// weights of that concatenation (weight of `extra` first).
struct DenomLse {
    double lse;
    double wExtra;
    std::vector<double> wNegatives;
};

inline DenomLse denominator(double extra, std::span<const double> negatives) {
    std::vector<double> all;
    all.reserve(1 + negatives.size());
    all.push_back(extra);
    all.insert(all.end(), negatives.begin(), negatives.end());
    DenomLse d;
    d.lse = logsumexp(all);
    std::vector<double> w = softmax(all);
    d.wExtra = w[0];
    d.wNegatives.assign(w.begin() + 1, w.end());
    return d;
}

inline void require_nonempty(const SampleScores& s) {
    if (s.positives.empty()) {
        throw std::invalid_argument("loss: positives must be nonempty");
    }
    if (s.negatives.empty()) {
        throw std::invalid_argument("loss: negatives must be nonempty");
    }
}

}  // namespace detail

/// Softmax NCE with a single positive: value = s+ - logsumexp([s+] ++ N).
inline LossResult nce(const SampleScores& s) {
    detail::require_nonempty(s);
    if (s.positives.size() != 1) {
        throw std::invalid_argument("nce: exactly one positive required, got " +
                                    std::to_string(s.positives.size()));
    }
    detail::DenomLse d = detail::denominator(s.positives[0], s.negatives);
    LossResult r;
    r.value = s.positives[0] - d.lse;
    r.dPositives = {1.0 - d.wExtra};
    r.dNegatives = d.wNegatives;
    for (double& x : r.dNegatives) x = -x;
    return r;
}

/// The multiple-instance objective: value = logsumexp(P) - logsumexp(P ++ N).
inline LossResult mil_nce(const SampleScores& s) {
    detail::require_nonempty(s);
    std::vector<double> all;
    all.reserve(s.positives.size() + s.negatives.size());
    all.insert(all.end(), s.positives.begin(), s.positives.end());
    all.insert(all.end(), s.negatives.begin(), s.negatives.end());
    double lseP = logsumexp(s.positives);
    double lseAll = logsumexp(all);
    std::vector<double> wP = softmax(s.positives);
    std::vector<double> wAll = softmax(all);
    LossResult r;
    r.value = lseP - lseAll;
    r.dPositives.resize(s.positives.size());
    for (std::size_t k = 0; k < s.positives.size(); ++k) {
        r.dPositives[k] = wP[k] - wAll[k];
    }
    r.dNegatives.resize(s.negatives.size());
    for (std::size_t j = 0; j < s.negatives.size(); ++j) {
        r.dNegatives[j] = -wAll[s.positives.size() + j];
    }
    return r;
}

/// Classic max-pool multiple instance baseline: only the best-scoring
/// positive candidate enters the ratio, and only it receives gradient
/// (ties toward the lowest index).
inline LossResult max_nce(const SampleScores& s) {
    detail::require_nonempty(s);
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.positives.size(); ++k) {
        if (s.positives[k] > s.positives[best]) best = k;
    }
    detail::DenomLse d = detail::denominator(s.positives[best], s.negatives);
    LossResult r;
    r.value = s.positives[best] - d.lse;
    r.dPositives.assign(s.positives.size(), 0.0);
    r.dPositives[best] = 1.0 - d.wExtra;
    r.dNegatives = d.wNegatives;
    for (double& x : r.dNegatives) x = -x;
    return r;
}

/// Cross-modal soft attention over the candidates: the positive term is the
/// attention-weighted mean of the candidate scores, with weights
/// softmax(attn scores).
inline LossResult attn_nce(const SampleScores& s) {
    detail::require_nonempty(s);
    if (!s.attn) {
        throw std::invalid_argument("attn_nce: attention scores missing");
    }
    if (s.attn->size() != s.positives.size()) {
        throw std::invalid_argument("attn_nce: attention scores must match positives");
    }
    std::vector<double> a = softmax(*s.attn);
    double pooled = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) pooled += a[k] * s.positives[k];
    detail::DenomLse d = detail::denominator(pooled, s.negatives);
    LossResult r;
    r.value = pooled - d.lse;
    const double dPooled = 1.0 - d.wExtra;
    r.dPositives.resize(s.positives.size());
    r.dAttn.resize(s.positives.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        r.dPositives[k] = dPooled * a[k];
        r.dAttn[k] = dPooled * a[k] * (s.positives[k] - pooled);
    }
    r.dNegatives = d.wNegatives;
    for (double& x : r.dNegatives) x = -x;
    return r;
}

/// Bidirectional ranking hinge over a square in-batch score matrix with
/// positives on the diagonal. Returned value is a loss to MINIMIZE:
///   (1/B) sum_i sum_{j != i} [max(0, d - S_ii + S_ij) + max(0, d - S_ii + S_ji)]
struct MaxMarginResult {
    double value = 0.0;
    Matrix dScores;
};

inline MaxMarginResult max_margin(const Matrix& scores, double margin) {
    if (scores.rows != scores.cols) {
        throw std::invalid_argument("max_margin: score matrix must be square, got " +
                                    scores.shape_str());
    }
    if (scores.rows < 2) {
        throw std::invalid_argument("max_margin: need at least two samples");
    }
    const std::size_t b = scores.rows;
    const double inv = 1.0 / static_cast<double>(b);
    MaxMarginResult r;
    r.dScores = Matrix(b, b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (j == i) continue;
            double h1 = margin - scores(i, i) + scores(i, j);
            if (h1 > 0.0) {
                r.value += h1 * inv;
                r.dScores(i, i) -= inv;
                r.dScores(i, j) += inv;
            }
            double h2 = margin - scores(i, i) + scores(j, i);
            if (h2 > 0.0) {
                r.value += h2 * inv;
                r.dScores(i, i) -= inv;
                r.dScores(j, i) += inv;
            }
        }
    }
    return r;
}

/// Sigmoid cross entropy; value to MINIMIZE is
///   mean_p softplus(-s_p) + mean_n softplus(s_n)
/// via the stable log1p(exp(-|s|)) form.
inline LossResult binary_ce(std::span<const double> posScores,
                            std::span<const double> negScores) {
    if (posScores.empty() || negScores.empty()) {
        throw std::invalid_argument("binary_ce: both score lists must be nonempty");
    }
    auto softplus = [](double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    };
    auto sigmoid = [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    };
    LossResult r;
    const double invP = 1.0 / static_cast<double>(posScores.size());
    const double invN = 1.0 / static_cast<double>(negScores.size());
    r.dPositives.resize(posScores.size());
    r.dNegatives.resize(negScores.size());
    for (std::size_t k = 0; k < posScores.size(); ++k) {
        r.value += softplus(-posScores[k]) * invP;
        r.dPositives[k] = (sigmoid(posScores[k]) - 1.0) * invP;
    }
    for (std::size_t j = 0; j < negScores.size(); ++j) {
        r.value += softplus(negScores[j]) * invN;
        r.dNegatives[j] = sigmoid(negScores[j]) * invN;
    }
    return r;
}

/// True when larger `value` is better and the trainer should minimize the
/// negated value.
inline bool is_maximize_objective(LossKind k) {
    switch (k) {
        case LossKind::nce:
        case LossKind::mil_nce:
        case LossKind::max_nce:
        case LossKind::attn_nce:
        case LossKind::cat_nce:
            return true;
        case LossKind::max_margin:
        case LossKind::binary_ce:
            return false;
    }
    throw std::logic_error("bad LossKind");
}

/// Dispatches the per-sample objectives. cat-nce reduces to nce here; the
/// candidate concatenation happens during batch assembly.
inline LossResult sample_loss(LossKind kind, const SampleScores& s) {
    switch (kind) {
        case LossKind::nce:
        case LossKind::cat_nce:
            return nce(s);
        case LossKind::mil_nce:
            return mil_nce(s);
        case LossKind::max_nce:
            return max_nce(s);
        case LossKind::attn_nce:
            return attn_nce(s);
        case LossKind::binary_ce:
            return binary_ce(s.positives, s.negatives);
        case LossKind::max_margin:
            throw std::invalid_argument("max_margin operates on the batch score matrix");
    }
    throw std::logic_error("bad LossKind");
}

/// Mean minimization loss over a batch of per-sample objectives, with
/// per-sample gradients already scaled by 1/B and oriented for descent.
struct BatchObjective {
    double loss = 0.0;                    // to minimize
    std::vector<LossResult> sampleGrads;  // dPositives/dNegatives/dAttn per sample
};

inline BatchObjective batch_objective(LossKind kind, std::span<const SampleScores> batch) {
    if (batch.empty()) {
        throw std::invalid_argument("batch_objective: empty batch");
    }
    if (kind == LossKind::max_margin) {
        throw std::invalid_argument("batch_objective: max_margin operates on the score matrix");
    }
    const double sign = is_maximize_objective(kind) ? -1.0 : 1.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    BatchObjective out;
    out.sampleGrads.reserve(batch.size());
    for (const SampleScores& s : batch) {
        LossResult r = sample_loss(kind, s);
        out.loss += sign * r.value * inv;
        for (double& x : r.dPositives) x *= sign * inv;
        for (double& x : r.dNegatives) x *= sign * inv;
        for (double& x : r.dAttn) x *= sign * inv;
        out.sampleGrads.push_back(std::move(r));
    }
    return out;
}

}  // namespace milnce
