#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "milnce/matrix.hpp"

namespace milnce {

// Dense numeric kernel. Every op is a pure function of its inputs; each
// forward pairs with a *_backward that maps the output gradient to input
// gradients given the saved operands (or saved indices, for the pooling op).
// All arithmetic is double, reduction order is fixed, so results are
// bit-stable for a given input.

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape_str() +
                                    " * " + b.shape_str());
    }
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

struct MatmulGrads {
    Matrix da;
    Matrix db;
};

/// dA = dC * B^T, dB = A^T * dC.
inline MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& d_out) {
    if (d_out.rows != a.rows || d_out.cols != b.cols) {
        throw std::invalid_argument("matmul_backward: gradient shape " + d_out.shape_str() +
                                    " does not match product of " + a.shape_str() + " and " +
                                    b.shape_str());
    }
    return MatmulGrads{matmul(d_out, transpose(b)), matmul(transpose(a), d_out)};
}

inline Matrix relu(const Matrix& m) {
    Matrix out = m;
    for (double& x : out.data) x = std::max(0.0, x);
    return out;
}

/// Subgradient at exactly 0 is fixed to 0: gradient passes only where the
/// pre-activation was strictly positive.
inline Matrix relu_backward(const Matrix& input, const Matrix& d_out) {
    if (!input.same_shape(d_out)) {
        throw std::invalid_argument("relu_backward: shape mismatch " + input.shape_str() +
                                    " vs " + d_out.shape_str());
    }
    Matrix g(input.rows, input.cols);
    for (std::size_t i = 0; i < input.data.size(); ++i) {
        g.data[i] = input.data[i] > 0.0 ? d_out.data[i] : 0.0;
    }
    return g;
}

struct ColMaxResult {
    std::vector<double> values;        // one per column
    std::vector<std::size_t> argmax;   // winning row per column; ties -> lowest row
};

/// Column-wise max over rows of a W x D matrix.
inline ColMaxResult col_max_pool(const Matrix& m) {
    if (m.rows == 0) {
        throw std::invalid_argument("col_max_pool: empty matrix (0 rows)");
    }
    ColMaxResult r;
    r.values.assign(m.cols, 0.0);
    r.argmax.assign(m.cols, 0);
    for (std::size_t j = 0; j < m.cols; ++j) {
        double best = m(0, j);
        std::size_t best_row = 0;
        for (std::size_t i = 1; i < m.rows; ++i) {
            if (m(i, j) > best) {  // strict: ties stay at the lowest row index
                best = m(i, j);
                best_row = i;
            }
        }
        r.values[j] = best;
        r.argmax[j] = best_row;
    }
    return r;
}

/// Routes each column's gradient to the recorded argmax row only.
inline Matrix col_max_pool_backward(const ColMaxResult& fwd, std::size_t rows,
                                    std::span<const double> d_out) {
    if (d_out.size() != fwd.values.size()) {
        throw std::invalid_argument("col_max_pool_backward: gradient length mismatch");
    }
    Matrix g(rows, fwd.values.size());
    for (std::size_t j = 0; j < fwd.values.size(); ++j) {
        g(fwd.argmax[j], j) = d_out[j];
    }
    return g;
}

/// log(sum exp(v_i)), evaluated as m + log(sum exp(v_i - m)) with m = max(v).
inline double logsumexp(std::span<const double> v) {
    if (v.empty()) {
        throw std::invalid_argument("logsumexp: empty input");
    }
    double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/// Numerically stable softmax; also the backward of logsumexp (scaled by the
/// incoming scalar gradient).
inline std::vector<double> softmax(std::span<const double> v) {
    if (v.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    double m = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        s += out[i];
    }
    for (double& x : out) x /= s;
    return out;
}

inline std::vector<double> logsumexp_backward(std::span<const double> v, double d_out) {
    std::vector<double> g = softmax(v);
    for (double& x : g) x *= d_out;
    return g;
}

/// S[i][j] = <F_i, G_j> for row-stacked embeddings F (B x d) and G (B' x d).
inline Matrix score_matrix(const Matrix& f, const Matrix& g) {
    if (f.cols != g.cols) {
        throw std::invalid_argument("score_matrix: embedding dims differ, " + f.shape_str() +
                                    " vs " + g.shape_str());
    }
    Matrix s(f.rows, g.rows);
    for (std::size_t i = 0; i < f.rows; ++i) {
        for (std::size_t j = 0; j < g.rows; ++j) {
            s(i, j) = dot(f.row(i), g.row(j));
        }
    }
    return s;
}

struct ScoreGrads {
    Matrix df;
    Matrix dg;
};

/// dF = dS * G, dG = dS^T * F.
inline ScoreGrads score_matrix_backward(const Matrix& f, const Matrix& g,
                                        const Matrix& d_scores) {
    if (d_scores.rows != f.rows || d_scores.cols != g.rows) {
        throw std::invalid_argument("score_matrix_backward: gradient shape mismatch");
    }
    return ScoreGrads{matmul(d_scores, g), matmul(transpose(d_scores), f)};
}

}  // namespace milnce
