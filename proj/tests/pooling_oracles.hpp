// Literal double-loop reference implementations of the three pooling
// mechanisms, kept independent of the library kernels on purpose: the
// library must reproduce these, not the other way around.
#pragma once

#include "afalab/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace afalab::oracles {

inline std::vector<double> spatial_softmax_reference(const TokenGrid& g) {
    const std::vector<double> xs = linspace_coords(g.width);
    const std::vector<double> ys = linspace_coords(g.height);
    std::vector<double> out(2 * g.dim);
    for (int c = 0; c < g.dim; ++c) {
        double mx = -1e300;
        for (int i = 0; i < g.height; ++i)
            for (int j = 0; j < g.width; ++j) mx = std::max(mx, g.token(i, j)[c]);
        double total = 0.0;
        for (int i = 0; i < g.height; ++i)
            for (int j = 0; j < g.width; ++j) total += std::exp(g.token(i, j)[c] - mx);
        double ex = 0.0, ey = 0.0;
        for (int i = 0; i < g.height; ++i)
            for (int j = 0; j < g.width; ++j) {
                const double s = std::exp(g.token(i, j)[c] - mx) / total;
                ex += s * xs[j];
                ey += s * ys[i];
            }
        out[2 * c] = ex;
        out[2 * c + 1] = ey;
    }
    return out;
}

inline Matrix token_learner_reference(const TokenGrid& g, const TokenLearnerHead& head) {
    Matrix out(head.map_count, g.dim);
    for (int m = 0; m < head.map_count; ++m) {
        std::vector<double> score(g.count());
        for (int i = 0; i < g.height; ++i)
            for (int j = 0; j < g.width; ++j) {
                auto f = g.token(i, j);
                double s = head.b2[m][0];
                for (int k = 0; k < head.hidden; ++k) {
                    double pre = head.b1[m][k];
                    for (int d = 0; d < g.dim; ++d) pre += f[d] * head.w1[m].at(d, k);
                    s += std::max(pre, 0.0) * head.w2[m].at(k, 0);
                }
                score[i * g.width + j] = s;
            }
        const double mx = *std::max_element(score.begin(), score.end());
        double total = 0.0;
        for (double s : score) total += std::exp(s - mx);
        for (int i = 0; i < g.height; ++i)
            for (int j = 0; j < g.width; ++j) {
                const double a = std::exp(score[i * g.width + j] - mx) / total;
                auto f = g.token(i, j);
                for (int d = 0; d < g.dim; ++d) out.at(m, d) += a * f[d];
            }
    }
    return out;
}

inline std::vector<double> afa_reference(const TokenGrid& g, const AfaHead& head) {
    const int n = g.count();
    const int dh = head.head_dim();
    std::vector<double> out(head.output_dim);
    for (int h = 0; h < head.heads; ++h) {
        std::vector<double> logits(n);
        for (int r = 0; r < n; ++r) {
            double dot_qk = 0.0;
            for (int k = 0; k < dh; ++k) {
                double key = 0.0;
                for (int d = 0; d < g.dim; ++d) key += g.tokens.at(r, d) * head.w_key[h].at(d, k);
                dot_qk += head.query[h][k] * key;
            }
            logits[r] = dot_qk / std::sqrt(static_cast<double>(dh));
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double total = 0.0;
        for (double v : logits) total += std::exp(v - mx);
        for (int r = 0; r < n; ++r) {
            const double w = std::exp(logits[r] - mx) / total;
            for (int k = 0; k < dh; ++k) {
                double value = 0.0;
                for (int d = 0; d < g.dim; ++d) value += g.tokens.at(r, d) * head.w_value[h].at(d, k);
                out[h * dh + k] += w * value;
            }
        }
    }
    return out;
}

}  // namespace afalab::oracles
