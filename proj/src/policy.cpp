#include "afalab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace afalab {

namespace {

Matrix random_matrix(int rows, int cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal(0.0, stddev);
    return m;
}

void affine_into(std::vector<double>& x, const Matrix& w, const Matrix& b, std::vector<double>& out) {
    if (static_cast<int>(x.size()) != w.rows())
        throw std::invalid_argument("policy_forward: input width " + std::to_string(x.size()) +
                                    " does not match layer " + w.shape_str());
    out.assign(w.cols(), 0.0);
    for (int r = 0; r < w.rows(); ++r) {
        const double xv = x[r];
        auto wr = w.row_span(r);
        for (int c = 0; c < w.cols(); ++c) out[c] += xv * wr[c];
    }
    for (int c = 0; c < w.cols(); ++c) out[c] += b[c];
}

}  // namespace

PolicyNet PolicyNet::init(int input_dim, int hidden, int action_dim, Rng& rng) {
    PolicyNet net;
    net.input_dim = input_dim;
    net.hidden = hidden;
    net.action_dim = action_dim;
    net.w1 = random_matrix(input_dim, hidden, std::sqrt(2.0 / input_dim), rng);
    net.b1 = Matrix(1, hidden);
    net.w2 = random_matrix(hidden, hidden, std::sqrt(2.0 / hidden), rng);
    net.b2 = Matrix(1, hidden);
    net.w3 = random_matrix(hidden, hidden, std::sqrt(2.0 / hidden), rng);
    net.b3 = Matrix(1, hidden);
    net.w4 = random_matrix(hidden, action_dim, 1.0 / std::sqrt(hidden), rng);
    net.b4 = Matrix(1, action_dim);
    return net;
}

PolicyNet PolicyNet::zeros(int input_dim, int hidden, int action_dim) {
    PolicyNet net;
    net.input_dim = input_dim;
    net.hidden = hidden;
    net.action_dim = action_dim;
    net.w1 = Matrix(input_dim, hidden);
    net.b1 = Matrix(1, hidden);
    net.w2 = Matrix(hidden, hidden);
    net.b2 = Matrix(1, hidden);
    net.w3 = Matrix(hidden, hidden);
    net.b3 = Matrix(1, hidden);
    net.w4 = Matrix(hidden, action_dim);
    net.b4 = Matrix(1, action_dim);
    return net;
}

std::vector<double> temporal_embed(int t, int horizon, int dim) {
    if (dim <= 0 || dim % 2 != 0)
        throw std::invalid_argument("temporal_embed: dim must be even and positive, got " + std::to_string(dim));
    if (t < 0 || t > horizon)
        throw std::invalid_argument("temporal_embed: t " + std::to_string(t) + " outside [0, " +
                                    std::to_string(horizon) + "]");
    std::vector<double> out(dim);
    const double phase = static_cast<double>(t) / horizon;
    for (int j = 0; j < dim / 2; ++j) {
        const double freq = std::min(std::pow(2.0, j), horizon / 2.0);
        const double angle = 2.0 * std::numbers::pi * freq * phase;
        out[2 * j] = std::sin(angle);
        out[2 * j + 1] = std::cos(angle);
    }
    return out;
}

std::vector<double> policy_forward(const PolicyNet& net, std::span<const double> pooled,
                                   std::span<const double> proprio, int t, int horizon, int temporal_dim) {
    std::vector<double> x;
    x.reserve(pooled.size() + proprio.size() + temporal_dim);
    x.insert(x.end(), pooled.begin(), pooled.end());
    x.insert(x.end(), proprio.begin(), proprio.end());
    const std::vector<double> te = temporal_embed(t, horizon, temporal_dim);
    x.insert(x.end(), te.begin(), te.end());

    std::vector<double> h;
    affine_into(x, net.w1, net.b1, h);
    for (double& v : h) v = std::max(v, 0.0);
    affine_into(h, net.w2, net.b2, x);
    for (double& v : x) v = std::max(v, 0.0);
    affine_into(x, net.w3, net.b3, h);
    for (double& v : h) v = std::max(v, 0.0);
    affine_into(h, net.w4, net.b4, x);
    for (double& v : x) v = std::tanh(v);
    return x;
}

std::vector<double> sample_action(const ActionDistribution& dist, Rng& rng) {
    std::vector<double> a(dist.mean.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double v = 0.0;
        bool accepted = false;
        for (int tries = 0; tries < 100; ++tries) {
            v = rng.normal(dist.mean[i], dist.sigma);
            if (v >= -1.0 && v <= 1.0) {
                accepted = true;
                break;
            }
        }
        a[i] = accepted ? v : std::clamp(dist.mean[i], -1.0, 1.0);
    }
    return a;
}

}  // namespace afalab
