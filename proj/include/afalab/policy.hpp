#pragma once

#include "afalab/matrix.hpp"
#include "afalab/rng.hpp"

#include <array>
#include <span>
#include <vector>

namespace afalab {

/// 4-layer perceptron: ReLU between layers 1-3, tanh on the output, so the
/// predicted action mean always lies strictly inside (-1, 1)^k.
struct PolicyNet {
    int input_dim = 0;
    int hidden = 256;
    int action_dim = 2;
    Matrix w1, b1, w2, b2, w3, b3, w4, b4;

    static PolicyNet init(int input_dim, int hidden, int action_dim, Rng& rng);
    static PolicyNet zeros(int input_dim, int hidden, int action_dim);
};

/// Sinusoidal embedding of the normalized timestep t/T: pairs
/// (sin(w_j t/T), cos(w_j t/T)) with w_j = 2*pi*min(2^(j-1), T/2); the cap
/// keeps the highest frequency resolvable over T steps.
std::vector<double> temporal_embed(int t, int horizon, int dim);

std::vector<double> policy_forward(const PolicyNet& net, std::span<const double> pooled,
                                   std::span<const double> proprio, int t, int horizon, int temporal_dim);

/// Truncated Gaussian over [-1, 1]^k with fixed sigma.
struct ActionDistribution {
    std::vector<double> mean;
    double sigma = 0.1;
};

/// Per-dimension rejection sampling from N(mean_i, sigma^2); falls back to
/// clamping after 100 rejected draws. Samples always lie in [-1, 1]^k.
std::vector<double> sample_action(const ActionDistribution& dist, Rng& rng);

}  // namespace afalab
