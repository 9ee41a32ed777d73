#pragma once

#include "afalab/matrix.hpp"
#include "afalab/rng.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace afalab {

/// H x W grid of D-dimensional patch tokens, flattened row-major to N x D
/// with N = H * W and token (i, j) on row i * W + j.
struct TokenGrid {
    int height = 0;
    int width = 0;
    int dim = 0;
    Matrix tokens;  // N x D

    TokenGrid() = default;
    TokenGrid(int h, int w, int d) : height(h), width(w), dim(d), tokens(h * w, d) {}
    int count() const { return height * width; }
    std::span<double> token(int i, int j) { return tokens.row_span(i * width + j); }
    std::span<const double> token(int i, int j) const { return tokens.row_span(i * width + j); }
};

/// Per-head nonnegative token weights, each head summing to one.
struct AttentionRecord {
    int height = 0;
    int width = 0;
    std::vector<std::vector<double>> head_weights;  // head-major, N per head

    int head_count() const { return static_cast<int>(head_weights.size()); }
    nlohmann::json to_json() const;
    static AttentionRecord from_json(const nlohmann::json& j);
};

struct MeanPoolHead {};

struct SpatialSoftmaxHead {};  // no trainable parameters; coordinates come from the grid shape

/// Per-map scorer phi_m: a 2-layer perceptron D -> hidden -> 1 applied at
/// every spatial location, softmaxed over locations into attention map m.
struct TokenLearnerHead {
    int map_count = 4;
    int hidden = 32;
    std::vector<Matrix> w1, b1;  // D x hidden, 1 x hidden
    std::vector<Matrix> w2, b2;  // hidden x 1,  1 x 1

    static TokenLearnerHead init(int dim, int map_count, int hidden, Rng& rng);
};

/// Single-query multi-head cross attention over the token sequence:
/// per head i, weights = softmax(q_i (F W_K,i)^T / sqrt(d_h)) and the head
/// output is weights (F W_V,i). Head outputs are concatenated; there is no
/// output projection.
struct AfaHead {
    int heads = 4;
    int output_dim = 64;
    std::vector<Matrix> query;    // 1 x d_h per head
    std::vector<Matrix> w_key;    // D x d_h per head
    std::vector<Matrix> w_value;  // D x d_h per head

    int head_dim() const { return output_dim / heads; }
    static AfaHead init(int dim, int heads, int output_dim, Rng& rng);
};

using PoolingHead = std::variant<MeanPoolHead, SpatialSoftmaxHead, TokenLearnerHead, AfaHead>;

enum class PoolingKind { mean, spatial_softmax, token_learner, afa };

std::string to_string(PoolingKind kind);
PoolingKind pooling_kind_from_string(const std::string& name);  // configuration error on unknown names

// Coordinates linearly spaced over [-1, 1] inclusive: coord[j] = -1 + 2j/(n-1).
std::vector<double> linspace_coords(int n);

std::vector<double> mean_pool(const TokenGrid& grid);

/// Per channel c: softmax over all H*W activations, then expected 2D
/// coordinates. Output is channel-major pairs (x_hat_c, y_hat_c), length 2D.
/// Requires H > 1 and W > 1 so coordinate spacing is defined.
std::vector<double> spatial_softmax(const TokenGrid& grid);

/// Per-channel softmax weights (D x N), exposed for diagnostics only.
Matrix spatial_softmax_weights(const TokenGrid& grid);

/// Returns the M x D learned-token matrix; record (optional) receives the M
/// attention maps.
Matrix token_learner(const TokenGrid& grid, const TokenLearnerHead& head, AttentionRecord* record = nullptr);

/// Returns the concatenated head outputs (length output_dim); record
/// (optional) receives the per-head weights.
std::vector<double> afa_pool(const TokenGrid& grid, const AfaHead& head, AttentionRecord* record = nullptr);

struct PoolResult {
    std::vector<double> features;
    std::optional<AttentionRecord> attention;  // token_learner and afa only
};

PoolResult pool(const PoolingHead& head, const TokenGrid& grid);

int pooled_dim(const PoolingHead& head, const TokenGrid& grid);
int pooled_dim(const PoolingHead& head, int grid_dim);

}  // namespace afalab
