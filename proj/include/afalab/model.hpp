#pragma once

#include "afalab/env.hpp"
#include "afalab/policy.hpp"
#include "afalab/pooling.hpp"
#include "afalab/tape.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace afalab {

struct ModelConfig {
    PoolingKind kind = PoolingKind::afa;
    int grid = 8;
    int dim = 64;
    int afa_heads = 4;
    int afa_output_dim = 64;
    int tl_maps = 4;
    int tl_hidden = 32;
    int policy_hidden = 256;
    int temporal_dim = 4;
    int action_dim = 2;
    int proprio_dim = 2;
    int horizon = 60;

    int pooled_dim() const;
    int policy_input_dim() const { return pooled_dim() + proprio_dim + temporal_dim; }
};

/// A pooling head plus the policy it feeds; everything train() updates.
/// feature_shift/feature_scale standardize the pooled features of the
/// parameter-free heads (mean, spatial softmax), the way linear probes
/// standardize frozen features; they are demo statistics fixed before the
/// first update, not trainable. Trainable heads consume raw tokens and
/// stay identity-normalized.
struct Model {
    ModelConfig config;
    PoolingHead head;
    PolicyNet policy;
    Matrix feature_shift;  // 1 x pooled_dim
    Matrix feature_scale;  // 1 x pooled_dim, multiplicative

    static Model init(const ModelConfig& config, std::uint64_t seed);

    bool standardizes_features() const;
    std::vector<double> pooled_features(const TokenGrid& grid, AttentionRecord* attention = nullptr) const;
    void fit_feature_normalizer(std::span<const TokenGrid* const> grids);

    // Stable parameter order: head parameters first, then policy layers.
    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;
    std::vector<std::string> parameter_names() const;

    /// Mean action for one observation; pooling runs through the direct
    /// (non-tape) kernels. attention, when non-null and the head exposes
    /// weights, receives the attention record of this forward pass.
    std::vector<double> act(const TokenGrid& grid, std::span<const double> proprio, int t,
                            AttentionRecord* attention = nullptr) const;
};

struct BatchSample {
    const TokenGrid* grid = nullptr;
    std::array<double, 2> proprio{};
    std::array<double, 2> action{};
    int t = 0;
};

struct LossGraph {
    NodeId loss = -1;
    std::vector<NodeId> params;       // parallel to Model::parameters()
    std::vector<NodeId> grid_leaves;  // populated only when grids_require_grad
};

/// Builds the batched BC loss: mean over the batch of the squared L2 error
/// between expert actions and predicted means, differentiable through the
/// pooling head. With grids_require_grad (mean and spatial_softmax heads
/// only) the token grids become gradient-carrying leaves so input gradients
/// can be audited; otherwise mean/spatial-softmax features are precomputed
/// constants since no trainable parameter sits upstream of them.
LossGraph build_bc_loss(Tape& tape, const Model& model, std::span<const BatchSample> batch,
                        bool grids_require_grad = false);

// Versioned single-file checkpoint: config hash, shapes, flat parameter arrays.
struct Checkpoint {
    Model model;
    std::string config_hash;
    std::uint64_t train_seed = 0;
    nlohmann::json config_echo() const;
    std::string echo_dump;  // resolved config as stored
};

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const nlohmann::json& config_echo, const std::string& config_hash,
                     std::uint64_t train_seed);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace afalab
