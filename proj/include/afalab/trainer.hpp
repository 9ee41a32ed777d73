#pragma once

#include "afalab/config.hpp"
#include "afalab/env.hpp"
#include "afalab/model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace afalab {

/// Drop the lowest and highest floor(n/4) values, return the mean of the
/// rest.
double iqm(std::vector<double> values);

struct LossPoint {
    int step = 0;
    double loss = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<LossPoint> history;  // recorded every 50 steps
    double loss_initial = 0.0;       // first minibatch loss, before any update
    double loss_final_smoothed = 0.0;  // mean of the last 5 recorded losses
};

/// Behaviour cloning per the configured schedule: Adam updates on uniformly
/// sampled minibatches across all demo timesteps, cosine learning rate with
/// linear warmup. Deterministic per seed. Throws DataError on NaN loss.
TrainResult train(const ExperimentConfig& cfg, const std::vector<Demonstration>& demos, std::uint64_t seed);

struct EpisodeTrace {
    int episode = 0;
    std::string condition;
    std::uint64_t seed = 0;
    bool success = false;
    double final_distance = 0.0;
    int steps = 0;
};

struct AttentionStats {
    double mass = 0.0;     // mean over timesteps of attention mass inside the task mask
    double entropy = 0.0;  // mean over timesteps of attention entropy (nats)
};

struct ConditionResult {
    std::string condition;
    double success_rate = 0.0;
    std::optional<AttentionStats> attention;  // heads that expose records only
    std::vector<EpisodeTrace> traces;
};

/// Closed-loop evaluation with deterministic mean actions. Every episode
/// draws a fresh scene from the condition's perturbation generator under a
/// per-episode seed derived from eval_seed. model == nullptr runs the
/// scripted expert instead of a policy. jobs > 1 fans episodes across
/// threads; results merge in episode order.
ConditionResult evaluate(const Model* model, const SignatureBank& bank, const ExperimentConfig& cfg,
                         Condition condition, int episodes, std::uint64_t eval_seed, int jobs = 1);

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<ConditionResult> conditions;
    double loss_initial = 0.0;
    double loss_final_smoothed = 0.0;

    const ConditionResult* find(const std::string& condition) const;
};

struct ExperimentReport {
    int format_version = 1;
    std::string config_hash;
    std::string pooling_kind;
    std::vector<SeedResult> per_seed;
    std::vector<std::pair<std::string, double>> iqm_per_condition;
    std::string config_dump;  // resolved config JSON text

    double iqm_for(const std::string& condition) const;
    nlohmann::json to_json() const;
    static ExperimentReport from_json(const nlohmann::json& j);
    std::string traces_csv() const;  // episode, condition, seed, success, final_distance, steps
};

/// Full protocol: shared demos, one training per seed, evaluation of every
/// configured condition, IQM aggregation. When out_dir is given the report
/// and traces are persisted there.
ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace afalab
