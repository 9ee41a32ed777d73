#pragma once

#include "afalab/env.hpp"
#include "afalab/errors.hpp"
#include "afalab/model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace afalab {

enum class Condition { in_domain, lighting, texture };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& name);

/// Resolved experiment configuration. Unknown keys in the file are rejected;
/// missing keys take the defaults below, and the resolved form is echoed
/// into every output artifact.
struct ExperimentConfig {
    struct Env {
        int grid = 8;
        int dim = 64;
        int horizon = 60;
        double epsilon = 0.05;
        int demos = 25;
        std::uint64_t master_seed = 7;
        std::uint64_t demo_seed = 101;
        std::uint64_t eval_seed = 9001;
    } env;

    struct Pooling {
        PoolingKind kind = PoolingKind::afa;
        int heads = 4;
        int output_dim = 64;
        int tokens = 4;  // TokenLearner map count M
        int hidden = 32;
    } pooling;

    struct Train {
        int steps = 5000;
        int batch = 128;
        double lr = 1e-3;
        double warmup = 0.1;  // fraction of steps
        double sigma = 0.1;
        std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
        int policy_hidden = 256;
        int temporal_dim = 4;
    } train;

    struct Eval {
        int episodes = 100;
        std::vector<Condition> conditions{Condition::in_domain, Condition::lighting, Condition::texture};
        int jobs = 1;
    } eval;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);  // JSON, comments allowed
    nlohmann::json to_json() const;

    /// Hash of the sections that determine model identity (env + pooling +
    /// network dimensions); eval refuses checkpoints whose hash differs.
    std::string model_hash() const;

    ModelConfig model_config() const;
    EnvConfig env_config() const;
    void validate() const;  // throws ConfigError
};

}  // namespace afalab
