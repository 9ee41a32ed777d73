#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afalab/config.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

using namespace afalab;

TEST_CASE("defaults fill and echo contains every section") {
    const ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::object());
    CHECK(cfg.env.grid == 8);
    CHECK(cfg.env.dim == 64);
    CHECK(cfg.env.demos == 25);
    CHECK(cfg.pooling.kind == PoolingKind::afa);
    CHECK(cfg.train.batch == 128);
    CHECK(cfg.train.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    CHECK(cfg.eval.conditions.size() == 3);

    const nlohmann::json echo = cfg.to_json();
    for (const char* section : {"env", "pooling", "train", "eval"}) CHECK(echo.contains(section));
    CHECK(echo["train"]["batch"] == 128);
    CHECK(echo["env"]["demos"] == 25);
}

TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"nonsense", 1}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"env", {{"grdi", 8}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"pooling", {{"mode", "afa"}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"train", {{"step", 5}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"eval", {{"episode", 5}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"env", {{"seeds", {{"masterr", 1}}}}}}), ConfigError);
}

TEST_CASE("invalid values are rejected with config errors") {
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"pooling", {{"kind", "average"}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"pooling", {{"heads", 3}, {"output_dim", 64}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"train", {{"batch", 0}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"train", {{"seeds", nlohmann::json::array()}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"train", {{"warmup", 1.0}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"train", {{"temporal_dim", 5}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"eval", {{"conditions", {"in_domain", "fog"}}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"env", {{"grid", 1}}}}), ConfigError);
}

TEST_CASE("config files may carry comments") {
    const auto path = std::filesystem::temp_directory_path() / "afalab_cfg_comments.json";
    {
        std::ofstream out(path);
        out << "{\n  // tiny run\n  \"train\": { \"steps\": 12 }\n}\n";
    }
    const ExperimentConfig cfg = ExperimentConfig::load(path);
    CHECK(cfg.train.steps == 12);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(ExperimentConfig::load(path), DataError);
}

TEST_CASE("model hash tracks model-relevant sections only") {
    ExperimentConfig a;
    ExperimentConfig b;
    CHECK(a.model_hash() == b.model_hash());

    b.eval.episodes = 7;  // eval settings do not change the model
    CHECK(a.model_hash() == b.model_hash());
    b.train.steps = 17;  // nor does the step budget
    CHECK(a.model_hash() == b.model_hash());

    b.env.dim = 32;
    CHECK(a.model_hash() != b.model_hash());
    b = a;
    b.pooling.heads = 8;
    b.pooling.output_dim = 64;
    CHECK(a.model_hash() != b.model_hash());
    b = a;
    b.train.policy_hidden = 128;
    CHECK(a.model_hash() != b.model_hash());
}

TEST_CASE("condition names round-trip") {
    for (Condition c : {Condition::in_domain, Condition::lighting, Condition::texture})
        CHECK(condition_from_string(to_string(c)) == c);
    CHECK_THROWS_AS(condition_from_string("dusk"), ConfigError);
}
