#include "afalab/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace afalab {

namespace {

void reject_unknown_keys(const nlohmann::json& obj, const char* section,
                         std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) throw ConfigError(std::string("unknown key \"") + key + "\" in section " + section);
    }
}

template <class T>
void read_into(const nlohmann::json& obj, const char* key, T& target) {
    if (auto it = obj.find(key); it != obj.end()) {
        try {
            target = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("bad value for \"") + key + "\"");
        }
    }
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::string to_string(Condition c) {
    switch (c) {
        case Condition::in_domain: return "in_domain";
        case Condition::lighting: return "lighting";
        case Condition::texture: return "texture";
    }
    return "?";
}

Condition condition_from_string(const std::string& name) {
    if (name == "in_domain") return Condition::in_domain;
    if (name == "lighting") return Condition::lighting;
    if (name == "texture") return Condition::texture;
    throw ConfigError("unknown condition \"" + name + "\" (expected in_domain, lighting or texture)");
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    reject_unknown_keys(j, "root", {"env", "pooling", "train", "eval"});
    ExperimentConfig cfg;

    if (auto it = j.find("env"); it != j.end()) {
        reject_unknown_keys(*it, "env", {"grid", "dim", "horizon", "epsilon", "demos", "seeds"});
        read_into(*it, "grid", cfg.env.grid);
        read_into(*it, "dim", cfg.env.dim);
        read_into(*it, "horizon", cfg.env.horizon);
        read_into(*it, "epsilon", cfg.env.epsilon);
        read_into(*it, "demos", cfg.env.demos);
        if (auto s = it->find("seeds"); s != it->end()) {
            reject_unknown_keys(*s, "env.seeds", {"master", "demos", "eval"});
            read_into(*s, "master", cfg.env.master_seed);
            read_into(*s, "demos", cfg.env.demo_seed);
            read_into(*s, "eval", cfg.env.eval_seed);
        }
    }

    if (auto it = j.find("pooling"); it != j.end()) {
        reject_unknown_keys(*it, "pooling", {"kind", "heads", "output_dim", "tokens", "hidden"});
        if (auto k = it->find("kind"); k != it->end()) {
            try {
                cfg.pooling.kind = pooling_kind_from_string(k->get<std::string>());
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
        read_into(*it, "heads", cfg.pooling.heads);
        read_into(*it, "output_dim", cfg.pooling.output_dim);
        read_into(*it, "tokens", cfg.pooling.tokens);
        read_into(*it, "hidden", cfg.pooling.hidden);
    }

    if (auto it = j.find("train"); it != j.end()) {
        reject_unknown_keys(*it, "train",
                            {"steps", "batch", "lr", "warmup", "sigma", "seeds", "policy_hidden", "temporal_dim"});
        read_into(*it, "steps", cfg.train.steps);
        read_into(*it, "batch", cfg.train.batch);
        read_into(*it, "lr", cfg.train.lr);
        read_into(*it, "warmup", cfg.train.warmup);
        read_into(*it, "sigma", cfg.train.sigma);
        read_into(*it, "seeds", cfg.train.seeds);
        read_into(*it, "policy_hidden", cfg.train.policy_hidden);
        read_into(*it, "temporal_dim", cfg.train.temporal_dim);
    }

    if (auto it = j.find("eval"); it != j.end()) {
        reject_unknown_keys(*it, "eval", {"episodes", "conditions", "jobs"});
        read_into(*it, "episodes", cfg.eval.episodes);
        read_into(*it, "jobs", cfg.eval.jobs);
        if (auto c = it->find("conditions"); c != it->end()) {
            cfg.eval.conditions.clear();
            for (const auto& name : *c) cfg.eval.conditions.push_back(condition_from_string(name.get<std::string>()));
        }
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json conditions = nlohmann::json::array();
    for (Condition c : eval.conditions) conditions.push_back(to_string(c));
    return nlohmann::json{
        {"env",
         {{"grid", env.grid},
          {"dim", env.dim},
          {"horizon", env.horizon},
          {"epsilon", env.epsilon},
          {"demos", env.demos},
          {"seeds", {{"master", env.master_seed}, {"demos", env.demo_seed}, {"eval", env.eval_seed}}}}},
        {"pooling",
         {{"kind", to_string(pooling.kind)},
          {"heads", pooling.heads},
          {"output_dim", pooling.output_dim},
          {"tokens", pooling.tokens},
          {"hidden", pooling.hidden}}},
        {"train",
         {{"steps", train.steps},
          {"batch", train.batch},
          {"lr", train.lr},
          {"warmup", train.warmup},
          {"sigma", train.sigma},
          {"seeds", train.seeds},
          {"policy_hidden", train.policy_hidden},
          {"temporal_dim", train.temporal_dim}}},
        {"eval", {{"episodes", eval.episodes}, {"conditions", conditions}, {"jobs", eval.jobs}}}};
}

std::string ExperimentConfig::model_hash() const {
    const nlohmann::json j = to_json();
    nlohmann::json identity{{"env", j.at("env")},
                            {"pooling", j.at("pooling")},
                            {"policy_hidden", train.policy_hidden},
                            {"temporal_dim", train.temporal_dim}};
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(identity.dump())));
    return buf;
}

ModelConfig ExperimentConfig::model_config() const {
    ModelConfig m;
    m.kind = pooling.kind;
    m.grid = env.grid;
    m.dim = env.dim;
    m.afa_heads = pooling.heads;
    m.afa_output_dim = pooling.output_dim;
    m.tl_maps = pooling.tokens;
    m.tl_hidden = pooling.hidden;
    m.policy_hidden = train.policy_hidden;
    m.temporal_dim = train.temporal_dim;
    m.action_dim = 2;
    m.proprio_dim = 2;
    m.horizon = env.horizon;
    return m;
}

EnvConfig ExperimentConfig::env_config() const {
    EnvConfig e;
    e.grid = env.grid;
    e.dim = env.dim;
    e.horizon = env.horizon;
    e.epsilon = env.epsilon;
    e.master_seed = env.master_seed;
    return e;
}

void ExperimentConfig::validate() const {
    if (env.grid < 2) throw ConfigError("env.grid must be >= 2");
    if (env.dim < 3) throw ConfigError("env.dim must be >= 3");
    if (env.horizon < 1) throw ConfigError("env.horizon must be >= 1");
    if (env.epsilon <= 0.0) throw ConfigError("env.epsilon must be positive");
    if (env.demos < 1) throw ConfigError("env.demos must be >= 1");
    if (pooling.heads < 1) throw ConfigError("pooling.heads must be >= 1");
    if (pooling.output_dim < 1 || pooling.output_dim % pooling.heads != 0)
        throw ConfigError("pooling.output_dim must be a positive multiple of pooling.heads");
    if (pooling.tokens < 1) throw ConfigError("pooling.tokens must be >= 1");
    if (pooling.hidden < 1) throw ConfigError("pooling.hidden must be >= 1");
    if (train.steps < 0) throw ConfigError("train.steps must be >= 0");
    if (train.batch < 1) throw ConfigError("train.batch must be >= 1");
    if (train.lr <= 0.0) throw ConfigError("train.lr must be positive");
    if (train.warmup < 0.0 || train.warmup >= 1.0) throw ConfigError("train.warmup must lie in [0, 1)");
    if (train.sigma <= 0.0) throw ConfigError("train.sigma must be positive");
    if (train.seeds.empty()) throw ConfigError("train.seeds must be nonempty");
    if (train.policy_hidden < 1) throw ConfigError("train.policy_hidden must be >= 1");
    if (train.temporal_dim < 2 || train.temporal_dim % 2 != 0)
        throw ConfigError("train.temporal_dim must be even and >= 2");
    if (eval.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
    if (eval.conditions.empty()) throw ConfigError("eval.conditions must be nonempty");
    if (eval.jobs < 1) throw ConfigError("eval.jobs must be >= 1");
}

}  // namespace afalab
