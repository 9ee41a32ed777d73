#include "afalab/trainer.hpp"

#include "afalab/metrics.hpp"
#include "afalab/optim.hpp"
#include "afalab/tape.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace afalab {

namespace {

// Training rebuilds a multi-megabyte tape every step. Without this, glibc
// serves those buffers via mmap and returns them to the kernel on free, so
// every step pays the page faults again; raising the thresholds keeps the
// arena warm and is worth about 4x end to end.
void tune_allocator() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
        return true;
    }();
    (void)done;
#endif
}

}  // namespace

double iqm(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("iqm: empty list");
    std::sort(values.begin(), values.end());
    const std::size_t drop = values.size() / 4;
    double total = 0.0;
    for (std::size_t i = drop; i < values.size() - drop; ++i) total += values[i];
    return total / static_cast<double>(values.size() - 2 * drop);
}

TrainResult train(const ExperimentConfig& cfg, const std::vector<Demonstration>& demos, std::uint64_t seed) {
    if (demos.empty()) throw std::invalid_argument("train: no demonstrations");
    tune_allocator();

    std::vector<const TokenGrid*> raw_grids;
    std::vector<BatchSample> samples;
    for (const Demonstration& demo : demos)
        for (const DemoStep& s : demo.steps) {
            raw_grids.push_back(&s.grid);
            samples.push_back({&s.grid, s.proprio, s.action, s.t});
        }
    if (samples.empty()) throw std::invalid_argument("train: demonstrations contain no steps");

    TrainResult result{Model::init(cfg.model_config(), seed), {}, 0.0, 0.0};
    result.model.fit_feature_normalizer(raw_grids);

    std::vector<Matrix*> params = result.model.parameters();
    AdamState adam = AdamState::for_params(params);
    const LrSchedule schedule{cfg.train.lr, static_cast<int>(cfg.train.warmup * cfg.train.steps),
                              std::max(cfg.train.steps, 1)};
    Rng batch_rng(mix_seed(seed, 0xba7c4));

    std::vector<BatchSample> batch(cfg.train.batch);
    std::vector<const Matrix*> grads(params.size());
    for (int k = 1; k <= cfg.train.steps; ++k) {
        for (int i = 0; i < cfg.train.batch; ++i)
            batch[i] = samples[batch_rng.uniform_int(0, static_cast<std::int64_t>(samples.size()) - 1)];

        Tape tape;
        const LossGraph graph = build_bc_loss(tape, result.model, batch);
        const double loss = tape.value(graph.loss)[0];
        if (!std::isfinite(loss)) throw DataError("NaN loss at step " + std::to_string(k));
        if (k == 1) result.loss_initial = loss;
        if (k % 50 == 0) result.history.push_back({k, loss});

        tape.backward(graph.loss);
        for (std::size_t p = 0; p < params.size(); ++p) grads[p] = &tape.grad(graph.params[p]);
        adam_update(params, grads, adam, lr_at(schedule, k - 1));
    }

    if (!result.history.empty()) {
        const std::size_t tail = std::min<std::size_t>(5, result.history.size());
        double total = 0.0;
        for (std::size_t i = result.history.size() - tail; i < result.history.size(); ++i)
            total += result.history[i].loss;
        result.loss_final_smoothed = total / static_cast<double>(tail);
    } else {
        result.loss_final_smoothed = result.loss_initial;
    }
    return result;
}

namespace {

double distance(std::array<double, 2> a, std::array<double, 2> b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

struct EpisodeOutcome {
    EpisodeTrace trace;
    double mass_sum = 0.0;
    double entropy_sum = 0.0;
    int attention_steps = 0;
};

EpisodeOutcome run_episode(const Model* model, const SignatureBank& bank, const ExperimentConfig& cfg,
                           Condition condition, int episode, std::uint64_t ep_seed) {
    SceneConfig scene;
    switch (condition) {
        case Condition::in_domain: break;
        case Condition::lighting: scene = perturb_lighting(scene, ep_seed); break;
        case Condition::texture: scene = perturb_texture(scene, cfg.env.grid, ep_seed); break;
    }

    Rng rng(mix_seed(ep_seed, 0xe915));
    WorldState state;
    state.agent = sample_start(rng);
    state.goal = sample_goal_uniform(rng);
    state.t = 0;

    EpisodeOutcome out;
    out.trace.episode = episode;
    out.trace.condition = to_string(condition);
    out.trace.seed = ep_seed;

    const bool wants_attention =
        model && (cfg.pooling.kind == PoolingKind::token_learner || cfg.pooling.kind == PoolingKind::afa);
    double dist = distance(state.agent, state.goal);
    bool success = dist <= cfg.env.epsilon;
    while (!success && state.t < cfg.env.horizon) {
        const TokenGrid grid = render_tokens(state, scene, bank);
        std::array<double, 2> action{};
        if (model) {
            AttentionRecord record;
            const std::vector<double> mu =
                model->act(grid, state.agent, state.t, wants_attention ? &record : nullptr);
            action = {mu[0], mu[1]};
            if (wants_attention) {
                out.mass_sum += attention_mass(record, task_mask(state, cfg.env.grid));
                out.entropy_sum += attention_entropy(record);
                out.attention_steps += 1;
            }
        } else {
            action = expert_action(state);
        }
        state = step(state, action);
        dist = distance(state.agent, state.goal);
        success = dist <= cfg.env.epsilon;
    }

    out.trace.success = success;
    out.trace.final_distance = dist;
    out.trace.steps = state.t;
    return out;
}

}  // namespace

ConditionResult evaluate(const Model* model, const SignatureBank& bank, const ExperimentConfig& cfg,
                         Condition condition, int episodes, std::uint64_t eval_seed, int jobs) {
    ConditionResult result;
    result.condition = to_string(condition);
    std::vector<EpisodeOutcome> outcomes(episodes);

    const auto worker = [&](int first, int stride) {
        for (int e = first; e < episodes; e += stride) {
            const std::uint64_t ep_seed =
                mix_seed(eval_seed, static_cast<std::uint64_t>(condition), static_cast<std::uint64_t>(e));
            outcomes[e] = run_episode(model, bank, cfg, condition, e, ep_seed);
        }
    };
    if (jobs <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker, j, jobs);
        for (std::thread& t : pool) t.join();
    }

    int successes = 0;
    double mass = 0.0, entropy = 0.0;
    int attention_steps = 0;
    int attention_episodes = 0;
    for (EpisodeOutcome& o : outcomes) {
        successes += o.trace.success;
        if (o.attention_steps > 0) {
            mass += o.mass_sum / o.attention_steps;
            entropy += o.entropy_sum / o.attention_steps;
            attention_episodes += 1;
        }
        attention_steps += o.attention_steps;
        result.traces.push_back(std::move(o.trace));
    }
    result.success_rate = static_cast<double>(successes) / episodes;
    if (attention_episodes > 0)
        result.attention = AttentionStats{mass / attention_episodes, entropy / attention_episodes};
    return result;
}

const ConditionResult* SeedResult::find(const std::string& condition) const {
    for (const ConditionResult& c : conditions)
        if (c.condition == condition) return &c;
    return nullptr;
}

double ExperimentReport::iqm_for(const std::string& condition) const {
    for (const auto& [name, value] : iqm_per_condition)
        if (name == condition) return value;
    throw std::invalid_argument("report has no condition " + condition);
}

nlohmann::json ExperimentReport::to_json() const {
    nlohmann::json seeds = nlohmann::json::array();
    for (const SeedResult& s : per_seed) {
        nlohmann::json conditions = nlohmann::json::array();
        for (const ConditionResult& c : s.conditions) {
            nlohmann::json traces = nlohmann::json::array();
            for (const EpisodeTrace& t : c.traces)
                traces.push_back({{"episode", t.episode},
                                  {"seed", t.seed},
                                  {"success", t.success},
                                  {"final_distance", t.final_distance},
                                  {"steps", t.steps}});
            nlohmann::json cj{{"condition", c.condition},
                              {"success_rate", c.success_rate},
                              {"traces", std::move(traces)}};
            if (c.attention)
                cj["attention"] = {{"mass", c.attention->mass}, {"entropy", c.attention->entropy}};
            conditions.push_back(std::move(cj));
        }
        seeds.push_back({{"seed", s.seed},
                         {"loss_initial", s.loss_initial},
                         {"loss_final_smoothed", s.loss_final_smoothed},
                         {"conditions", std::move(conditions)}});
    }
    nlohmann::json iqm_json = nlohmann::json::object();
    for (const auto& [name, value] : iqm_per_condition) iqm_json[name] = value;
    return nlohmann::json{{"format_version", format_version},
                          {"config_hash", config_hash},
                          {"pooling_kind", pooling_kind},
                          {"config", nlohmann::json::parse(config_dump)},
                          {"per_seed", std::move(seeds)},
                          {"iqm", std::move(iqm_json)}};
}

ExperimentReport ExperimentReport::from_json(const nlohmann::json& j) {
    ExperimentReport r;
    r.format_version = j.at("format_version").get<int>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.pooling_kind = j.at("pooling_kind").get<std::string>();
    r.config_dump = j.at("config").dump();
    for (const auto& sj : j.at("per_seed")) {
        SeedResult s;
        s.seed = sj.at("seed").get<std::uint64_t>();
        s.loss_initial = sj.at("loss_initial").get<double>();
        s.loss_final_smoothed = sj.at("loss_final_smoothed").get<double>();
        for (const auto& cj : sj.at("conditions")) {
            ConditionResult c;
            c.condition = cj.at("condition").get<std::string>();
            c.success_rate = cj.at("success_rate").get<double>();
            if (cj.contains("attention"))
                c.attention = AttentionStats{cj.at("attention").at("mass").get<double>(),
                                             cj.at("attention").at("entropy").get<double>()};
            for (const auto& tj : cj.at("traces")) {
                EpisodeTrace t;
                t.episode = tj.at("episode").get<int>();
                t.condition = c.condition;
                t.seed = tj.at("seed").get<std::uint64_t>();
                t.success = tj.at("success").get<bool>();
                t.final_distance = tj.at("final_distance").get<double>();
                t.steps = tj.at("steps").get<int>();
                c.traces.push_back(std::move(t));
            }
            s.conditions.push_back(std::move(c));
        }
        r.per_seed.push_back(std::move(s));
    }
    for (const auto& [name, value] : j.at("iqm").items()) r.iqm_per_condition.emplace_back(name, value.get<double>());
    return r;
}

std::string ExperimentReport::traces_csv() const {
    std::ostringstream out;
    out << "episode,condition,seed,success,final_distance,steps\n";
    out.precision(17);
    for (const SeedResult& s : per_seed)
        for (const ConditionResult& c : s.conditions)
            for (const EpisodeTrace& t : c.traces)
                out << t.episode << "," << t.condition << "," << s.seed << "," << (t.success ? 1 : 0) << ","
                    << t.final_distance << "," << t.steps << "\n";
    return out.str();
}

ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                const std::optional<std::filesystem::path>& out_dir) {
    const SignatureBank bank = SignatureBank::create(cfg.env.grid, cfg.env.dim, cfg.env.master_seed);
    const std::vector<Demonstration> demos =
        generate_demos(cfg.env_config(), bank, cfg.env.demos, cfg.env.horizon, cfg.env.demo_seed);

    ExperimentReport report;
    report.config_hash = cfg.model_hash();
    report.pooling_kind = to_string(cfg.pooling.kind);
    report.config_dump = cfg.to_json().dump();

    for (std::uint64_t seed : cfg.train.seeds) {
        TrainResult trained = train(cfg, demos, seed);
        SeedResult sr;
        sr.seed = seed;
        sr.loss_initial = trained.loss_initial;
        sr.loss_final_smoothed = trained.loss_final_smoothed;
        for (Condition condition : cfg.eval.conditions)
            sr.conditions.push_back(evaluate(&trained.model, bank, cfg, condition, cfg.eval.episodes,
                                             cfg.env.eval_seed, cfg.eval.jobs));
        report.per_seed.push_back(std::move(sr));
    }

    for (Condition condition : cfg.eval.conditions) {
        std::vector<double> rates;
        for (const SeedResult& s : report.per_seed) rates.push_back(s.find(to_string(condition))->success_rate);
        report.iqm_per_condition.emplace_back(to_string(condition), iqm(std::move(rates)));
    }

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        write_text_file(*out_dir / "report.json", report.to_json().dump(2) + "\n");
        write_text_file(*out_dir / "traces.csv", report.traces_csv());
    }
    return report;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

}  // namespace afalab
