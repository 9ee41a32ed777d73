#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afalab/config.hpp"
#include "afalab/env.hpp"
#include "afalab/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

using namespace afalab;

namespace {

// small world: seconds per training run
ExperimentConfig tiny_config(PoolingKind kind = PoolingKind::afa) {
    ExperimentConfig cfg;
    cfg.env.grid = 4;
    cfg.env.dim = 12;
    cfg.env.horizon = 40;
    cfg.env.demos = 4;
    cfg.pooling.kind = kind;
    cfg.pooling.heads = 2;
    cfg.pooling.output_dim = 12;
    cfg.pooling.tokens = 2;
    cfg.pooling.hidden = 6;
    cfg.train.steps = 60;
    cfg.train.batch = 16;
    cfg.train.policy_hidden = 24;
    cfg.train.temporal_dim = 4;
    cfg.train.seeds = {1};
    cfg.eval.episodes = 20;
    return cfg;
}

struct World {
    ExperimentConfig cfg;
    SignatureBank bank;
    std::vector<Demonstration> demos;

    explicit World(const ExperimentConfig& c)
        : cfg(c),
          bank(SignatureBank::create(c.env.grid, c.env.dim, c.env.master_seed)),
          demos(generate_demos(c.env_config(), bank, c.env.demos, c.env.horizon, c.env.demo_seed)) {}
};

bool models_identical(const Model& a, const Model& b) {
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (!(*pa[i] == *pb[i])) return false;
    return a.feature_shift == b.feature_shift && a.feature_scale == b.feature_scale;
}

}  // namespace

TEST_CASE("iqm: examples and contract") {
    CHECK(iqm({0.5}) == 0.5);
    CHECK(iqm({1, 2, 3, 4, 5, 6, 7, 8}) == 4.5);
    CHECK(iqm({0, 0, 100}) == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(iqm({}), std::invalid_argument);
}

TEST_CASE("iqm: constant lists and monotonicity") {
    for (int n = 1; n <= 9; ++n) CHECK(iqm(std::vector<double>(n, 0.37)) == doctest::Approx(0.37).epsilon(1e-15));
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> values;
        const int n = 1 + static_cast<int>(rng.uniform_int(0, 11));
        for (int k = 0; k < n; ++k) values.push_back(rng.uniform(0.0, 1.0));
        const double before = iqm(values);
        const int raise = static_cast<int>(rng.uniform_int(0, n - 1));
        values[raise] += rng.uniform(0.0, 2.0);
        CHECK(iqm(values) >= before - 1e-12);
    }
}

TEST_CASE("train: zero steps returns the initialization") {
    World w(tiny_config());
    ExperimentConfig cfg = w.cfg;
    cfg.train.steps = 0;
    const TrainResult out = train(cfg, w.demos, 5);
    Model fresh = Model::init(cfg.model_config(), 5);
    std::vector<const TokenGrid*> grids;
    for (const auto& d : w.demos)
        for (const auto& s : d.steps) grids.push_back(&s.grid);
    fresh.fit_feature_normalizer(grids);
    CHECK(models_identical(out.model, fresh));
    CHECK(out.history.empty());
}

TEST_CASE("train: identical seeds give bit-identical models, different seeds differ") {
    World w(tiny_config());
    const TrainResult a = train(w.cfg, w.demos, 11);
    const TrainResult b = train(w.cfg, w.demos, 11);
    const TrainResult c = train(w.cfg, w.demos, 12);
    CHECK(models_identical(a.model, b.model));
    CHECK_FALSE(models_identical(a.model, c.model));
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].loss == b.history[i].loss);
}

TEST_CASE("train: loss history is recorded every 50 steps") {
    World w(tiny_config());
    ExperimentConfig cfg = w.cfg;
    cfg.train.steps = 250;
    const TrainResult out = train(cfg, w.demos, 3);
    REQUIRE(out.history.size() == 5);
    for (std::size_t i = 0; i < out.history.size(); ++i) CHECK(out.history[i].step == 50 * static_cast<int>(i + 1));
    CHECK(out.loss_initial > 0.0);
}

TEST_CASE("train: rejects empty demonstrations and aborts on non-finite loss") {
    World w(tiny_config());
    CHECK_THROWS_AS(train(w.cfg, {}, 1), std::invalid_argument);

    World corrupted(tiny_config());
    for (Demonstration& d : corrupted.demos)
        for (DemoStep& step : d.steps) step.grid.tokens[0] = std::nan("");
    CHECK_THROWS_AS(train(corrupted.cfg, corrupted.demos, 1), DataError);
}

TEST_CASE("train: no NaN loss across all pooling kinds") {
    for (PoolingKind kind : {PoolingKind::mean, PoolingKind::spatial_softmax, PoolingKind::token_learner,
                             PoolingKind::afa}) {
        World w(tiny_config(kind));
        const TrainResult out = train(w.cfg, w.demos, 2);
        for (const LossPoint& p : out.history) CHECK(std::isfinite(p.loss));
    }
}

TEST_CASE("evaluate: the scripted expert succeeds in-domain") {
    World w(tiny_config());
    const ConditionResult res = evaluate(nullptr, w.bank, w.cfg, Condition::in_domain, 20, 9001, 2);
    CHECK(res.success_rate == 1.0);
    CHECK(res.traces.size() == 20);
    CHECK_FALSE(res.attention.has_value());
}

TEST_CASE("evaluate: a frozen zero policy almost never succeeds") {
    World w(tiny_config(PoolingKind::mean));
    Model zero = Model::init(w.cfg.model_config(), 1);
    for (Matrix* p : zero.parameters()) p->fill(0.0);
    const ConditionResult res = evaluate(&zero, w.bank, w.cfg, Condition::in_domain, 50, 9001, 1);
    CHECK(res.success_rate <= 0.05);
    for (const EpisodeTrace& t : res.traces)
        if (!t.success) CHECK(t.steps == w.cfg.env.horizon);
}

TEST_CASE("evaluate: deterministic per seed, threaded or not") {
    World w(tiny_config());
    const TrainResult trained = train(w.cfg, w.demos, 4);
    const ConditionResult a = evaluate(&trained.model, w.bank, w.cfg, Condition::texture, 16, 77, 1);
    const ConditionResult b = evaluate(&trained.model, w.bank, w.cfg, Condition::texture, 16, 77, 2);
    REQUIRE(a.traces.size() == b.traces.size());
    CHECK(a.success_rate == b.success_rate);
    for (std::size_t i = 0; i < a.traces.size(); ++i) {
        CHECK(a.traces[i].final_distance == b.traces[i].final_distance);
        CHECK(a.traces[i].steps == b.traces[i].steps);
        CHECK(a.traces[i].seed == b.traces[i].seed);
    }
    if (a.attention) {
        REQUIRE(b.attention);
        CHECK(a.attention->mass == b.attention->mass);
        CHECK(a.attention->entropy == b.attention->entropy);
    }
}

TEST_CASE("run_experiment: well-formed report that round-trips losslessly") {
    ExperimentConfig cfg = tiny_config();
    cfg.train.steps = 30;
    cfg.eval.episodes = 3;
    cfg.eval.jobs = 2;
    const ExperimentReport report = run_experiment(cfg);

    CHECK(report.pooling_kind == "afa");
    CHECK(report.per_seed.size() == 1);
    CHECK(report.iqm_per_condition.size() == 3);
    CHECK(report.per_seed[0].conditions.size() == 3);
    for (const ConditionResult& c : report.per_seed[0].conditions) CHECK(c.traces.size() == 3);

    const nlohmann::json j = report.to_json();
    const ExperimentReport back = ExperimentReport::from_json(j);
    CHECK(back.to_json().dump() == j.dump());

    const std::string csv = report.traces_csv();
    // header + one row per (episode, condition)
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 3);
}

TEST_CASE("training does not regress below the untrained policy in-domain") {
    ExperimentConfig cfg = tiny_config(PoolingKind::mean);
    cfg.env.demos = 8;
    cfg.train.steps = 800;
    World w(cfg);
    Model untrained = Model::init(cfg.model_config(), 6);
    const double before = evaluate(&untrained, w.bank, cfg, Condition::in_domain, 25, 9001, 1).success_rate;
    const TrainResult trained = train(cfg, w.demos, 6);
    const double after = evaluate(&trained.model, w.bank, cfg, Condition::in_domain, 25, 9001, 1).success_rate;
    CHECK(after >= before);
}

TEST_CASE("checkpoints save and load exactly") {
    World w(tiny_config(PoolingKind::token_learner));
    const TrainResult trained = train(w.cfg, w.demos, 8);
    const auto path = std::filesystem::temp_directory_path() / "afalab_test_ckpt.json";
    save_checkpoint(path, trained.model, w.cfg.to_json(), w.cfg.model_hash(), 8);
    const Checkpoint back = load_checkpoint(path);
    CHECK(models_identical(back.model, trained.model));
    CHECK(back.config_hash == w.cfg.model_hash());
    CHECK(back.train_seed == 8);
    std::filesystem::remove(path);
}
