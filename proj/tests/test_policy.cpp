#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afalab/gradcheck.hpp"
#include "afalab/model.hpp"
#include "afalab/policy.hpp"
#include "afalab/rng.hpp"
#include "afalab/tape.hpp"

#include <cmath>
#include <vector>

using namespace afalab;

namespace {

TokenGrid random_grid(int h, int w, int d, Rng& rng) {
    TokenGrid g(h, w, d);
    for (std::size_t i = 0; i < g.tokens.size(); ++i) g.tokens[i] = rng.normal();
    return g;
}

ModelConfig small_config(PoolingKind kind = PoolingKind::mean) {
    ModelConfig mc;
    mc.kind = kind;
    mc.grid = 3;
    mc.dim = 6;
    mc.afa_heads = 2;
    mc.afa_output_dim = 6;
    mc.tl_maps = 2;
    mc.tl_hidden = 4;
    mc.policy_hidden = 16;
    mc.temporal_dim = 4;
    mc.horizon = 10;
    return mc;
}

void zero_parameters(Model& model) {
    for (Matrix* p : model.parameters()) p->fill(0.0);
}

}  // namespace

TEST_CASE("policy with zero weights outputs the zero action") {
    Rng rng(1);
    PolicyNet net = PolicyNet::zeros(10, 8, 2);
    const std::vector<double> pooled(6, 0.3);
    const std::vector<double> proprio{0.1, -0.2};
    const std::vector<double> mu = policy_forward(net, pooled, proprio, 3, 10, 2);
    CHECK(mu == std::vector<double>{0.0, 0.0});
}

TEST_CASE("policy outputs stay strictly inside (-1, 1)") {
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        PolicyNet net = PolicyNet::init(9, 12, 2, rng);
        std::vector<double> pooled(3), proprio(2);
        for (double& v : pooled) v = rng.uniform(-5.0, 5.0);
        for (double& v : proprio) v = rng.uniform(-1.0, 1.0);
        const std::vector<double> mu = policy_forward(net, pooled, proprio, 1, 9, 4);
        for (double m : mu) {
            CHECK(m > -1.0);
            CHECK(m < 1.0);
        }
    }
}

TEST_CASE("policy rejects mismatched input widths") {
    PolicyNet net = PolicyNet::zeros(10, 8, 2);
    const std::vector<double> pooled(9, 0.0);  // 9 + 2 + 4 != 10
    const std::vector<double> proprio{0.0, 0.0};
    CHECK_THROWS_AS(policy_forward(net, pooled, proprio, 0, 10, 4), std::invalid_argument);
}

TEST_CASE("sample_action: degenerate sigma returns the mean") {
    Rng rng(3);
    const ActionDistribution dist{{0.4, -0.7}, 1e-12};
    const std::vector<double> a = sample_action(dist, rng);
    CHECK(std::abs(a[0] - 0.4) <= 1e-9);
    CHECK(std::abs(a[1] + 0.7) <= 1e-9);
}

TEST_CASE("sample_action: samples stay in the box and match the mean") {
    Rng rng(4);
    const ActionDistribution dist{{0.0, 0.0}, 0.1};
    double total0 = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) {
        const std::vector<double> a = sample_action(dist, rng);
        CHECK(a[0] >= -1.0);
        CHECK(a[0] <= 1.0);
        CHECK(a[1] >= -1.0);
        CHECK(a[1] <= 1.0);
        total0 += a[0];
    }
    CHECK(std::abs(total0 / n) <= 3.0 * 0.1 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("sample_action: truncation near the boundary pulls the mean inward") {
    Rng rng(5);
    const ActionDistribution dist{{0.99}, 0.5};
    double total = 0.0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        const std::vector<double> a = sample_action(dist, rng);
        CHECK(a[0] <= 1.0);
        total += a[0];
    }
    CHECK(total / n < 0.99);
}

TEST_CASE("bc loss: zero when predictions equal targets, hand value otherwise") {
    Rng rng(6);
    Model model = Model::init(small_config(), 7);
    zero_parameters(model);
    const TokenGrid g = random_grid(3, 3, 6, rng);

    BatchSample s;
    s.grid = &g;
    s.proprio = {0.1, 0.2};
    s.action = {0.0, 0.0};
    s.t = 2;
    {
        Tape tape;
        const LossGraph graph = build_bc_loss(tape, model, std::vector<BatchSample>{s});
        CHECK(tape.value(graph.loss)[0] == doctest::Approx(0.0).epsilon(1e-15));
    }
    s.action = {1.0, 1.0};
    {
        Tape tape;
        const LossGraph graph = build_bc_loss(tape, model, std::vector<BatchSample>{s});
        CHECK(tape.value(graph.loss)[0] == doctest::Approx(2.0).epsilon(1e-14));
    }
}

TEST_CASE("bc loss: batch loss is the mean of the individual losses") {
    Rng rng(8);
    Model model = Model::init(small_config(PoolingKind::afa), 9);
    const TokenGrid g1 = random_grid(3, 3, 6, rng);
    const TokenGrid g2 = random_grid(3, 3, 6, rng);
    BatchSample s1{&g1, {0.1, -0.3}, {0.5, 0.2}, 1};
    BatchSample s2{&g2, {-0.6, 0.2}, {-0.4, 0.9}, 4};

    const auto loss_of = [&](std::vector<BatchSample> batch) {
        Tape tape;
        return tape.value(build_bc_loss(tape, model, batch).loss)[0];
    };
    const double joint = loss_of({s1, s2});
    const double split = 0.5 * (loss_of({s1}) + loss_of({s2}));
    CHECK(std::abs(joint - split) <= 1e-12);
}

TEST_CASE("bc loss rejects an empty batch") {
    Model model = Model::init(small_config(), 7);
    Tape tape;
    CHECK_THROWS_AS(build_bc_loss(tape, model, std::vector<BatchSample>{}), std::invalid_argument);
}

TEST_CASE("full-pipeline gradients pass finite differences for every head") {
    AuditOptions quick;
    quick.seeds = 3;
    for (const AuditRow& row : gradient_audit(quick))
        if (row.applicable) {
            INFO(row.component);
            CHECK(row.max_rel_err <= 1e-5);
        }
}

TEST_CASE("temporal embedding: zero step, range, distinctness, parity error") {
    const std::vector<double> at_zero = temporal_embed(0, 175, 16);
    for (int j = 0; j < 8; ++j) {
        CHECK(at_zero[2 * j] == 0.0);
        CHECK(at_zero[2 * j + 1] == 1.0);
    }
    for (int t = 0; t <= 175; ++t)
        for (double v : temporal_embed(t, 175, 16)) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    double min_gap = 1e300;
    std::vector<std::vector<double>> embeds;
    for (int t = 0; t <= 175; ++t) embeds.push_back(temporal_embed(t, 175, 16));
    for (std::size_t a = 0; a < embeds.size(); ++a)
        for (std::size_t b = a + 1; b < embeds.size(); ++b) {
            double l2 = 0.0;
            for (int k = 0; k < 16; ++k) l2 += (embeds[a][k] - embeds[b][k]) * (embeds[a][k] - embeds[b][k]);
            min_gap = std::min(min_gap, std::sqrt(l2));
        }
    CHECK(min_gap > 0.0);
    CHECK_THROWS_AS(temporal_embed(0, 10, 3), std::invalid_argument);
    CHECK_THROWS_AS(temporal_embed(11, 10, 4), std::invalid_argument);
}

TEST_CASE("plain gradient descent on one batch decreases the loss monotonically") {
    Rng rng(12);
    Model model = Model::init(small_config(PoolingKind::afa), 21);
    std::vector<TokenGrid> grids;
    for (int k = 0; k < 4; ++k) grids.push_back(random_grid(3, 3, 6, rng));
    std::vector<BatchSample> batch;
    for (int k = 0; k < 4; ++k)
        batch.push_back({&grids[k],
                         {rng.uniform(-1, 1), rng.uniform(-1, 1)},
                         {rng.uniform(-1, 1), rng.uniform(-1, 1)},
                         static_cast<int>(rng.uniform_int(0, 9))});

    std::vector<Matrix*> params = model.parameters();
    double previous = 1e300;
    for (int step = 0; step < 100; ++step) {
        Tape tape;
        const LossGraph graph = build_bc_loss(tape, model, batch);
        const double loss = tape.value(graph.loss)[0];
        CHECK(loss <= previous + 1e-12);
        previous = loss;
        tape.backward(graph.loss);
        for (std::size_t p = 0; p < params.size(); ++p) {
            const Matrix& g = tape.grad(graph.params[p]);
            for (std::size_t i = 0; i < g.size(); ++i) (*params[p])[i] -= 1e-4 * g[i];
        }
    }
}
