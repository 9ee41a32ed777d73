#include "afalab/model.hpp"

#include "afalab/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace afalab {

namespace {

struct ParamVisitor {
    template <class Fn>
    static void visit(const Model& model, Fn&& fn) {
        if (const auto* tl = std::get_if<TokenLearnerHead>(&model.head)) {
            for (int m = 0; m < tl->map_count; ++m) {
                const std::string tag = "tl.map" + std::to_string(m) + ".";
                fn(tag + "w1", tl->w1[m]);
                fn(tag + "b1", tl->b1[m]);
                fn(tag + "w2", tl->w2[m]);
                fn(tag + "b2", tl->b2[m]);
            }
        } else if (const auto* afa = std::get_if<AfaHead>(&model.head)) {
            for (int i = 0; i < afa->heads; ++i) {
                const std::string tag = "afa.head" + std::to_string(i) + ".";
                fn(tag + "query", afa->query[i]);
                fn(tag + "w_key", afa->w_key[i]);
                fn(tag + "w_value", afa->w_value[i]);
            }
        }
        const PolicyNet& p = model.policy;
        fn("policy.w1", p.w1);
        fn("policy.b1", p.b1);
        fn("policy.w2", p.w2);
        fn("policy.b2", p.b2);
        fn("policy.w3", p.w3);
        fn("policy.b3", p.b3);
        fn("policy.w4", p.w4);
        fn("policy.b4", p.b4);
    }
};

Matrix batch_context(const ModelConfig& cfg, std::span<const BatchSample> batch) {
    // proprio then temporal embedding, one row per sample
    const int b = static_cast<int>(batch.size());
    Matrix ctx(b, cfg.proprio_dim + cfg.temporal_dim);
    for (int r = 0; r < b; ++r) {
        auto row = ctx.row_span(r);
        for (int d = 0; d < cfg.proprio_dim; ++d) row[d] = batch[r].proprio[d];
        const std::vector<double> te = temporal_embed(batch[r].t, cfg.horizon, cfg.temporal_dim);
        std::copy(te.begin(), te.end(), row.begin() + cfg.proprio_dim);
    }
    return ctx;
}

}  // namespace

int ModelConfig::pooled_dim() const {
    switch (kind) {
        case PoolingKind::mean: return dim;
        case PoolingKind::spatial_softmax: return 2 * dim;
        case PoolingKind::token_learner: return tl_maps * dim;
        case PoolingKind::afa: return afa_output_dim;
    }
    return 0;
}

bool Model::standardizes_features() const {
    return config.kind == PoolingKind::mean || config.kind == PoolingKind::spatial_softmax;
}

std::vector<double> Model::pooled_features(const TokenGrid& grid, AttentionRecord* attention) const {
    PoolResult pooled = pool(head, grid);
    if (attention && pooled.attention) *attention = *pooled.attention;
    if (standardizes_features())
        for (std::size_t d = 0; d < pooled.features.size(); ++d)
            pooled.features[d] = (pooled.features[d] - feature_shift[d]) * feature_scale[d];
    return pooled.features;
}

void Model::fit_feature_normalizer(std::span<const TokenGrid* const> grids) {
    if (!standardizes_features() || grids.empty()) return;
    const int dim = config.pooled_dim();
    std::vector<double> mean(dim, 0.0);
    for (const TokenGrid* g : grids) {
        const PoolResult pooled = pool(head, *g);
        for (int d = 0; d < dim; ++d) mean[d] += pooled.features[d];
    }
    feature_shift = Matrix(1, dim);
    for (int d = 0; d < dim; ++d) feature_shift[d] = mean[d] / grids.size();

    // One shared scale from the token spread (not the much smaller pooled
    // spread): centering removes the constant background so the policy sees
    // the task signal, while the gentle scale keeps the network's
    // interpolation between demonstrations smooth. Per-dimension rescaling
    // would also blow up out-of-domain shifts along low-variance directions.
    double token_var = 0.0;
    std::size_t count = 0;
    std::vector<double> token_mean(config.dim, 0.0), token_sq(config.dim, 0.0);
    for (const TokenGrid* g : grids) {
        for (int r = 0; r < g->count(); ++r) {
            auto row = g->tokens.row_span(r);
            for (int d = 0; d < config.dim; ++d) {
                token_mean[d] += row[d];
                token_sq[d] += row[d] * row[d];
            }
        }
        count += g->count();
    }
    for (int d = 0; d < config.dim; ++d) {
        const double m = token_mean[d] / count;
        token_var += std::max(token_sq[d] / count - m * m, 0.0);
    }
    const double sigma = std::max(std::sqrt(token_var / config.dim), 1e-6);
    feature_scale = Matrix::constant(1, dim, 1.0 / sigma);
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
    Model model;
    model.config = config;
    model.feature_shift = Matrix(1, config.pooled_dim());
    model.feature_scale = Matrix::constant(1, config.pooled_dim(), 1.0);
    Rng head_rng(mix_seed(seed, 0xbead));
    switch (config.kind) {
        case PoolingKind::mean: model.head = MeanPoolHead{}; break;
        case PoolingKind::spatial_softmax: model.head = SpatialSoftmaxHead{}; break;
        case PoolingKind::token_learner:
            model.head = TokenLearnerHead::init(config.dim, config.tl_maps, config.tl_hidden, head_rng);
            break;
        case PoolingKind::afa:
            model.head = AfaHead::init(config.dim, config.afa_heads, config.afa_output_dim, head_rng);
            break;
    }
    Rng policy_rng(mix_seed(seed, 0x90710));
    model.policy = PolicyNet::init(config.policy_input_dim(), config.policy_hidden, config.action_dim, policy_rng);
    return model;
}

std::vector<Matrix*> Model::parameters() {
    std::vector<Matrix*> out;
    ParamVisitor::visit(*this, [&](const std::string&, const Matrix& m) { out.push_back(const_cast<Matrix*>(&m)); });
    return out;
}

std::vector<const Matrix*> Model::parameters() const {
    std::vector<const Matrix*> out;
    ParamVisitor::visit(*this, [&](const std::string&, const Matrix& m) { out.push_back(&m); });
    return out;
}

std::vector<std::string> Model::parameter_names() const {
    std::vector<std::string> out;
    ParamVisitor::visit(*this, [&](const std::string& name, const Matrix&) { out.push_back(name); });
    return out;
}

std::vector<double> Model::act(const TokenGrid& grid, std::span<const double> proprio, int t,
                               AttentionRecord* attention) const {
    const std::vector<double> features = pooled_features(grid, attention);
    return policy_forward(policy, features, proprio, t, config.horizon, config.temporal_dim);
}

LossGraph build_bc_loss(Tape& tape, const Model& model, std::span<const BatchSample> batch,
                        bool grids_require_grad) {
    if (batch.empty()) throw std::invalid_argument("build_bc_loss: empty batch");
    const ModelConfig& cfg = model.config;
    const int b = static_cast<int>(batch.size());
    const int n = cfg.grid * cfg.grid;

    LossGraph graph;

    // Head parameter leaves, in Model::parameters() order.
    const auto* tl = std::get_if<TokenLearnerHead>(&model.head);
    const auto* afa = std::get_if<AfaHead>(&model.head);
    std::vector<NodeId> head_param_nodes;
    if (tl) {
        for (int m = 0; m < tl->map_count; ++m) {
            head_param_nodes.push_back(tape.leaf(tl->w1[m]));
            head_param_nodes.push_back(tape.leaf(tl->b1[m]));
            head_param_nodes.push_back(tape.leaf(tl->w2[m]));
            head_param_nodes.push_back(tape.leaf(tl->b2[m]));
        }
    } else if (afa) {
        for (int i = 0; i < afa->heads; ++i) {
            head_param_nodes.push_back(tape.leaf(afa->query[i]));
            head_param_nodes.push_back(tape.leaf(afa->w_key[i]));
            head_param_nodes.push_back(tape.leaf(afa->w_value[i]));
        }
    }

    NodeId pooled = -1;  // b x pooled_dim

    if (cfg.kind == PoolingKind::mean || cfg.kind == PoolingKind::spatial_softmax) {
        if (!grids_require_grad) {
            Matrix features(b, cfg.pooled_dim());
            for (int r = 0; r < b; ++r) {
                const std::vector<double> f = model.pooled_features(*batch[r].grid);
                std::copy(f.begin(), f.end(), features.row_span(r).begin());
            }
            pooled = tape.constant(std::move(features));
        } else if (cfg.kind == PoolingKind::mean) {
            const NodeId averager = tape.constant(Matrix::constant(1, n, 1.0 / n));
            std::vector<NodeId> rows;
            for (int r = 0; r < b; ++r) {
                const NodeId grid_leaf = tape.leaf(batch[r].grid->tokens);
                graph.grid_leaves.push_back(grid_leaf);
                rows.push_back(tape.matmul(averager, grid_leaf));
            }
            pooled = tape.stack_rows(rows);
        } else {
            // per channel: softmax over locations, then expected coordinates
            Matrix coords(n, 2);
            const std::vector<double> xs = linspace_coords(cfg.grid);
            const std::vector<double> ys = linspace_coords(cfg.grid);
            for (int i = 0; i < cfg.grid; ++i)
                for (int j = 0; j < cfg.grid; ++j) {
                    coords.at(i * cfg.grid + j, 0) = xs[j];
                    coords.at(i * cfg.grid + j, 1) = ys[i];
                }
            const NodeId coord_node = tape.constant(std::move(coords));
            std::vector<NodeId> rows;
            for (int r = 0; r < b; ++r) {
                const NodeId grid_leaf = tape.leaf(batch[r].grid->tokens);
                graph.grid_leaves.push_back(grid_leaf);
                const NodeId weights = tape.softmax_rows(tape.transpose(grid_leaf));  // D x N
                const NodeId expected = tape.matmul(weights, coord_node);             // D x 2
                rows.push_back(tape.reshape(expected, 1, 2 * cfg.dim));
            }
            pooled = tape.stack_rows(rows);
        }
    } else if (cfg.kind == PoolingKind::token_learner) {
        Matrix stacked(b * n, cfg.dim);
        std::vector<NodeId> grid_consts(b);
        for (int r = 0; r < b; ++r) {
            const auto src = batch[r].grid->tokens.data();
            std::copy(src.begin(), src.end(), stacked.data().begin() + static_cast<std::size_t>(r) * n * cfg.dim);
            grid_consts[r] = tape.constant_ref(batch[r].grid->tokens);
        }
        const NodeId all_tokens = tape.constant(std::move(stacked));          // (B*N) x D
        const NodeId ones_bn = tape.constant(Matrix::constant(b * n, 1, 1.0));
        std::vector<std::vector<NodeId>> map_tokens(b);
        for (int m = 0; m < tl->map_count; ++m) {
            const NodeId w1 = head_param_nodes[4 * m + 0];
            const NodeId b1 = head_param_nodes[4 * m + 1];
            const NodeId w2 = head_param_nodes[4 * m + 2];
            const NodeId b2 = head_param_nodes[4 * m + 3];
            NodeId hid = tape.add(tape.matmul(all_tokens, w1), tape.matmul(ones_bn, b1));
            hid = tape.relu(hid);
            const NodeId score = tape.add(tape.matmul(hid, w2), tape.matmul(ones_bn, b2));  // (B*N) x 1
            const NodeId attn = tape.softmax_rows(tape.reshape(score, b, n));               // B x N
            for (int r = 0; r < b; ++r)
                map_tokens[r].push_back(tape.matmul(tape.slice_rows(attn, r, 1), grid_consts[r]));
        }
        std::vector<NodeId> rows(b);
        for (int r = 0; r < b; ++r) {
            NodeId row = map_tokens[r][0];
            for (int m = 1; m < tl->map_count; ++m) row = tape.concat_cols(row, map_tokens[r][m]);
            rows[r] = row;
        }
        pooled = tape.stack_rows(rows);
    } else {  // afa
        const int dh = afa->head_dim();
        std::vector<NodeId> grid_consts(b);
        for (int r = 0; r < b; ++r) grid_consts[r] = tape.constant_ref(batch[r].grid->tokens);
        NodeId out = -1;
        for (int i = 0; i < afa->heads; ++i) {
            const NodeId q = head_param_nodes[3 * i + 0];
            const NodeId wk = head_param_nodes[3 * i + 1];
            const NodeId wv = head_param_nodes[3 * i + 2];
            // q (F W_K)^T == (F (W_K q^T))^T; the right-hand association
            // shares the query-key product across the whole batch
            const NodeId rq = tape.matmul(wk, tape.transpose(q));  // D x 1
            std::vector<NodeId> logit_cols(b);
            for (int r = 0; r < b; ++r) logit_cols[r] = tape.matmul(grid_consts[r], rq);  // N x 1
            const NodeId logits = tape.scale(tape.reshape(tape.stack_rows(logit_cols), b, n),
                                             1.0 / std::sqrt(static_cast<double>(dh)));
            const NodeId attn = tape.softmax_rows(logits);  // B x N
            std::vector<NodeId> mixed(b);
            for (int r = 0; r < b; ++r) mixed[r] = tape.matmul(tape.slice_rows(attn, r, 1), grid_consts[r]);
            const NodeId head_out = tape.matmul(tape.stack_rows(mixed), wv);  // B x d_h
            out = i == 0 ? head_out : tape.concat_cols(out, head_out);
        }
        pooled = out;
    }

    const NodeId x = tape.concat_cols(pooled, tape.constant(batch_context(cfg, batch)));

    // policy parameter leaves, matching Model::parameters() order
    const PolicyNet& p = model.policy;
    const NodeId w1 = tape.leaf(p.w1), b1 = tape.leaf(p.b1);
    const NodeId w2 = tape.leaf(p.w2), b2 = tape.leaf(p.b2);
    const NodeId w3 = tape.leaf(p.w3), b3 = tape.leaf(p.b3);
    const NodeId w4 = tape.leaf(p.w4), b4 = tape.leaf(p.b4);
    const NodeId ones_b = tape.constant(Matrix::constant(b, 1, 1.0));

    NodeId h = tape.relu(tape.add(tape.matmul(x, w1), tape.matmul(ones_b, b1)));
    h = tape.relu(tape.add(tape.matmul(h, w2), tape.matmul(ones_b, b2)));
    h = tape.relu(tape.add(tape.matmul(h, w3), tape.matmul(ones_b, b3)));
    const NodeId mu = tape.tanh(tape.add(tape.matmul(h, w4), tape.matmul(ones_b, b4)));

    Matrix actions(b, cfg.action_dim);
    for (int r = 0; r < b; ++r)
        for (int d = 0; d < cfg.action_dim; ++d) actions.at(r, d) = batch[r].action[d];
    const NodeId err = tape.add(mu, tape.scale(tape.constant(std::move(actions)), -1.0));
    const NodeId sq = tape.mul(err, err);
    graph.loss = tape.scale(tape.sum(sq), 1.0 / b);

    graph.params = head_param_nodes;
    for (NodeId id : {w1, b1, w2, b2, w3, b3, w4, b4}) graph.params.push_back(id);
    return graph;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const nlohmann::json& config_echo, const std::string& config_hash,
                     std::uint64_t train_seed) {
    nlohmann::json params = nlohmann::json::array();
    ParamVisitor::visit(model, [&](const std::string& name, const Matrix& m) {
        params.push_back({{"name", name},
                          {"rows", m.rows()},
                          {"cols", m.cols()},
                          {"data", std::vector<double>(m.data().begin(), m.data().end())}});
    });
    const ModelConfig& c = model.config;
    nlohmann::json j{{"format_version", 1},
                     {"config_hash", config_hash},
                     {"train_seed", train_seed},
                     {"normalization",
                      {{"shift", std::vector<double>(model.feature_shift.data().begin(), model.feature_shift.data().end())},
                       {"scale", std::vector<double>(model.feature_scale.data().begin(), model.feature_scale.data().end())}}},
                     {"config", config_echo},
                     {"model",
                      {{"kind", to_string(c.kind)},
                       {"grid", c.grid},
                       {"dim", c.dim},
                       {"afa_heads", c.afa_heads},
                       {"afa_output_dim", c.afa_output_dim},
                       {"tl_maps", c.tl_maps},
                       {"tl_hidden", c.tl_hidden},
                       {"policy_hidden", c.policy_hidden},
                       {"temporal_dim", c.temporal_dim},
                       {"action_dim", c.action_dim},
                       {"proprio_dim", c.proprio_dim},
                       {"horizon", c.horizon},
                       {"params", std::move(params)}}}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("checkpoint not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    if (j.at("format_version").get<int>() != 1)
        throw DataError("unsupported checkpoint version in " + path.string());

    const nlohmann::json& m = j.at("model");
    ModelConfig cfg;
    cfg.kind = pooling_kind_from_string(m.at("kind").get<std::string>());
    cfg.grid = m.at("grid").get<int>();
    cfg.dim = m.at("dim").get<int>();
    cfg.afa_heads = m.at("afa_heads").get<int>();
    cfg.afa_output_dim = m.at("afa_output_dim").get<int>();
    cfg.tl_maps = m.at("tl_maps").get<int>();
    cfg.tl_hidden = m.at("tl_hidden").get<int>();
    cfg.policy_hidden = m.at("policy_hidden").get<int>();
    cfg.temporal_dim = m.at("temporal_dim").get<int>();
    cfg.action_dim = m.at("action_dim").get<int>();
    cfg.proprio_dim = m.at("proprio_dim").get<int>();
    cfg.horizon = m.at("horizon").get<int>();

    Checkpoint ck;
    ck.model = Model::init(cfg, 0);
    ck.model.feature_shift = Matrix(1, cfg.pooled_dim(), j.at("normalization").at("shift").get<std::vector<double>>());
    ck.model.feature_scale = Matrix(1, cfg.pooled_dim(), j.at("normalization").at("scale").get<std::vector<double>>());
    ck.config_hash = j.at("config_hash").get<std::string>();
    ck.train_seed = j.at("train_seed").get<std::uint64_t>();
    ck.echo_dump = j.at("config").dump();

    std::vector<Matrix*> params = ck.model.parameters();
    const std::vector<std::string> names = ck.model.parameter_names();
    const nlohmann::json& stored = m.at("params");
    if (stored.size() != params.size())
        throw DataError("checkpoint parameter count mismatch in " + path.string());
    for (std::size_t k = 0; k < params.size(); ++k) {
        const nlohmann::json& entry = stored[k];
        if (entry.at("name").get<std::string>() != names[k])
            throw DataError("checkpoint parameter order mismatch at " + names[k]);
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        std::vector<double> data = entry.at("data").get<std::vector<double>>();
        if (rows != params[k]->rows() || cols != params[k]->cols())
            throw DataError("checkpoint shape mismatch at " + names[k]);
        *params[k] = Matrix(rows, cols, std::move(data));
    }
    return ck;
}

nlohmann::json Checkpoint::config_echo() const { return nlohmann::json::parse(echo_dump); }

}  // namespace afalab
