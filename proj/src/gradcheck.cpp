#include "afalab/gradcheck.hpp"

#include "afalab/rng.hpp"
#include "afalab/tape.hpp"

#include <cmath>

namespace afalab {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

namespace {

struct AuditCase {
    Model model;
    std::vector<TokenGrid> grids;
    std::vector<BatchSample> batch;
};

AuditCase make_case(PoolingKind kind, const AuditOptions& o, std::uint64_t seed) {
    ModelConfig mc;
    mc.kind = kind;
    mc.grid = o.grid;
    mc.dim = o.dim;
    mc.afa_heads = o.afa_heads;
    mc.afa_output_dim = o.afa_output_dim;
    mc.tl_maps = o.tl_maps;
    mc.tl_hidden = o.tl_hidden;
    mc.policy_hidden = o.policy_hidden;
    mc.temporal_dim = o.temporal_dim;
    mc.horizon = o.horizon;

    AuditCase c{Model::init(mc, mix_seed(seed, 0xAD17)), {}, {}};
    Rng rng(mix_seed(seed, 0xF00D));
    c.grids.reserve(o.batch);
    for (int b = 0; b < o.batch; ++b) {
        TokenGrid g(o.grid, o.grid, o.dim);
        for (std::size_t i = 0; i < g.tokens.size(); ++i) g.tokens[i] = rng.normal(0.0, 0.7);
        c.grids.push_back(std::move(g));
    }
    for (int b = 0; b < o.batch; ++b) {
        BatchSample s;
        s.grid = &c.grids[b];
        s.proprio = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        s.action = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        s.t = static_cast<int>(rng.uniform_int(0, o.horizon));
        c.batch.push_back(s);
    }
    return c;
}

double loss_value(const Model& model, std::span<const BatchSample> batch, bool grid_grads) {
    Tape tape;
    const LossGraph graph = build_bc_loss(tape, model, batch, grid_grads);
    return tape.value(graph.loss)[0];
}

// max relative error over all parameter entries (and grid entries when
// audit_grid_inputs is set)
double audit_kind(PoolingKind kind, const AuditOptions& o, std::uint64_t seed, bool audit_grid_inputs,
                  int& checked, std::string& worst_location) {
    AuditCase c = make_case(kind, o, seed);

    Tape tape;
    const LossGraph graph = build_bc_loss(tape, c.model, c.batch, audit_grid_inputs);
    tape.backward(graph.loss);

    std::vector<Matrix> analytic;
    for (NodeId id : graph.params) analytic.push_back(tape.grad(id));
    std::vector<Matrix> analytic_grids;
    for (NodeId id : graph.grid_leaves) analytic_grids.push_back(tape.grad(id));

    double worst = 0.0;
    std::vector<Matrix*> params = c.model.parameters();
    const std::vector<std::string> names = c.model.parameter_names();
    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& m = *params[p];
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double saved = m[i];
            m[i] = saved + o.fd_step;
            const double up = loss_value(c.model, c.batch, audit_grid_inputs);
            m[i] = saved - o.fd_step;
            const double down = loss_value(c.model, c.batch, audit_grid_inputs);
            m[i] = saved;
            const double numeric = (up - down) / (2.0 * o.fd_step);
            const double err = relative_error(analytic[p][i], numeric);
            if (err > worst) {
                worst = err;
                worst_location = names[p];
            }
            ++checked;
        }
    }
    if (audit_grid_inputs) {
        for (std::size_t b = 0; b < c.grids.size(); ++b) {
            Matrix& g = c.grids[b].tokens;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double saved = g[i];
                g[i] = saved + o.fd_step;
                const double up = loss_value(c.model, c.batch, true);
                g[i] = saved - o.fd_step;
                const double down = loss_value(c.model, c.batch, true);
                g[i] = saved;
                const double numeric = (up - down) / (2.0 * o.fd_step);
                const double err = relative_error(analytic_grids[b][i], numeric);
                if (err > worst) {
                    worst = err;
                    worst_location = "grid[" + std::to_string(b) + "]";
                }
                ++checked;
            }
        }
    }
    return worst;
}

}  // namespace

std::vector<AuditRow> gradient_audit(const AuditOptions& options) {
    std::vector<AuditRow> rows;

    const auto run = [&](const std::string& name, PoolingKind kind, bool grid_inputs) {
        AuditRow row;
        row.component = name;
        for (int s = 0; s < options.seeds; ++s) {
            std::string location;
            const double err = audit_kind(kind, options, static_cast<std::uint64_t>(s) + 1, grid_inputs,
                                          row.checked_values, location);
            if (err >= row.max_rel_err) {
                row.max_rel_err = err;
                row.worst_location = location;
            }
        }
        rows.push_back(std::move(row));
    };

    run("policy", PoolingKind::mean, false);  // pure policy gradients under parameter-free pooling
    run("spatial_softmax", PoolingKind::spatial_softmax, true);
    run("token_learner", PoolingKind::token_learner, false);
    run("afa", PoolingKind::afa, false);

    AuditRow mean_row;
    mean_row.component = "mean";
    mean_row.applicable = false;  // no head parameters
    rows.push_back(mean_row);
    return rows;
}

bool audit_passed(const std::vector<AuditRow>& rows, double threshold) {
    for (const AuditRow& r : rows)
        if (r.applicable && r.max_rel_err > threshold) return false;
    return true;
}

}  // namespace afalab
