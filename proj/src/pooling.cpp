#include "afalab/pooling.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace afalab {

nlohmann::json AttentionRecord::to_json() const {
    return nlohmann::json{{"height", height}, {"width", width}, {"head_weights", head_weights}};
}

AttentionRecord AttentionRecord::from_json(const nlohmann::json& j) {
    AttentionRecord r;
    r.height = j.at("height").get<int>();
    r.width = j.at("width").get<int>();
    r.head_weights = j.at("head_weights").get<std::vector<std::vector<double>>>();
    return r;
}

std::string to_string(PoolingKind kind) {
    switch (kind) {
        case PoolingKind::mean: return "mean";
        case PoolingKind::spatial_softmax: return "spatial_softmax";
        case PoolingKind::token_learner: return "token_learner";
        case PoolingKind::afa: return "afa";
    }
    return "?";
}

PoolingKind pooling_kind_from_string(const std::string& name) {
    if (name == "mean") return PoolingKind::mean;
    if (name == "spatial_softmax") return PoolingKind::spatial_softmax;
    if (name == "token_learner") return PoolingKind::token_learner;
    if (name == "afa") return PoolingKind::afa;
    throw std::invalid_argument("unknown pooling kind \"" + name +
                                "\" (expected mean, spatial_softmax, token_learner or afa)");
}

std::vector<double> linspace_coords(int n) {
    std::vector<double> c(n);
    for (int j = 0; j < n; ++j) c[j] = -1.0 + 2.0 * j / (n - 1);
    return c;
}

namespace {

Matrix random_matrix(int rows, int cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal(0.0, stddev);
    return m;
}

}  // namespace

TokenLearnerHead TokenLearnerHead::init(int dim, int map_count, int hidden, Rng& rng) {
    TokenLearnerHead h;
    h.map_count = map_count;
    h.hidden = hidden;
    for (int m = 0; m < map_count; ++m) {
        h.w1.push_back(random_matrix(dim, hidden, 1.0 / std::sqrt(dim), rng));
        h.b1.push_back(Matrix(1, hidden));
        h.w2.push_back(random_matrix(hidden, 1, 1.0 / std::sqrt(hidden), rng));
        h.b2.push_back(Matrix(1, 1));
    }
    return h;
}

AfaHead AfaHead::init(int dim, int heads, int output_dim, Rng& rng) {
    if (heads <= 0 || output_dim % heads != 0)
        throw std::invalid_argument("afa: output_dim " + std::to_string(output_dim) +
                                    " not divisible by heads " + std::to_string(heads));
    AfaHead h;
    h.heads = heads;
    h.output_dim = output_dim;
    const int dh = output_dim / heads;
    for (int i = 0; i < heads; ++i) {
        h.query.push_back(random_matrix(1, dh, 0.1, rng));
        h.w_key.push_back(random_matrix(dim, dh, 1.0 / std::sqrt(dim), rng));
        h.w_value.push_back(random_matrix(dim, dh, 1.0 / std::sqrt(dim), rng));
    }
    return h;
}

std::vector<double> mean_pool(const TokenGrid& grid) {
    const int n = grid.count();
    std::vector<double> out(grid.dim, 0.0);
    for (int r = 0; r < n; ++r) {
        auto row = grid.tokens.row_span(r);
        for (int d = 0; d < grid.dim; ++d) out[d] += row[d];
    }
    for (double& v : out) v /= n;
    return out;
}

Matrix spatial_softmax_weights(const TokenGrid& grid) {
    // channel-major view: row c holds the N activations of channel c
    return softmax_rows(transpose(grid.tokens));
}

std::vector<double> spatial_softmax(const TokenGrid& grid) {
    if (grid.height <= 1 || grid.width <= 1)
        throw std::invalid_argument("spatial_softmax: grid must be at least 2x2, got " +
                                    std::to_string(grid.height) + "x" + std::to_string(grid.width));
    const Matrix weights = spatial_softmax_weights(grid);
    const std::vector<double> xs = linspace_coords(grid.width);
    const std::vector<double> ys = linspace_coords(grid.height);
    std::vector<double> out(2 * grid.dim);
    for (int c = 0; c < grid.dim; ++c) {
        auto w = weights.row_span(c);
        double ex = 0.0, ey = 0.0;
        for (int i = 0; i < grid.height; ++i)
            for (int j = 0; j < grid.width; ++j) {
                const double s = w[i * grid.width + j];
                ex += s * xs[j];
                ey += s * ys[i];
            }
        out[2 * c] = ex;
        out[2 * c + 1] = ey;
    }
    return out;
}

Matrix token_learner(const TokenGrid& grid, const TokenLearnerHead& head, AttentionRecord* record) {
    const int n = grid.count();
    Matrix out(head.map_count, grid.dim);
    if (record) {
        record->height = grid.height;
        record->width = grid.width;
        record->head_weights.assign(head.map_count, {});
    }
    for (int m = 0; m < head.map_count; ++m) {
        // phi_m at every location, then softmax over locations
        Matrix hid = matmul(grid.tokens, head.w1[m]);  // N x hidden
        for (int r = 0; r < n; ++r) {
            auto row = hid.row_span(r);
            for (int k = 0; k < head.hidden; ++k) {
                row[k] += head.b1[m][k];
                if (row[k] < 0.0) row[k] = 0.0;
            }
        }
        Matrix score = matmul(hid, head.w2[m]);  // N x 1
        for (int r = 0; r < n; ++r) score[r] += head.b2[m][0];
        const Matrix attn = softmax_rows(transpose(score));  // 1 x N
        auto w = attn.row_span(0);
        auto t = out.row_span(m);
        for (int r = 0; r < n; ++r) {
            auto token = grid.tokens.row_span(r);
            for (int d = 0; d < grid.dim; ++d) t[d] += w[r] * token[d];
        }
        if (record) record->head_weights[m].assign(w.begin(), w.end());
    }
    return out;
}

std::vector<double> afa_pool(const TokenGrid& grid, const AfaHead& head, AttentionRecord* record) {
    if (head.output_dim % head.heads != 0)
        throw std::invalid_argument("afa: output_dim " + std::to_string(head.output_dim) +
                                    " not divisible by heads " + std::to_string(head.heads));
    const int n = grid.count();
    const int dh = head.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> out(head.output_dim);
    if (record) {
        record->height = grid.height;
        record->width = grid.width;
        record->head_weights.assign(head.heads, {});
    }
    for (int i = 0; i < head.heads; ++i) {
        const Matrix keys = matmul(grid.tokens, head.w_key[i]);      // N x d_h
        const Matrix values = matmul(grid.tokens, head.w_value[i]);  // N x d_h
        Matrix logits(1, n);
        for (int r = 0; r < n; ++r)
            logits[r] = dot(head.query[i].row_span(0), keys.row_span(r)) * inv_sqrt_dh;
        const Matrix attn = softmax_rows(logits);
        auto w = attn.row_span(0);
        for (int r = 0; r < n; ++r) {
            auto v = values.row_span(r);
            for (int d = 0; d < dh; ++d) out[i * dh + d] += w[r] * v[d];
        }
        if (record) record->head_weights[i].assign(w.begin(), w.end());
    }
    return out;
}

PoolResult pool(const PoolingHead& head, const TokenGrid& grid) {
    PoolResult result;
    std::visit(
        [&](const auto& h) {
            using T = std::decay_t<decltype(h)>;
            if constexpr (std::is_same_v<T, MeanPoolHead>) {
                result.features = mean_pool(grid);
            } else if constexpr (std::is_same_v<T, SpatialSoftmaxHead>) {
                result.features = spatial_softmax(grid);
            } else if constexpr (std::is_same_v<T, TokenLearnerHead>) {
                AttentionRecord rec;
                const Matrix tokens = token_learner(grid, h, &rec);
                result.features.assign(tokens.data().begin(), tokens.data().end());
                result.attention = std::move(rec);
            } else {
                AttentionRecord rec;
                result.features = afa_pool(grid, h, &rec);
                result.attention = std::move(rec);
            }
        },
        head);
    return result;
}

int pooled_dim(const PoolingHead& head, int grid_dim) {
    return std::visit(
        [&](const auto& h) -> int {
            using T = std::decay_t<decltype(h)>;
            if constexpr (std::is_same_v<T, MeanPoolHead>) return grid_dim;
            else if constexpr (std::is_same_v<T, SpatialSoftmaxHead>) return 2 * grid_dim;
            else if constexpr (std::is_same_v<T, TokenLearnerHead>) return h.map_count * grid_dim;
            else return h.output_dim;
        },
        head);
}

int pooled_dim(const PoolingHead& head, const TokenGrid& grid) { return pooled_dim(head, grid.dim); }

}  // namespace afalab
