#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afalab/matrix.hpp"
#include "afalab/optim.hpp"
#include "afalab/rng.hpp"
#include "afalab/tape.hpp"

#include <cmath>
#include <vector>

using namespace afalab;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = scale * rng.normal();
    return m;
}

double guarded_rel(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// central finite differences of a scalar graph w.r.t. one leaf matrix
template <class BuildLoss>
double max_fd_error(std::vector<Matrix>& leaves, BuildLoss build, double h = 1e-5) {
    Tape tape;
    std::vector<NodeId> ids;
    for (Matrix& m : leaves) ids.push_back(tape.leaf(m));
    const NodeId loss = build(tape, ids);
    tape.backward(loss);
    std::vector<Matrix> analytic;
    for (NodeId id : ids) analytic.push_back(tape.grad(id));

    double worst = 0.0;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        for (std::size_t i = 0; i < leaves[k].size(); ++i) {
            const double saved = leaves[k][i];
            const auto eval = [&](double v) {
                leaves[k][i] = v;
                Tape t2;
                std::vector<NodeId> ids2;
                for (Matrix& m : leaves) ids2.push_back(t2.leaf(m));
                return t2.value(build(t2, ids2))[0];
            };
            const double up = eval(saved + h);
            const double down = eval(saved - h);
            leaves[k][i] = saved;
            worst = std::max(worst, guarded_rel(analytic[k][i], (up - down) / (2.0 * h)));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
    Tape tape;
    const NodeId a = tape.leaf(Matrix::identity(2));
    const NodeId b = tape.leaf(Matrix(2, 2, {1, 2, 3, 4}));
    const Matrix& c = tape.value(tape.matmul(a, b));
    CHECK(c == Matrix(2, 2, {1, 2, 3, 4}));

    const NodeId r = tape.leaf(Matrix(1, 2, {1, 2}));
    const NodeId col = tape.leaf(Matrix(2, 1, {3, 4}));
    CHECK(tape.value(tape.matmul(r, col))[0] == doctest::Approx(11.0).epsilon(1e-15));
}

TEST_CASE("matmul rejects mismatched shapes, naming both") {
    Tape tape;
    const NodeId a = tape.leaf(Matrix(2, 3));
    const NodeId b = tape.leaf(Matrix(2, 2));
    bool threw = false;
    try {
        tape.matmul(a, b);
    } catch (const std::invalid_argument& e) {
        threw = true;
        const std::string what = e.what();
        CHECK(what.find("2x3") != std::string::npos);
        CHECK(what.find("2x2") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("matmul gradients match finite differences") {
    Rng rng(7);
    std::vector<Matrix> leaves{random_matrix(3, 4, rng), random_matrix(4, 2, rng)};
    const double err = max_fd_error(leaves, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.sum(t.matmul(ids[0], ids[1]));
    });
    CHECK(err <= 1e-6);
}

TEST_CASE("softmax_rows values") {
    Tape tape;
    const Matrix& balanced = tape.value(tape.softmax_rows(tape.leaf(Matrix(1, 2, {0, 0}))));
    CHECK(balanced[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(balanced[1] == doctest::Approx(0.5).epsilon(1e-14));

    const Matrix& stabilized = tape.value(tape.softmax_rows(tape.leaf(Matrix(1, 2, {1000, 0}))));
    CHECK(stabilized.all_finite());
    CHECK(stabilized[0] == doctest::Approx(1.0).epsilon(1e-12));

    const Matrix& hand = tape.value(tape.softmax_rows(tape.leaf(Matrix(1, 2, {1.0 / std::sqrt(2.0), 0}))));
    CHECK(hand[0] == doctest::Approx(0.6698).epsilon(2e-4));
    CHECK(hand[1] == doctest::Approx(0.3302).epsilon(2e-4));
}

TEST_CASE("softmax_rows rows sum to one and shift invariance") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix x = random_matrix(4, 9, rng, 3.0);
        const Matrix y = softmax_rows(x);
        Matrix shifted = x;
        const double offset = rng.uniform(-50.0, 50.0);
        for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += offset;
        const Matrix y2 = softmax_rows(shifted);
        for (int r = 0; r < y.rows(); ++r) {
            double total = 0.0;
            for (int c = 0; c < y.cols(); ++c) total += y.at(r, c);
            CHECK(std::abs(total - 1.0) <= 1e-12);
        }
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - y2[i]) <= 1e-12);
    }
}

TEST_CASE("elementwise values and domains") {
    Tape tape;
    const Matrix& r = tape.value(tape.relu(tape.leaf(Matrix(1, 3, {-1, 0, 2}))));
    CHECK(r == Matrix(1, 3, {0, 0, 2}));
    CHECK(tape.value(tape.tanh(tape.leaf(Matrix(1, 1, {0}))))[0] == 0.0);
    CHECK_THROWS_AS(tape.ln(tape.leaf(Matrix(1, 1, {0.0}))), std::domain_error);
    CHECK_THROWS_AS(tape.ln(tape.leaf(Matrix(1, 1, {-2.0}))), std::domain_error);
}

TEST_CASE("tanh gradient at zero equals one") {
    std::vector<Matrix> leaves{Matrix(1, 1, {0.0})};
    const double err = max_fd_error(
        leaves, [](Tape& t, const std::vector<NodeId>& ids) { return t.sum(t.tanh(ids[0])); }, 1e-6);
    CHECK(err <= 1e-9);

    Tape tape;
    const NodeId x = tape.leaf(Matrix(1, 1, {0.0}));
    const NodeId loss = tape.sum(tape.tanh(x));
    tape.backward(loss);
    CHECK(tape.grad(x)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("elementwise gradients vs finite differences over seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        std::vector<Matrix> leaves{random_matrix(2, 5, rng, 0.8), random_matrix(2, 5, rng, 0.8)};
        const double err = max_fd_error(leaves, [](Tape& t, const std::vector<NodeId>& ids) {
            const NodeId mixed = t.mul(t.tanh(ids[0]), t.relu(ids[1]));
            const NodeId expd = t.exp(t.scale(ids[0], 0.3));
            return t.sum(t.add(t.softmax_rows(mixed), expd));
        });
        CHECK(err <= 1e-5);
    }
}

TEST_CASE("concat_cols values and gradient split") {
    Tape tape;
    const NodeId a = tape.leaf(Matrix(1, 2, {1, 2}));
    const NodeId b = tape.leaf(Matrix(1, 3, {3, 4, 5}));
    CHECK(tape.value(tape.concat_cols(a, b)) == Matrix(1, 5, {1, 2, 3, 4, 5}));

    const NodeId empty = tape.leaf(Matrix(1, 0, std::vector<double>{}));
    const Matrix joined = tape.value(tape.concat_cols(a, empty));
    CHECK(joined == tape.value(a));

    const NodeId wrong = tape.leaf(Matrix(2, 2));
    CHECK_THROWS_AS(tape.concat_cols(a, wrong), std::invalid_argument);

    Rng rng(3);
    std::vector<Matrix> leaves{random_matrix(2, 3, rng), random_matrix(2, 4, rng)};
    const double err = max_fd_error(leaves, [](Tape& t, const std::vector<NodeId>& ids) {
        const NodeId joined = t.concat_cols(t.tanh(ids[0]), t.scale(ids[1], 2.0));
        return t.sum(t.mul(joined, joined));
    });
    CHECK(err <= 1e-5);
}

TEST_CASE("backward analytic cases") {
    Tape tape;
    const NodeId x = tape.leaf(Matrix(2, 2, {1, 2, 3, 4}));
    tape.backward(tape.sum(x));
    CHECK(tape.grad(x) == Matrix::constant(2, 2, 1.0));

    Tape tape2;
    const NodeId y = tape2.leaf(Matrix(2, 2, {1, 2, 3, 4}));
    tape2.backward(tape2.sum(tape2.mul(y, y)));
    CHECK(tape2.grad(y) == Matrix(2, 2, {2, 4, 6, 8}));
}

TEST_CASE("backward requires a scalar loss") {
    Tape tape;
    const NodeId x = tape.leaf(Matrix(2, 2));
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("backward is deterministic across repeated calls") {
    Rng rng(17);
    Tape tape;
    const NodeId a = tape.leaf(random_matrix(3, 3, rng));
    const NodeId b = tape.leaf(random_matrix(3, 3, rng));
    const NodeId loss = tape.sum(tape.softmax_rows(tape.matmul(tape.tanh(a), b)));
    tape.backward(loss);
    const Matrix ga = tape.grad(a);
    const Matrix gb = tape.grad(b);
    tape.backward(loss);
    CHECK(tape.grad(a) == ga);
    CHECK(tape.grad(b) == gb);
}

TEST_CASE("structural ops: stack, slice, reshape, transpose gradients") {
    Rng rng(23);
    std::vector<Matrix> leaves{random_matrix(2, 4, rng), random_matrix(3, 4, rng)};
    const double err = max_fd_error(leaves, [](Tape& t, const std::vector<NodeId>& ids) {
        const NodeId stacked = t.stack_rows(std::vector<NodeId>{ids[0], ids[1]});  // 5x4
        const NodeId part = t.slice_rows(stacked, 1, 3);
        const NodeId shaped = t.reshape(part, 4, 3);
        return t.sum(t.mul(t.transpose(shaped), t.transpose(shaped)));
    });
    CHECK(err <= 1e-5);
}

TEST_CASE("lr schedule endpoints and continuity") {
    const LrSchedule s{1e-3, 100, 1100};
    CHECK(lr_at(s, 100) == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(lr_at(s, 1100) == doctest::Approx(0.0).epsilon(1e-18));
    CHECK(lr_at(s, 600) == doctest::Approx(5e-4).epsilon(1e-12));
    CHECK(lr_at(s, 0) == 0.0);
    CHECK(lr_at(s, 99) == doctest::Approx(1e-3 * 99.0 / 100.0).epsilon(1e-15));
    CHECK_THROWS_AS(lr_at(s, -1), std::invalid_argument);
    CHECK_THROWS_AS(lr_at(s, 1101), std::invalid_argument);

    const LrSchedule no_warmup{2e-3, 0, 10};
    CHECK(lr_at(no_warmup, 0) == doctest::Approx(2e-3).epsilon(1e-15));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Matrix p(2, 2, {1, 2, 3, 4});
    const Matrix zero(2, 2);
    std::vector<Matrix*> params{&p};
    AdamState state = AdamState::for_params(params);
    adam_update(params, {&zero}, state, 1e-2);
    CHECK(p == Matrix(2, 2, {1, 2, 3, 4}));
    CHECK(state.step_count == 1);
}

TEST_CASE("adam: single step from zero state matches the closed form") {
    Matrix p(1, 3, {0.5, -0.5, 2.0});
    const Matrix g(1, 3, {0.2, -3.0, 1e-4});
    std::vector<Matrix*> params{&p};
    AdamState state = AdamState::for_params(params);
    const double lr = 1e-3;
    adam_update(params, {&g}, state, lr);
    // after bias correction: m_hat = g, v_hat = g^2
    const double expected0 = 0.5 - lr * 0.2 / (std::abs(0.2) + state.epsilon);
    const double expected1 = -0.5 - lr * (-3.0) / (std::abs(-3.0) + state.epsilon);
    CHECK(p[0] == doctest::Approx(expected0).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(expected1).epsilon(1e-14));
}

TEST_CASE("adam converges on a quadratic bowl") {
    Matrix w(1, 1, {0.0});
    std::vector<Matrix*> params{&w};
    AdamState state = AdamState::for_params(params);
    for (int k = 0; k < 1000; ++k) {
        const Matrix g(1, 1, {2.0 * (w[0] - 3.0)});
        adam_update(params, {&g}, state, 0.1);
    }
    CHECK(w[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("adam rejects mismatched shapes") {
    Matrix p(2, 2);
    const Matrix g(1, 2);
    std::vector<Matrix*> params{&p};
    AdamState state = AdamState::for_params(params);
    CHECK_THROWS_AS(adam_update(params, {&g}, state, 1e-3), std::invalid_argument);
}
