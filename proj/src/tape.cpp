#include "afalab/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <utility>

namespace afalab {

namespace {

using ConstEigenMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstEigenMap map(const Matrix& m) { return {m.data().data(), m.rows(), m.cols()}; }
EigenMap map(Matrix& m) { return {m.data().data(), m.rows(), m.cols()}; }

}  // namespace

NodeId Tape::push(Node n) {
    if (n.requires_grad) {
        const Matrix& v = n.view ? *n.view : n.value;
        n.grad = Matrix(v.rows(), v.cols());
    }
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Matrix value, bool requires_grad) {
    Node n{};
    n.kind = OpKind::leaf;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::constant_ref(const Matrix& value) {
    Node n{};
    n.kind = OpKind::leaf;
    n.requires_grad = false;
    n.view = &value;
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    Node n{};
    n.kind = OpKind::matmul;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    n.in = {a, b};
    n.value = afalab::matmul(val(nodes_[a]), val(nodes_[b]));
    return push(std::move(n));
}

NodeId Tape::transpose(NodeId a) {
    Node n{};
    n.kind = OpKind::transpose;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    n.value = afalab::transpose(val(nodes_[a]));
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Matrix& va = val(nodes_[a]);
    const Matrix& vb = val(nodes_[b]);
    if (!va.same_shape(vb))
        throw std::invalid_argument("add: incompatible shapes " + va.shape_str() + " and " + vb.shape_str());
    Node n{};
    n.kind = OpKind::add;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    n.in = {a, b};
    n.value = Matrix(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] + vb[i];
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Matrix& va = val(nodes_[a]);
    const Matrix& vb = val(nodes_[b]);
    if (!va.same_shape(vb))
        throw std::invalid_argument("mul: incompatible shapes " + va.shape_str() + " and " + vb.shape_str());
    Node n{};
    n.kind = OpKind::mul;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    n.in = {a, b};
    n.value = Matrix(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] * vb[i];
    return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
    const Matrix& va = val(nodes_[a]);
    Node n{};
    n.kind = OpKind::scale;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    n.scalar = c;
    n.value = Matrix(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = c * va[i];
    return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
    const Matrix& va = val(nodes_[a]);
    Node n{};
    n.kind = OpKind::relu;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    n.value = Matrix(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double v = va[i];
        // keep NaN visible so a diverged forward pass reaches the loss check
        n.value[i] = v > 0.0 ? v : (v == v ? 0.0 : v);
    }
    return push(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
    const Matrix& va = val(nodes_[a]);
    Node n{};
    n.kind = OpKind::tanh_op;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    n.value = Matrix(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = std::tanh(va[i]);
    return push(std::move(n));
}

NodeId Tape::exp(NodeId a) {
    const Matrix& va = val(nodes_[a]);
    Node n{};
    n.kind = OpKind::exp_op;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    n.value = Matrix(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = std::exp(va[i]);
    return push(std::move(n));
}

NodeId Tape::ln(NodeId a) {
    const Matrix& va = val(nodes_[a]);
    Node n{};
    n.kind = OpKind::ln;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    n.value = Matrix(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) {
        if (va[i] <= 0.0) throw std::domain_error("ln: nonpositive input " + std::to_string(va[i]));
        n.value[i] = std::log(va[i]);
    }
    return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId a) {
    Node n{};
    n.kind = OpKind::softmax_rows;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    n.value = afalab::softmax_rows(val(nodes_[a]));
    return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
    Node n{};
    n.kind = OpKind::concat_cols;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    n.in = {a, b};
    n.value = afalab::concat_cols(val(nodes_[a]), val(nodes_[b]));
    return push(std::move(n));
}

NodeId Tape::stack_rows(std::span<const NodeId> parts) {
    if (parts.empty()) throw std::invalid_argument("stack_rows: empty part list");
    const int cols = val(nodes_[parts[0]]).cols();
    int rows = 0;
    bool rg = false;
    for (NodeId p : parts) {
        const Matrix& v = val(nodes_[p]);
        if (v.cols() != cols)
            throw std::invalid_argument("stack_rows: incompatible shapes " + val(nodes_[parts[0]]).shape_str() +
                                        " and " + v.shape_str());
        rows += v.rows();
        rg = rg || nodes_[p].requires_grad;
    }
    Node n{};
    n.kind = OpKind::stack_rows;
    n.requires_grad = rg;
    n.extra_begin = static_cast<std::int32_t>(extra_inputs_.size());
    n.extra_count = static_cast<std::int32_t>(parts.size());
    extra_inputs_.insert(extra_inputs_.end(), parts.begin(), parts.end());
    n.value = Matrix(rows, cols);
    int r = 0;
    for (NodeId p : parts) {
        const Matrix& v = val(nodes_[p]);
        std::copy(v.data().begin(), v.data().end(), n.value.data().begin() + static_cast<std::size_t>(r) * cols);
        r += v.rows();
    }
    return push(std::move(n));
}

NodeId Tape::slice_rows(NodeId a, int row_begin, int row_count) {
    const Matrix& va = val(nodes_[a]);
    if (row_begin < 0 || row_count <= 0 || row_begin + row_count > va.rows())
        throw std::invalid_argument("slice_rows: range [" + std::to_string(row_begin) + ", " +
                                    std::to_string(row_begin + row_count) + ") out of " + va.shape_str());
    Node n{};
    n.kind = OpKind::slice_rows;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    n.arg0 = row_begin;
    n.arg1 = row_count;
    n.value = Matrix(row_count, va.cols());
    std::copy(va.data().begin() + static_cast<std::size_t>(row_begin) * va.cols(),
              va.data().begin() + static_cast<std::size_t>(row_begin + row_count) * va.cols(),
              n.value.data().begin());
    return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, int rows, int cols) {
    const Matrix& va = val(nodes_[a]);
    if (static_cast<std::size_t>(rows) * cols != va.size())
        throw std::invalid_argument("reshape: " + va.shape_str() + " to " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    Node n{};
    n.kind = OpKind::reshape;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    n.value = Matrix(rows, cols, std::vector<double>(va.data().begin(), va.data().end()));
    return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
    const Matrix& va = val(nodes_[a]);
    Node n{};
    n.kind = OpKind::sum;
    n.requires_grad = nodes_[a].requires_grad;
    n.in = {a, -1};
    double s = 0.0;
    for (double v : va.data()) s += v;
    n.value = Matrix(1, 1, {s});
    return push(std::move(n));
}

void Tape::backward(NodeId loss) {
    const Matrix& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1)
        throw std::invalid_argument("backward: loss must be 1x1, got " + lv.shape_str());
    if (!nodes_[loss].requires_grad)
        throw std::invalid_argument("backward: loss does not depend on any gradient-carrying leaf");
    for (Node& n : nodes_)
        if (n.requires_grad) n.grad.fill(0.0);
    nodes_[loss].grad[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        if (!nodes_[id].requires_grad) continue;
        backprop_node(id);
    }
}

void Tape::backprop_node(NodeId id) {
    Node& n = nodes_[id];
    const Matrix& g = n.grad;
    switch (n.kind) {
        case OpKind::leaf:
            break;
        case OpKind::matmul: {
            Node& a = nodes_[n.in[0]];
            Node& b = nodes_[n.in[1]];
            // dA = dC * B^T, dB = A^T * dC
            if (a.requires_grad) map(a.grad).noalias() += map(g) * map(val(b)).transpose();
            if (b.requires_grad) map(b.grad).noalias() += map(val(a)).transpose() * map(g);
            break;
        }
        case OpKind::transpose: {
            Node& a = nodes_[n.in[0]];
            if (a.requires_grad) map(a.grad) += map(g).transpose();
            break;
        }
        case OpKind::add: {
            for (int k = 0; k < 2; ++k) {
                Node& a = nodes_[n.in[k]];
                if (!a.requires_grad) continue;
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i];
            }
            break;
        }
        case OpKind::mul: {
            Node& a = nodes_[n.in[0]];
            Node& b = nodes_[n.in[1]];
            if (a.requires_grad) {
                const Matrix& vb = val(b);
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * vb[i];
            }
            if (b.requires_grad) {
                const Matrix& va = val(a);
                for (std::size_t i = 0; i < g.size(); ++i) b.grad[i] += g[i] * va[i];
            }
            break;
        }
        case OpKind::scale: {
            Node& a = nodes_[n.in[0]];
            if (a.requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += n.scalar * g[i];
            break;
        }
        case OpKind::relu: {
            Node& a = nodes_[n.in[0]];
            if (a.requires_grad) {
                const Matrix& va = val(a);
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += va[i] > 0.0 ? g[i] : 0.0;
            }
            break;
        }
        case OpKind::tanh_op: {
            Node& a = nodes_[n.in[0]];
            if (a.requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
            break;
        }
        case OpKind::exp_op: {
            Node& a = nodes_[n.in[0]];
            if (a.requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * n.value[i];
            break;
        }
        case OpKind::ln: {
            Node& a = nodes_[n.in[0]];
            if (a.requires_grad) {
                const Matrix& va = val(a);
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] / va[i];
            }
            break;
        }
        case OpKind::softmax_rows: {
            Node& a = nodes_[n.in[0]];
            if (!a.requires_grad) break;
            // dx_j = y_j * (dy_j - sum_k dy_k y_k), row-wise
            for (int r = 0; r < g.rows(); ++r) {
                auto y = n.value.row_span(r);
                auto dy = g.row_span(r);
                auto dx = a.grad.row_span(r);
                double inner = 0.0;
                for (std::size_t j = 0; j < y.size(); ++j) inner += dy[j] * y[j];
                for (std::size_t j = 0; j < y.size(); ++j) dx[j] += y[j] * (dy[j] - inner);
            }
            break;
        }
        case OpKind::concat_cols: {
            Node& a = nodes_[n.in[0]];
            Node& b = nodes_[n.in[1]];
            const int a_cols = val(a).cols();
            const int b_cols = val(b).cols();
            for (int r = 0; r < g.rows(); ++r) {
                auto gr = g.row_span(r);
                if (a.requires_grad) {
                    auto ga = a.grad.row_span(r);
                    for (int c = 0; c < a_cols; ++c) ga[c] += gr[c];
                }
                if (b.requires_grad) {
                    auto gb = b.grad.row_span(r);
                    for (int c = 0; c < b_cols; ++c) gb[c] += gr[a_cols + c];
                }
            }
            break;
        }
        case OpKind::stack_rows: {
            int r = 0;
            for (std::int32_t k = 0; k < n.extra_count; ++k) {
                Node& a = nodes_[extra_inputs_[n.extra_begin + k]];
                if (a.requires_grad) {
                    const double* src = g.data().data() + static_cast<std::size_t>(r) * g.cols();
                    for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += src[i];
                }
                r += val(a).rows();
            }
            break;
        }
        case OpKind::slice_rows: {
            Node& a = nodes_[n.in[0]];
            if (a.requires_grad) {
                double* dst = a.grad.data().data() + static_cast<std::size_t>(n.arg0) * a.grad.cols();
                for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
            }
            break;
        }
        case OpKind::reshape: {
            Node& a = nodes_[n.in[0]];
            if (a.requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i];
            break;
        }
        case OpKind::sum: {
            Node& a = nodes_[n.in[0]];
            if (a.requires_grad) {
                const double gv = g[0];
                for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += gv;
            }
            break;
        }
    }
}

}  // namespace afalab
