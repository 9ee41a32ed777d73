#pragma once

#include "afalab/matrix.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace afalab {

enum class OpKind : std::uint8_t {
    leaf,
    matmul,
    transpose,
    add,
    mul,
    scale,
    relu,
    tanh_op,
    exp_op,
    ln,
    softmax_rows,
    concat_cols,
    stack_rows,
    slice_rows,
    reshape,
    sum,
};

using NodeId = std::int32_t;

/// Reverse-mode autodiff over dense matrices. Define-by-run: a tape is built
/// fresh for every forward pass and discarded after the update.
///
/// Node ids are topologically ordered by construction (inputs precede
/// outputs); backward() walks them in strict reverse creation order.
/// Gradient accumulators are re-zeroed at the start of every backward call,
/// so repeated calls on the same tape are bit-identical.
class Tape {
public:
    /// New input node. Gradients propagate into it only when requires_grad
    /// is set; constants (token grids, coordinate vectors) should pass false
    /// so backward skips whole subtrees that cannot reach a parameter.
    NodeId leaf(Matrix value, bool requires_grad = true);
    NodeId constant(Matrix value) { return leaf(std::move(value), false); }

    /// Non-owning constant. The referenced matrix must outlive the tape;
    /// training uses this to feed pre-rendered token grids without copying
    /// them into every step's tape.
    NodeId constant_ref(const Matrix& value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);  // Hadamard
    NodeId scale(NodeId a, double c);
    NodeId relu(NodeId a);
    NodeId tanh(NodeId a);
    NodeId exp(NodeId a);
    NodeId ln(NodeId a);  // domain error on nonpositive entries
    NodeId softmax_rows(NodeId a);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId stack_rows(std::span<const NodeId> parts);
    NodeId slice_rows(NodeId a, int row_begin, int row_count);
    NodeId reshape(NodeId a, int rows, int cols);
    NodeId sum(NodeId a);  // full reduction to 1x1

    /// Populates grad() of every node reachable from loss. loss must be 1x1.
    void backward(NodeId loss);

    /// References stay valid only until the next node is created.
    const Matrix& value(NodeId id) const {
        const Node& n = nodes_[id];
        return n.view ? *n.view : n.value;
    }
    /// Gradient accumulator; only allocated for requires_grad nodes.
    const Matrix& grad(NodeId id) const { return nodes_[id].grad; }
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        OpKind kind;
        bool requires_grad;
        std::array<NodeId, 2> in{-1, -1};
        std::int32_t extra_begin = 0;  // stack_rows input list
        std::int32_t extra_count = 0;
        double scalar = 0.0;  // scale factor
        int arg0 = 0, arg1 = 0;  // slice/reshape arguments
        const Matrix* view = nullptr;  // non-owning constant
        Matrix value;
        Matrix grad;
    };

    const Matrix& val(const Node& n) const { return n.view ? *n.view : n.value; }
    NodeId push(Node n);
    void backprop_node(NodeId id);

    std::vector<Node> nodes_;
    std::vector<NodeId> extra_inputs_;
};

}  // namespace afalab
