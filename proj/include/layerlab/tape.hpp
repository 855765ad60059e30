// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "layerlab/tensor.hpp"

namespace layerlab {

using GradMap = std::map<std::string, Tensor>;

// Reverse-mode autodiff tape over Tensor-level operations. Nodes are appended
// in topological order (parents always precede children, so the tape is
// acyclic by construction) and backward() replays them exactly once in
// reverse. A tape is single-threaded; parallelism lives inside the kernels.
class Tape {
  public:
    using NodeId = int;

    enum class Op : unsigned char {
        Leaf, Const, Add, Sub, Mul, Lincomb, Scale, Matmul, AddRowvec,
        Tanh, Exp, Sqrt, Clip, Min, Sum, Mean, RowSum, SubScalar, DivScalar,
        RowScale, GaussRowLogPdf, ConcatCols, ColsSlice,
    };

    // Tracked parameter. Every leaf appears in the backward() result, with a
    // zero gradient if the root does not depend on it.
    NodeId leaf(Tensor value, std::string name);
    NodeId constant(Tensor value);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    // ca*a + cb*b
    NodeId lincomb(NodeId a, double ca, NodeId b, double cb);
    NodeId scale(NodeId a, double c);
    // a [m x k] times b ([k x n], or stored [n x k] when trans_b)
    NodeId matmul(NodeId a, NodeId b, bool trans_b = false);
    NodeId add_rowvec(NodeId a, NodeId v);
    NodeId tanh(NodeId a);
    NodeId exp(NodeId a);
    NodeId sqrt(NodeId a);
    NodeId clip(NodeId a, double lo, double hi);
    NodeId min(NodeId a, NodeId b);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId row_sum(NodeId a);
    NodeId sub_scalar(NodeId v, NodeId s);
    NodeId div_scalar(NodeId v, NodeId s);
    // value[i,j] = a[i,j] * s[i]; the row scale is an observation (no grad).
    NodeId row_scale(NodeId a, NodeId s);
    // Per-row Gaussian transition log-density over the first cols_used
    // columns; x_next is observed data, gradients flow into mu only.
    NodeId gauss_row_logpdf(NodeId x_next, NodeId mu, double s, int cols_used);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId cols_slice(NodeId a, int cols_used);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // d(root)/d(leaf) for every registered leaf. root must be scalar.
    // Repeated calls on the same tape produce identical results.
    GradMap backward(NodeId root);

    static const char* op_name(Op op);

  private:
    struct Node {
        Op op;
        std::array<NodeId, 2> parent{-1, -1};
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        double aux0 = 0.0, aux1 = 0.0;
        int iaux = 0;
        bool requires_grad = false;
        std::string name;  // leaves only
    };

    NodeId push(Node n);
    NodeId unary(Op op, NodeId a, Tensor value, double aux0 = 0.0,
                 double aux1 = 0.0, int iaux = 0);
    NodeId binary(Op op, NodeId a, NodeId b, Tensor value, double aux0 = 0.0,
                  double aux1 = 0.0, int iaux = 0);
    Tensor& grad_buffer(NodeId id);
    void backward_node(NodeId id);

    std::vector<Node> nodes_;
    std::vector<NodeId> leaves_;
};

}  // namespace layerlab
