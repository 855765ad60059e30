// SPDX-License-Identifier: Apache-2.0
#include "layerlab/tape.hpp"

#include <cmath>

#include "layerlab/common.hpp"
#include "layerlab/kernels.hpp"

namespace layerlab {

namespace k = kernels;

const char* Tape::op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Const: return "const";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Lincomb: return "lincomb";
        case Op::Scale: return "scale";
        case Op::Matmul: return "matmul";
        case Op::AddRowvec: return "add_rowvec";
        case Op::Tanh: return "tanh";
        case Op::Exp: return "exp";
        case Op::Sqrt: return "sqrt";
        case Op::Clip: return "clip";
        case Op::Min: return "min";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::RowSum: return "row_sum";
        case Op::SubScalar: return "sub_scalar";
        case Op::DivScalar: return "div_scalar";
        case Op::RowScale: return "row_scale";
        case Op::GaussRowLogPdf: return "gauss_row_logpdf";
        case Op::ConcatCols: return "concat_cols";
        case Op::ColsSlice: return "cols_slice";
    }
    return "?";
}

Tape::NodeId Tape::push(Node n) {
    n.value.check_finite(op_name(n.op));
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(Tensor value, std::string name) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = true;
    n.name = std::move(name);
    NodeId id = push(std::move(n));
    leaves_.push_back(id);
    return id;
}

Tape::NodeId Tape::constant(Tensor value) {
    Node n;
    n.op = Op::Const;
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::NodeId Tape::unary(Op op, NodeId a, Tensor value, double aux0,
                         double aux1, int iaux) {
    Node n;
    n.op = op;
    n.parent[0] = a;
    n.value = std::move(value);
    n.aux0 = aux0;
    n.aux1 = aux1;
    n.iaux = iaux;
    n.requires_grad = nodes_[a].requires_grad;
    return push(std::move(n));
}

Tape::NodeId Tape::binary(Op op, NodeId a, NodeId b, Tensor value, double aux0,
                          double aux1, int iaux) {
    Node n;
    n.op = op;
    n.parent[0] = a;
    n.parent[1] = b;
    n.value = std::move(value);
    n.aux0 = aux0;
    n.aux1 = aux1;
    n.iaux = iaux;
    n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
    return push(std::move(n));
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw NumericError(strfmt("%s: shape mismatch %s vs %s", op,
                                  a.shape_str().c_str(), b.shape_str().c_str()));
}

}  // namespace

Tape::NodeId Tape::add(NodeId a, NodeId b) { return lincomb(a, 1.0, b, 1.0); }

Tape::NodeId Tape::sub(NodeId a, NodeId b) { return lincomb(a, 1.0, b, -1.0); }

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    require_same_shape(va, vb, "mul");
    Tensor out = Tensor::zeros(va.shape);
    k::vmul(va.numel(), va.data.data(), vb.data.data(), out.data.data());
    return binary(Op::Mul, a, b, std::move(out));
}

Tape::NodeId Tape::lincomb(NodeId a, double ca, NodeId b, double cb) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    require_same_shape(va, vb, "lincomb");
    Tensor out = Tensor::zeros(va.shape);
    k::lincomb(va.numel(), ca, va.data.data(), cb, vb.data.data(),
               out.data.data());
    return binary(Op::Lincomb, a, b, std::move(out), ca, cb);
}

Tape::NodeId Tape::scale(NodeId a, double c) {
    const Tensor& va = nodes_[a].value;
    Tensor out = Tensor::zeros(va.shape);
    k::vscale(va.numel(), c, va.data.data(), out.data.data());
    return unary(Op::Scale, a, std::move(out), c);
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b, bool trans_b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    const int m = va.rows(), kk = va.cols();
    const int n = trans_b ? vb.rows() : vb.cols();
    const int kb = trans_b ? vb.cols() : vb.rows();
    if (kk != kb)
        throw NumericError(strfmt("matmul: inner dims %d vs %d", kk, kb));
    Tensor out = Tensor::zeros({m, n});
    k::gemm(false, trans_b, m, n, kk, va.data.data(), vb.data.data(),
            out.data.data(), 0.0);
    return binary(Op::Matmul, a, b, std::move(out), 0.0, 0.0, trans_b ? 1 : 0);
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId v) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vv = nodes_[v].value;
    if (va.cols() != static_cast<int>(vv.numel()))
        throw NumericError("add_rowvec: vector length does not match columns");
    Tensor out = Tensor::zeros(va.shape);
    k::add_rowvec(va.rows(), va.cols(), va.data.data(), vv.data.data(),
                  out.data.data());
    return binary(Op::AddRowvec, a, v, std::move(out));
}

Tape::NodeId Tape::tanh(NodeId a) {
    const Tensor& va = nodes_[a].value;
    Tensor out = Tensor::zeros(va.shape);
    k::vtanh(va.numel(), va.data.data(), out.data.data());
    return unary(Op::Tanh, a, std::move(out));
}

Tape::NodeId Tape::exp(NodeId a) {
    const Tensor& va = nodes_[a].value;
    Tensor out = Tensor::zeros(va.shape);
    k::vexp(va.numel(), va.data.data(), out.data.data());
    return unary(Op::Exp, a, std::move(out));
}

Tape::NodeId Tape::sqrt(NodeId a) {
    const Tensor& va = nodes_[a].value;
    Tensor out = Tensor::zeros(va.shape);
    k::vsqrt(va.numel(), va.data.data(), out.data.data());
    return unary(Op::Sqrt, a, std::move(out));
}

Tape::NodeId Tape::clip(NodeId a, double lo, double hi) {
    const Tensor& va = nodes_[a].value;
    Tensor out = Tensor::zeros(va.shape);
    k::vclip(va.numel(), lo, hi, va.data.data(), out.data.data());
    return unary(Op::Clip, a, std::move(out), lo, hi);
}

Tape::NodeId Tape::min(NodeId a, NodeId b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    require_same_shape(va, vb, "min");
    Tensor out = Tensor::zeros(va.shape);
    k::vmin(va.numel(), va.data.data(), vb.data.data(), out.data.data());
    return binary(Op::Min, a, b, std::move(out));
}

Tape::NodeId Tape::sum(NodeId a) {
    const Tensor& va = nodes_[a].value;
    return unary(Op::Sum, a, Tensor::scalar(k::reduce_sum(va.numel(), va.data.data())));
}

Tape::NodeId Tape::mean(NodeId a) {
    const Tensor& va = nodes_[a].value;
    const double s = k::reduce_sum(va.numel(), va.data.data());
    return unary(Op::Mean, a, Tensor::scalar(s / static_cast<double>(va.numel())));
}

Tape::NodeId Tape::row_sum(NodeId a) {
    const Tensor& va = nodes_[a].value;
    Tensor out = Tensor::zeros({va.rows()});
    k::row_sum(va.rows(), va.cols(), va.data.data(), out.data.data());
    return unary(Op::RowSum, a, std::move(out));
}

Tape::NodeId Tape::sub_scalar(NodeId v, NodeId s) {
    const Tensor& vv = nodes_[v].value;
    const double sv = nodes_[s].value.item();
    Tensor out = Tensor::zeros(vv.shape);
    for (std::size_t i = 0; i < vv.numel(); ++i) out.data[i] = vv.data[i] - sv;
    return binary(Op::SubScalar, v, s, std::move(out));
}

Tape::NodeId Tape::div_scalar(NodeId v, NodeId s) {
    const Tensor& vv = nodes_[v].value;
    const double sv = nodes_[s].value.item();
    if (sv == 0.0) throw NumericError("div_scalar: division by zero");
    Tensor out = Tensor::zeros(vv.shape);
    for (std::size_t i = 0; i < vv.numel(); ++i) out.data[i] = vv.data[i] / sv;
    return binary(Op::DivScalar, v, s, std::move(out));
}

Tape::NodeId Tape::row_scale(NodeId a, NodeId s) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vs = nodes_[s].value;
    if (va.rows() != static_cast<int>(vs.numel()))
        throw NumericError("row_scale: scale length does not match rows");
    if (nodes_[s].requires_grad)
        throw NumericError("row_scale: scale must be an observation");
    const int m = va.rows(), n = va.cols();
    Tensor out = Tensor::zeros(va.shape);
    for (int i = 0; i < m; ++i)
        kernels::vscale(static_cast<std::size_t>(n), vs.data[i],
                        va.data.data() + static_cast<std::size_t>(i) * n,
                        out.data.data() + static_cast<std::size_t>(i) * n);
    return binary(Op::RowScale, a, s, std::move(out));
}

Tape::NodeId Tape::gauss_row_logpdf(NodeId x_next, NodeId mu, double s,
                                    int cols_used) {
    const Tensor& vx = nodes_[x_next].value;
    const Tensor& vm = nodes_[mu].value;
    require_same_shape(vx, vm, "gauss_row_logpdf");
    if (s <= 0.0) throw NumericError("gauss_row_logpdf: scale must be positive");
    if (nodes_[x_next].requires_grad)
        throw NumericError("gauss_row_logpdf: x_next must be an observation");
    const int m = vx.rows(), n = vx.cols();
    if (cols_used < 1 || cols_used > n)
        throw NumericError("gauss_row_logpdf: bad cols_used");
    Tensor out = Tensor::zeros({m});
    k::gauss_logpdf_rows(m, n, cols_used, vx.data.data(), vm.data.data(), s,
                         out.data.data());
    return binary(Op::GaussRowLogPdf, x_next, mu, std::move(out), s, 0.0,
                  cols_used);
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    if (va.rows() != vb.rows())
        throw NumericError("concat_cols: row counts differ");
    const int m = va.rows(), na = va.cols(), nb = vb.cols();
    Tensor out = Tensor::zeros({m, na + nb});
    for (int i = 0; i < m; ++i) {
        double* orow = out.data.data() + static_cast<std::size_t>(i) * (na + nb);
        const double* arow = va.data.data() + static_cast<std::size_t>(i) * na;
        const double* brow = vb.data.data() + static_cast<std::size_t>(i) * nb;
        std::copy(arow, arow + na, orow);
        std::copy(brow, brow + nb, orow + na);
    }
    return binary(Op::ConcatCols, a, b, std::move(out), 0.0, 0.0, na);
}

Tape::NodeId Tape::cols_slice(NodeId a, int cols_used) {
    const Tensor& va = nodes_[a].value;
    const int m = va.rows(), n = va.cols();
    if (cols_used < 1 || cols_used > n)
        throw NumericError("cols_slice: bad column count");
    Tensor out = Tensor::zeros({m, cols_used});
    for (int i = 0; i < m; ++i) {
        const double* arow = va.data.data() + static_cast<std::size_t>(i) * n;
        std::copy(arow, arow + cols_used,
                  out.data.data() + static_cast<std::size_t>(i) * cols_used);
    }
    return unary(Op::ColsSlice, a, std::move(out), 0.0, 0.0, cols_used);
}

Tensor& Tape::grad_buffer(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

void Tape::backward_node(NodeId id) {
    Node& n = nodes_[id];
    const Tensor& g = n.grad;
    const NodeId pa = n.parent[0], pb = n.parent[1];
    auto wants = [&](NodeId p) {
        return p >= 0 && nodes_[p].requires_grad;
    };
    switch (n.op) {
        case Op::Leaf:
        case Op::Const:
            return;
        case Op::Add:
        case Op::Sub:
            return;  // expressed via Lincomb
        case Op::Mul: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                const Tensor& vb = nodes_[pb].value;
                for (std::size_t i = 0; i < g.numel(); ++i)
                    ga.data[i] += g.data[i] * vb.data[i];
            }
            if (wants(pb)) {
                Tensor& gb = grad_buffer(pb);
                const Tensor& va = nodes_[pa].value;
                for (std::size_t i = 0; i < g.numel(); ++i)
                    gb.data[i] += g.data[i] * va.data[i];
            }
            return;
        }
        case Op::Lincomb: {
            if (wants(pa))
                k::axpy(g.numel(), n.aux0, g.data.data(),
                        grad_buffer(pa).data.data());
            if (wants(pb))
                k::axpy(g.numel(), n.aux1, g.data.data(),
                        grad_buffer(pb).data.data());
            return;
        }
        case Op::Scale: {
            if (wants(pa))
                k::axpy(g.numel(), n.aux0, g.data.data(),
                        grad_buffer(pa).data.data());
            return;
        }
        case Op::Matmul: {
            const Tensor& va = nodes_[pa].value;
            const Tensor& vb = nodes_[pb].value;
            const bool tb = n.iaux != 0;
            const int m = va.rows(), kk = va.cols(), nn = n.value.cols();
            if (wants(pa)) {
                // gA = gC * Be^T
                k::gemm(false, !tb, m, kk, nn, g.data.data(), vb.data.data(),
                        grad_buffer(pa).data.data(), 1.0);
            }
            if (wants(pb)) {
                if (!tb) {
                    // gB [k x n] = A^T * gC
                    k::gemm(true, false, kk, nn, m, va.data.data(),
                            g.data.data(), grad_buffer(pb).data.data(), 1.0);
                } else {
                    // B stored [n x k]: gB = gC^T * A
                    k::gemm(true, false, nn, kk, m, g.data.data(),
                            va.data.data(), grad_buffer(pb).data.data(), 1.0);
                }
            }
            return;
        }
        case Op::AddRowvec: {
            if (wants(pa))
                k::axpy(g.numel(), 1.0, g.data.data(),
                        grad_buffer(pa).data.data());
            if (wants(pb)) {
                Tensor col = Tensor::zeros({n.value.cols()});
                k::col_sum(n.value.rows(), n.value.cols(), g.data.data(),
                           col.data.data());
                k::axpy(col.numel(), 1.0, col.data.data(),
                        grad_buffer(pb).data.data());
            }
            return;
        }
        case Op::Tanh: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    const double y = n.value.data[i];
                    ga.data[i] += g.data[i] * (1.0 - y * y);
                }
            }
            return;
        }
        case Op::Exp: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    ga.data[i] += g.data[i] * n.value.data[i];
            }
            return;
        }
        case Op::Sqrt: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    ga.data[i] += g.data[i] * 0.5 / n.value.data[i];
            }
            return;
        }
        case Op::Clip: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                const Tensor& va = nodes_[pa].value;
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    if (va.data[i] >= n.aux0 && va.data[i] <= n.aux1)
                        ga.data[i] += g.data[i];
                }
            }
            return;
        }
        case Op::Min: {
            const Tensor& va = nodes_[pa].value;
            const Tensor& vb = nodes_[pb].value;
            for (std::size_t i = 0; i < g.numel(); ++i) {
                if (va.data[i] <= vb.data[i]) {
                    if (wants(pa)) grad_buffer(pa).data[i] += g.data[i];
                } else {
                    if (wants(pb)) grad_buffer(pb).data[i] += g.data[i];
                }
            }
            return;
        }
        case Op::Sum: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                const double gv = g.data[0];
                for (double& v : ga.data) v += gv;
            }
            return;
        }
        case Op::Mean: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                const double gv = g.data[0] / static_cast<double>(ga.numel());
                for (double& v : ga.data) v += gv;
            }
            return;
        }
        case Op::RowSum: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                const int m = nodes_[pa].value.rows();
                const int nn = nodes_[pa].value.cols();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < nn; ++j)
                        ga.data[static_cast<std::size_t>(i) * nn + j] += g.data[i];
            }
            return;
        }
        case Op::SubScalar: {
            if (wants(pa))
                k::axpy(g.numel(), 1.0, g.data.data(),
                        grad_buffer(pa).data.data());
            if (wants(pb))
                grad_buffer(pb).data[0] -= k::reduce_sum(g.numel(), g.data.data());
            return;
        }
        case Op::DivScalar: {
            const double sv = nodes_[pb].value.item();
            if (wants(pa))
                k::axpy(g.numel(), 1.0 / sv, g.data.data(),
                        grad_buffer(pa).data.data());
            if (wants(pb)) {
                double acc = 0.0;
                for (std::size_t i = 0; i < g.numel(); ++i)
                    acc += g.data[i] * n.value.data[i];
                grad_buffer(pb).data[0] -= acc / sv;
            }
            return;
        }
        case Op::RowScale: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                const Tensor& vs = nodes_[pb].value;
                const int m = n.value.rows(), nn = n.value.cols();
                for (int i = 0; i < m; ++i)
                    k::axpy(static_cast<std::size_t>(nn), vs.data[i],
                            g.data.data() + static_cast<std::size_t>(i) * nn,
                            ga.data.data() + static_cast<std::size_t>(i) * nn);
            }
            return;
        }
        case Op::GaussRowLogPdf: {
            if (wants(pb)) {
                const Tensor& vx = nodes_[pa].value;
                const Tensor& vm = nodes_[pb].value;
                Tensor& gm = grad_buffer(pb);
                const double inv_var = 1.0 / (n.aux0 * n.aux0);
                const int m = vx.rows(), nn = vx.cols();
                for (int i = 0; i < m; ++i) {
                    const double gi = g.data[i];
                    const std::size_t off = static_cast<std::size_t>(i) * nn;
                    for (int d = 0; d < n.iaux; ++d)
                        gm.data[off + d] +=
                            gi * (vx.data[off + d] - vm.data[off + d]) * inv_var;
                }
            }
            return;
        }
        case Op::ConcatCols: {
            const int m = n.value.rows();
            const int na = n.iaux;
            const int nb = n.value.cols() - na;
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                for (int i = 0; i < m; ++i)
                    k::axpy(na, 1.0,
                            g.data.data() + static_cast<std::size_t>(i) * (na + nb),
                            ga.data.data() + static_cast<std::size_t>(i) * na);
            }
            if (wants(pb)) {
                Tensor& gb = grad_buffer(pb);
                for (int i = 0; i < m; ++i)
                    k::axpy(nb, 1.0,
                            g.data.data() + static_cast<std::size_t>(i) * (na + nb) + na,
                            gb.data.data() + static_cast<std::size_t>(i) * nb);
            }
            return;
        }
        case Op::ColsSlice: {
            if (wants(pa)) {
                Tensor& ga = grad_buffer(pa);
                const int m = n.value.rows(), nc = n.value.cols();
                const int np = nodes_[pa].value.cols();
                for (int i = 0; i < m; ++i)
                    k::axpy(nc, 1.0,
                            g.data.data() + static_cast<std::size_t>(i) * nc,
                            ga.data.data() + static_cast<std::size_t>(i) * np);
            }
            return;
        }
    }
}

GradMap Tape::backward(NodeId root) {
    if (root < 0 || root >= static_cast<NodeId>(nodes_.size()))
        throw NumericError("backward: bad root node");
    if (!nodes_[root].value.is_scalar())
        throw NumericError("backward: root must be scalar, got shape " +
                           nodes_[root].value.shape_str());
    for (Node& n : nodes_) n.grad = Tensor();

    GradMap grads;
    if (nodes_[root].requires_grad) {
        grad_buffer(root).data[0] = 1.0;
        for (NodeId id = root; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.requires_grad || n.grad.numel() == 0) continue;
            backward_node(id);
            for (NodeId p : n.parent) {
                if (p < 0 || !nodes_[p].requires_grad || nodes_[p].grad.numel() == 0)
                    continue;
                for (double v : nodes_[p].grad.data) {
                    if (std::isnan(v))
                        throw NumericError(
                            strfmt("backward: NaN produced by op %s", op_name(n.op)));
                }
            }
        }
    }
    for (NodeId id : leaves_) {
        const Node& n = nodes_[id];
        grads[n.name] = n.grad.numel() ? n.grad : Tensor::zeros(n.value.shape);
    }
    return grads;
}

}  // namespace layerlab
