#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace warpfield {

enum class Op : std::uint8_t {
    leaf,
    add,
    sub,
    mul,
    divide,
    matmul,
    sum_all,
    mean_all,
    broadcast_cols,
    broadcast_rows,
    concat_cols,
    concat_rows,
    slice_cols,
    slice_rows,
    reshape,
    pow_const,
    pow_var,
    exp_,
    log_,
    sin_,
    cos_,
    tanh_,
    softplus_,
    relu_,
    abs_,
    sqrt_,
    clamp_,
    scale,
    shift,
    detach_,
};

inline const char* op_name(Op op) {
    switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::divide: return "divide";
    case Op::matmul: return "matmul";
    case Op::sum_all: return "sum";
    case Op::mean_all: return "mean";
    case Op::broadcast_cols: return "broadcast_cols";
    case Op::broadcast_rows: return "broadcast_rows";
    case Op::concat_cols: return "concat_cols";
    case Op::concat_rows: return "concat_rows";
    case Op::slice_cols: return "slice_cols";
    case Op::slice_rows: return "slice_rows";
    case Op::reshape: return "reshape";
    case Op::pow_const: return "pow_const";
    case Op::pow_var: return "pow_var";
    case Op::exp_: return "exp";
    case Op::log_: return "log";
    case Op::sin_: return "sin";
    case Op::cos_: return "cos";
    case Op::tanh_: return "tanh";
    case Op::softplus_: return "softplus";
    case Op::relu_: return "relu";
    case Op::abs_: return "abs";
    case Op::sqrt_: return "sqrt";
    case Op::clamp_: return "clamp";
    case Op::scale: return "scale";
    case Op::shift: return "shift";
    case Op::detach_: return "detach";
    }
    return "?";
}

class Tape;

// Lightweight handle into a tape node.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
    int rows() const { return val().rows(); }
    int cols() const { return val().cols(); }
};

struct Node {
    Op op = Op::leaf;
    int a = -1, b = -1;
    int i0 = 0, i1 = 0;
    double p0 = 0, p1 = 0;
    bool requires_grad = false;
    Tensor val;
};

// Gradients of requires-grad leaves after a backward sweep, keyed by node id.
class GradientMap {
public:
    bool has(Var v) const { return g_.count(v.id) != 0; }
    // Zero tensor of the leaf's shape when the leaf never received a gradient.
    Tensor grad(Var v) const {
        auto it = g_.find(v.id);
        if (it != g_.end()) return it->second;
        return Tensor(v.rows(), v.cols());
    }
    void set(int id, Tensor g) { g_[id] = std::move(g); }
    std::size_t entries() const { return g_.size(); }

private:
    std::unordered_map<int, Tensor> g_;
};

// Eager reverse-mode tape. Ops append nodes with realized values; backward
// walks ids in reverse (construction order is already topological).
class Tape {
public:
    Var leaf(Tensor value, bool requires_grad = false) {
        Node n;
        n.op = Op::leaf;
        n.requires_grad = requires_grad;
        n.val = std::move(value);
        return push(std::move(n));
    }
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var scalar(double value) { return constant(Tensor::scalar(value)); }

    const Node& node(int id) const { return nodes_[std::size_t(id)]; }
    int size() const { return int(nodes_.size()); }
    void clear() { nodes_.clear(); }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{this, int(nodes_.size()) - 1};
    }

    GradientMap backward(Var loss) const;

private:
    std::vector<Node> nodes_;
};

inline const Tensor& Var::val() const { return tape->node(id).val; }

namespace detail {

inline void check_same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw NumericError(std::string(op) + ": operands live on different tapes");
}

inline Var unary(Var a, Op op, Tensor value, double p0 = 0, double p1 = 0) {
    Node n;
    n.op = op;
    n.a = a.id;
    n.p0 = p0;
    n.p1 = p1;
    n.requires_grad = a.tape->node(a.id).requires_grad;
    n.val = std::move(value);
    return a.tape->push(std::move(n));
}

inline Var binary(Var a, Var b, Op op, Tensor value) {
    check_same_tape(a, b, op_name(op));
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = a.tape->node(a.id).requires_grad || b.tape->node(b.id).requires_grad;
    n.val = std::move(value);
    return a.tape->push(std::move(n));
}

inline void add_inplace(Tensor& acc, const Tensor& g) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

} // namespace detail

inline Var add(Var a, Var b) { return detail::binary(a, b, Op::add, a.val() + b.val()); }
inline Var sub(Var a, Var b) { return detail::binary(a, b, Op::sub, a.val() - b.val()); }
inline Var mul(Var a, Var b) { return detail::binary(a, b, Op::mul, a.val() * b.val()); }

inline Var divide(Var a, Var b) {
    for (std::size_t i = 0; i < b.val().size(); ++i)
        if (b.val()[i] == 0.0) throw NumericError("divide: division by exact zero");
    return detail::binary(a, b, Op::divide, a.val() / b.val());
}

inline Var matmul(Var a, Var b) { return detail::binary(a, b, Op::matmul, matmul(a.val(), b.val())); }

inline Var sum(Var a) { return detail::unary(a, Op::sum_all, Tensor::scalar(sum(a.val()))); }
inline Var mean(Var a) { return detail::unary(a, Op::mean_all, Tensor::scalar(mean(a.val()))); }

inline Var broadcast_cols(Var a, int cols) {
    Var v = detail::unary(a, Op::broadcast_cols, broadcast_cols(a.val(), cols));
    return v;
}
inline Var broadcast_rows(Var a, int rows) {
    return detail::unary(a, Op::broadcast_rows, broadcast_rows(a.val(), rows));
}

inline Var concat_cols(Var a, Var b) {
    return detail::binary(a, b, Op::concat_cols, concat_cols(a.val(), b.val()));
}
inline Var concat_rows(Var a, Var b) {
    return detail::binary(a, b, Op::concat_rows, concat_rows(a.val(), b.val()));
}

inline Var slice_cols(Var a, int c0, int c1) {
    Var v = detail::unary(a, Op::slice_cols, slice_cols(a.val(), c0, c1));
    Node& n = const_cast<Node&>(v.tape->node(v.id));
    n.i0 = c0;
    n.i1 = c1;
    return v;
}
inline Var slice_rows(Var a, int r0, int r1) {
    Var v = detail::unary(a, Op::slice_rows, slice_rows(a.val(), r0, r1));
    Node& n = const_cast<Node&>(v.tape->node(v.id));
    n.i0 = r0;
    n.i1 = r1;
    return v;
}
inline Var reshape(Var a, int rows, int cols) {
    return detail::unary(a, Op::reshape, reshape(a.val(), rows, cols));
}

inline Var pow_const(Var a, double p) {
    bool integral = p == std::floor(p);
    for (std::size_t i = 0; i < a.val().size(); ++i) {
        double x = a.val()[i];
        if (x < 0 && !integral) throw NumericError("pow_const: negative base with fractional exponent");
    }
    return detail::unary(a, Op::pow_const, map_unary(a.val(), [p](double x) { return std::pow(x, p); }),
                         p);
}
inline Var pow_var(Var a, Var e) {
    for (std::size_t i = 0; i < a.val().size(); ++i)
        if (a.val()[i] <= 0.0) throw NumericError("pow_var: non-positive base");
    return detail::binary(a, e, Op::pow_var,
                          map_binary(a.val(), e.val(), [](double x, double p) { return std::pow(x, p); }));
}

inline Var vexp(Var a) { return detail::unary(a, Op::exp_, exp_t(a.val())); }
inline Var vlog(Var a) {
    for (std::size_t i = 0; i < a.val().size(); ++i)
        if (a.val()[i] <= 0.0) throw NumericError("log: non-positive argument");
    return detail::unary(a, Op::log_, map_unary(a.val(), [](double x) { return std::log(x); }));
}
inline Var vsin(Var a) {
    return detail::unary(a, Op::sin_, map_unary(a.val(), [](double x) { return std::sin(x); }));
}
inline Var vcos(Var a) {
    return detail::unary(a, Op::cos_, map_unary(a.val(), [](double x) { return std::cos(x); }));
}
inline Var vtanh(Var a) { return detail::unary(a, Op::tanh_, tanh_t(a.val())); }
inline Var vsoftplus(Var a) { return detail::unary(a, Op::softplus_, softplus(a.val())); }
inline Var vrelu(Var a) { return detail::unary(a, Op::relu_, relu(a.val())); }
inline Var vabs(Var a) { return detail::unary(a, Op::abs_, abs_t(a.val())); }
inline Var vsqrt(Var a) {
    for (std::size_t i = 0; i < a.val().size(); ++i)
        if (a.val()[i] < 0.0) throw NumericError("sqrt: negative argument");
    return detail::unary(a, Op::sqrt_, sqrt_t(a.val()));
}
inline Var vclamp(Var a, double lo, double hi) {
    return detail::unary(
        a, Op::clamp_, map_unary(a.val(), [lo, hi](double x) { return std::min(std::max(x, lo), hi); }),
        lo, hi);
}
inline Var scale(Var a, double s) { return detail::unary(a, Op::scale, a.val() * s, s); }
inline Var shift(Var a, double s) { return detail::unary(a, Op::shift, a.val() + s, s); }

// Value passes through, gradient does not. The node never requires grad.
inline Var detach(Var a) {
    Node n;
    n.op = Op::detach_;
    n.a = a.id;
    n.requires_grad = false;
    n.val = a.val();
    return a.tape->push(std::move(n));
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// logistic sigmoid composed from the primitive set
inline Var vsigmoid(Var a) { return shift(scale(vtanh(scale(a, 0.5)), 0.5), 0.5); }

inline GradientMap Tape::backward(Var loss) const {
    if (loss.tape != this) throw NumericError("backward: loss lives on another tape");
    const Node& ln = nodes_[std::size_t(loss.id)];
    if (ln.val.size() != 1) throw NumericError("backward: loss must be scalar, got [" +
                                               std::to_string(ln.val.rows()) + "x" +
                                               std::to_string(ln.val.cols()) + "]");
    if (!ln.val.all_finite()) throw NumericError("backward: loss value is not finite");

    std::vector<Tensor> adj(nodes_.size());
    std::vector<bool> seen(nodes_.size(), false);
    adj[std::size_t(loss.id)] = Tensor::scalar(1.0);
    seen[std::size_t(loss.id)] = true;

    // checked at production so the error names the primitive whose backward
    // rule misbehaved, not the node that happened to receive the result
    const char* producer = "loss";
    auto accum = [&](int id, Tensor g) {
        if (id < 0) return;
        if (!nodes_[std::size_t(id)].requires_grad) return;
        if (!g.all_finite())
            throw NumericError(std::string("backward: non-finite gradient produced by ") + producer);
        if (!seen[std::size_t(id)]) {
            adj[std::size_t(id)] = std::move(g);
            seen[std::size_t(id)] = true;
        } else {
            detail::add_inplace(adj[std::size_t(id)], g);
            if (!adj[std::size_t(id)].all_finite())
                throw NumericError(std::string("backward: gradient overflow accumulating ") + producer);
        }
    };

    for (int id = loss.id; id >= 0; --id) {
        if (!seen[std::size_t(id)]) continue;
        const Node& n = nodes_[std::size_t(id)];
        if (!n.requires_grad) continue;
        const Tensor& g = adj[std::size_t(id)];
        if (n.op == Op::leaf) continue;
        producer = op_name(n.op);

        const Tensor* av = n.a >= 0 ? &nodes_[std::size_t(n.a)].val : nullptr;
        const Tensor* bv = n.b >= 0 ? &nodes_[std::size_t(n.b)].val : nullptr;

        switch (n.op) {
        case Op::add:
            accum(n.a, g);
            accum(n.b, g);
            break;
        case Op::sub:
            accum(n.a, g);
            accum(n.b, -g);
            break;
        case Op::mul:
            accum(n.a, g * (*bv));
            accum(n.b, g * (*av));
            break;
        case Op::divide:
            accum(n.a, g / (*bv));
            accum(n.b, -(g * n.val / (*bv)));
            break;
        case Op::matmul: {
            if (n.a >= 0 && nodes_[std::size_t(n.a)].requires_grad) {
                Tensor da(av->rows(), av->cols());
                da.map().noalias() = g.map() * bv->map().transpose();
                accum(n.a, std::move(da));
            }
            if (n.b >= 0 && nodes_[std::size_t(n.b)].requires_grad) {
                Tensor db(bv->rows(), bv->cols());
                db.map().noalias() = av->map().transpose() * g.map();
                accum(n.b, std::move(db));
            }
            break;
        }
        case Op::sum_all:
            accum(n.a, Tensor::full(av->rows(), av->cols(), g.item()));
            break;
        case Op::mean_all:
            accum(n.a, Tensor::full(av->rows(), av->cols(), g.item() / double(av->size())));
            break;
        case Op::broadcast_cols:
            accum(n.a, row_sums(g));
            break;
        case Op::broadcast_rows: {
            Tensor da(1, av->cols());
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) da.at(0, c) += g.at(r, c);
            accum(n.a, std::move(da));
            break;
        }
        case Op::concat_cols:
            if (nodes_[std::size_t(n.a)].requires_grad) accum(n.a, slice_cols(g, 0, av->cols()));
            if (nodes_[std::size_t(n.b)].requires_grad)
                accum(n.b, slice_cols(g, av->cols(), g.cols()));
            break;
        case Op::concat_rows:
            if (nodes_[std::size_t(n.a)].requires_grad) accum(n.a, slice_rows(g, 0, av->rows()));
            if (nodes_[std::size_t(n.b)].requires_grad)
                accum(n.b, slice_rows(g, av->rows(), g.rows()));
            break;
        case Op::slice_cols: {
            Tensor da(av->rows(), av->cols());
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) da.at(r, n.i0 + c) = g.at(r, c);
            accum(n.a, std::move(da));
            break;
        }
        case Op::slice_rows: {
            Tensor da(av->rows(), av->cols());
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) da.at(n.i0 + r, c) = g.at(r, c);
            accum(n.a, std::move(da));
            break;
        }
        case Op::reshape:
            accum(n.a, reshape(g, av->rows(), av->cols()));
            break;
        case Op::pow_const: {
            double p = n.p0;
            accum(n.a, map_binary(g, *av, [p](double gg, double x) {
                      return gg * p * std::pow(x, p - 1.0);
                  }));
            break;
        }
        case Op::pow_var:
            if (nodes_[std::size_t(n.a)].requires_grad) {
                Tensor da(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.size(); ++i)
                    da[i] = g[i] * (*bv)[i] * std::pow((*av)[i], (*bv)[i] - 1.0);
                accum(n.a, std::move(da));
            }
            if (nodes_[std::size_t(n.b)].requires_grad) {
                Tensor db(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.size(); ++i)
                    db[i] = g[i] * n.val[i] * std::log((*av)[i]);
                accum(n.b, std::move(db));
            }
            break;
        case Op::exp_:
            accum(n.a, g * n.val);
            break;
        case Op::log_:
            accum(n.a, g / (*av));
            break;
        case Op::sin_:
            accum(n.a, map_binary(g, *av, [](double gg, double x) { return gg * std::cos(x); }));
            break;
        case Op::cos_:
            accum(n.a, map_binary(g, *av, [](double gg, double x) { return -gg * std::sin(x); }));
            break;
        case Op::tanh_:
            accum(n.a, map_binary(g, n.val, [](double gg, double y) { return gg * (1.0 - y * y); }));
            break;
        case Op::softplus_:
            accum(n.a, map_binary(g, *av, [](double gg, double x) { return gg * logistic_s(x); }));
            break;
        case Op::relu_:
            accum(n.a, map_binary(g, *av, [](double gg, double x) { return x > 0 ? gg : 0.0; }));
            break;
        case Op::abs_:
            accum(n.a, map_binary(g, *av, [](double gg, double x) {
                      return x > 0 ? gg : (x < 0 ? -gg : 0.0);
                  }));
            break;
        case Op::sqrt_:
            accum(n.a, map_binary(g, n.val, [](double gg, double y) { return gg * 0.5 / y; }));
            break;
        case Op::clamp_: {
            double lo = n.p0, hi = n.p1;
            accum(n.a, map_binary(g, *av, [lo, hi](double gg, double x) {
                      return (x > lo && x < hi) ? gg : 0.0;
                  }));
            break;
        }
        case Op::scale:
            accum(n.a, g * n.p0);
            break;
        case Op::shift:
            accum(n.a, g);
            break;
        case Op::leaf:
        case Op::detach_:
            break;
        }
    }

    GradientMap gm;
    for (int id = 0; id <= loss.id; ++id) {
        const Node& n = nodes_[std::size_t(id)];
        if (n.op == Op::leaf && n.requires_grad && seen[std::size_t(id)])
            gm.set(id, std::move(adj[std::size_t(id)]));
    }
    return gm;
}

} // namespace warpfield
