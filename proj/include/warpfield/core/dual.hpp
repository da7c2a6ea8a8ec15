#pragma once

#include "tape.hpp"

namespace warpfield {

// Forward-mode pair (value, directional derivative) over plain tensors.
struct DualTensor {
    Tensor v, d;
};

inline DualTensor dual_const(Tensor v) {
    Tensor d(v.rows(), v.cols());
    return {std::move(v), std::move(d)};
}
inline DualTensor dual_seed(Tensor v, Tensor tangent) { return {std::move(v), std::move(tangent)}; }

// Forward-mode pair recorded on a reverse tape. The tangent is itself a Var,
// so a scalar built from it can be backpropagated to the parameters in a
// single reverse sweep (no second-order tape needed).
struct DualVar {
    Var v, d;
};

inline DualVar dual_const(Var v) {
    Var d = v.tape->constant(Tensor(v.rows(), v.cols()));
    return {v, d};
}
inline DualVar dual_seed(Var v, Var tangent) { return {v, tangent}; }

namespace dualops {

inline DualTensor matmul(const DualTensor& x, const Tensor& w) {
    return {warpfield::matmul(x.v, w), warpfield::matmul(x.d, w)};
}
inline DualVar matmul(const DualVar& x, Var w) {
    return {warpfield::matmul(x.v, w), warpfield::matmul(x.d, w)};
}

inline DualTensor add_bias(const DualTensor& x, const Tensor& b) {
    return {x.v + broadcast_rows(b, x.v.rows()), x.d};
}
inline DualVar add_bias(const DualVar& x, Var b) {
    return {add(x.v, broadcast_rows(b, x.v.rows())), x.d};
}

inline DualTensor relu(const DualTensor& x) {
    DualTensor out;
    out.v = warpfield::relu(x.v);
    out.d = map_binary(x.d, x.v, [](double t, double v) { return v > 0 ? t : 0.0; });
    return out;
}
inline DualVar relu(const DualVar& x) {
    Tensor mask = map_unary(x.v.val(), [](double v) { return v > 0 ? 1.0 : 0.0; });
    return {vrelu(x.v), mul(x.d, x.v.tape->constant(std::move(mask)))};
}

inline DualTensor tanh(const DualTensor& x) {
    DualTensor out;
    out.v = tanh_t(x.v);
    out.d = map_binary(x.d, out.v, [](double t, double y) { return t * (1.0 - y * y); });
    return out;
}
inline DualVar tanh(const DualVar& x) {
    Var y = vtanh(x.v);
    Var one_minus_y2 = shift(scale(mul(y, y), -1.0), 1.0);
    return {y, mul(x.d, one_minus_y2)};
}

inline DualTensor mul(const DualTensor& a, const DualTensor& b) {
    return {a.v * b.v, a.d * b.v + a.v * b.d};
}
inline DualVar mul(const DualVar& a, const DualVar& b) {
    return {warpfield::mul(a.v, b.v), add(warpfield::mul(a.d, b.v), warpfield::mul(a.v, b.d))};
}

inline DualTensor add(const DualTensor& a, const DualTensor& b) {
    return {a.v + b.v, a.d + b.d};
}
inline DualVar add(const DualVar& a, const DualVar& b) {
    return {warpfield::add(a.v, b.v), warpfield::add(a.d, b.d)};
}

inline DualTensor concat_cols(const DualTensor& a, const DualTensor& b) {
    return {warpfield::concat_cols(a.v, b.v), warpfield::concat_cols(a.d, b.d)};
}
inline DualVar concat_cols(const DualVar& a, const DualVar& b) {
    return {warpfield::concat_cols(a.v, b.v), warpfield::concat_cols(a.d, b.d)};
}

inline DualTensor scale(const DualTensor& a, double s) { return {a.v * s, a.d * s}; }
inline DualVar scale(const DualVar& a, double s) {
    return {warpfield::scale(a.v, s), warpfield::scale(a.d, s)};
}

inline DualTensor shift(const DualTensor& a, double s) { return {a.v + s, a.d}; }
inline DualVar shift(const DualVar& a, double s) { return {warpfield::shift(a.v, s), a.d}; }

inline DualTensor broadcast_cols(const DualTensor& a, int cols) {
    return {warpfield::broadcast_cols(a.v, cols), warpfield::broadcast_cols(a.d, cols)};
}
inline DualVar broadcast_cols(const DualVar& a, int cols) {
    return {warpfield::broadcast_cols(a.v, cols), warpfield::broadcast_cols(a.d, cols)};
}

} // namespace dualops

} // namespace warpfield
