#pragma once

#include "core/tape.hpp"
#include "core/tensor.hpp"

namespace warpfield {

// Per-ray quadrature outputs. Invariant: sum_j weights[r,j] + residual[r] = 1.
struct RenderOutput {
    Tensor rgb;      // [R,3]
    Tensor trans;    // [R,S] transmittance T_j before sample j
    Tensor occ;      // [R,S] occupancy o_j = 1 - exp(-sigma_j * delta_j)
    Tensor weights;  // [R,S] T_j * o_j
    Tensor residual; // [R,1] transmittance past the far plane
};

inline void composite_validate(const Tensor& colors, const Tensor& sigma, const Tensor& deltas) {
    if (!sigma.same_shape(deltas)) throw UsageError("composite: sigma/delta shape mismatch");
    if (colors.cols() != 3 || colors.rows() != sigma.rows() * sigma.cols())
        throw UsageError("composite: colors must be [R*S,3]");
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        if (sigma[i] < 0) throw NumericError("composite: negative density");
        if (!(deltas[i] > 0)) throw NumericError("composite: non-positive interval length");
    }
}

inline RenderOutput composite(const Tensor& colors, const Tensor& sigma, const Tensor& deltas) {
    composite_validate(colors, sigma, deltas);
    int R = sigma.rows(), S = sigma.cols();
    RenderOutput out;
    out.rgb = Tensor(R, 3);
    out.trans = Tensor(R, S);
    out.occ = Tensor(R, S);
    out.weights = Tensor(R, S);
    out.residual = Tensor(R, 1);
    for (int r = 0; r < R; ++r) {
        double acc = 0; // exclusive running sum of sigma*delta
        for (int j = 0; j < S; ++j) {
            double sd = sigma.at(r, j) * deltas.at(r, j);
            double T = std::exp(-acc);
            double o = 1.0 - std::exp(-sd);
            double w = T * o;
            out.trans.at(r, j) = T;
            out.occ.at(r, j) = o;
            out.weights.at(r, j) = w;
            for (int c = 0; c < 3; ++c) out.rgb.at(r, c) += w * colors.at(r * S + j, c);
            acc += sd;
        }
        out.residual.at(r, 0) = std::exp(-acc);
    }
    return out;
}

struct TapeRenderOutput {
    Var rgb, trans, occ, weights, residual;
};

namespace detail {
// strictly-upper-triangular ones: (sd * U)[r,j] = sum_{k<j} sd[r,k]
inline Tensor exclusive_sum_matrix(int s) {
    Tensor u(s, s);
    for (int k = 0; k < s; ++k)
        for (int j = k + 1; j < s; ++j) u.at(k, j) = 1.0;
    return u;
}
// [S*3,3] selector turning a [R,S*3] row of per-sample weighted colors into
// per-channel sums
inline Tensor channel_sum_matrix(int s) {
    Tensor p(s * 3, 3);
    for (int j = 0; j < s; ++j)
        for (int c = 0; c < 3; ++c) p.at(j * 3 + c, c) = 1.0;
    return p;
}
} // namespace detail

// Same quadrature expressed in tape primitives: T_j = exp(-sum_{k<j} sigma_k
// delta_k) via a constant triangular matmul. Values match composite() up to
// rounding (identical in exact arithmetic).
inline TapeRenderOutput composite_tape(Var colors, Var sigma, const Tensor& deltas) {
    composite_validate(colors.val(), sigma.val(), deltas);
    Tape& tape = *sigma.tape;
    int R = sigma.rows(), S = sigma.cols();

    Var delta_c = tape.constant(deltas);
    Var sd = mul(sigma, delta_c);                                      // [R,S]
    Var excl = matmul(sd, tape.constant(detail::exclusive_sum_matrix(S))); // [R,S]
    Var trans = vexp(scale(excl, -1.0));
    Var occ = shift(scale(vexp(scale(sd, -1.0)), -1.0), 1.0);
    Var weights = mul(trans, occ);

    Var total = matmul(sd, tape.constant(Tensor::full(S, 1, 1.0))); // [R,1]
    Var residual = vexp(scale(total, -1.0));

    Var wc = mul(broadcast_cols(reshape(weights, R * S, 1), 3), colors); // [R*S,3]
    Var rgb = matmul(reshape(wc, R, S * 3), tape.constant(detail::channel_sum_matrix(S)));

    return {rgb, trans, occ, weights, residual};
}

} // namespace warpfield
