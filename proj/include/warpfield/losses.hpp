#pragma once

#include <cmath>

#include "core/tape.hpp"

namespace warpfield {

struct LossWeights {
    double rigidity = 0.003;
    double offsets = 600.0;
    double divergence = 3.0;

    void validate() const {
        if (rigidity < 0 || offsets < 0 || divergence < 0)
            throw UsageError("loss weights must be nonnegative");
    }
};

struct TrainSchedule {
    double base_lr = 5e-4;
    double lr_decay_fraction = 0.1; // lr reaches this fraction of base ...
    int lr_decay_horizon = 250000;  // ... after this many iterations
    bool warmup = true;
    int warmup_span = 1000;
    double warmup_start = 0.05; // warm-up begins at this fraction of the scheduled lr
    double weight_ramp_start = 0.01; // loss weights begin at this fraction of full
    int total_iterations = 100000;
    int batch_rays = 1024;

    void validate() const {
        if (base_lr <= 0) throw UsageError("schedule: base learning rate must be positive");
        if (!(lr_decay_fraction > 0 && lr_decay_fraction <= 1))
            throw UsageError("schedule: lr decay fraction must lie in (0,1]");
        if (lr_decay_horizon < 1 || warmup_span < 1 || total_iterations < 1)
            throw UsageError("schedule: spans must be positive");
        if (!(weight_ramp_start > 0 && weight_ramp_start <= 1))
            throw UsageError("schedule: weight ramp start must lie in (0,1]");
        if (batch_rays < 1) throw UsageError("schedule: batch size must be positive");
    }
};

struct ScheduleState {
    double lr = 0;
    LossWeights weights;
};

// lr decays geometrically toward lr_decay_fraction over the horizon, with an
// optional linear warm-up over the first warmup_span iterations; loss weights
// ramp geometrically from weight_ramp_start of full to full over the whole run.
inline ScheduleState schedule_at(int iteration, const TrainSchedule& s, const LossWeights& full) {
    if (iteration < 0) throw UsageError("schedule_at: negative iteration");
    ScheduleState out;
    out.lr = s.base_lr * std::pow(s.lr_decay_fraction, double(iteration) / double(s.lr_decay_horizon));
    if (s.warmup && iteration < s.warmup_span)
        out.lr *= s.warmup_start + (1.0 - s.warmup_start) * double(iteration) / double(s.warmup_span);
    double t = std::min(1.0, double(iteration) / double(s.total_iterations));
    double ramp = std::pow(s.weight_ramp_start, 1.0 - t);
    out.weights.rigidity = full.rigidity * ramp;
    out.weights.offsets = full.offsets * ramp;
    out.weights.divergence = full.divergence * ramp;
    return out;
}

// ---------------------------------------------------------------------------
// Loss terms, assembled from tape primitives. Sample-indexed inputs are
// [N,·] with N = rays * coarse samples; alpha and occupancy arrive as plain
// tensors because gradients must not flow into them.
// ---------------------------------------------------------------------------

// mean over the batch of |c_coarse - truth|^2 + |c_fine - truth|^2
inline Var data_loss(Var coarse_rgb, Var fine_rgb, const Tensor& truth) {
    if (!coarse_rgb.val().same_shape(truth) || !fine_rgb.val().same_shape(truth))
        throw UsageError("data_loss: prediction/truth shape mismatch");
    Tape& tape = *coarse_rgb.tape;
    Var gt = tape.constant(truth);
    Var dc = sub(coarse_rgb, gt);
    Var df = sub(fine_rgb, gt);
    Var sq = add(sum(mul(dc, dc)), sum(mul(df, df)));
    return scale(sq, 1.0 / double(truth.rows()));
}

namespace detail {
constexpr double kNormSquareFloor = 1e-18; // keeps sqrt differentiable at 0 with zero gradient
constexpr double kNormLogFloor = 1e-9;     // keeps log finite at zero norm

// ||rows||^(2-w) elementwise over [N,3] offsets, exponent per point
inline Var blended_norm_power(Var offsets, Var w_exponent) {
    Tape& tape = *offsets.tape;
    Var sumsq = matmul(mul(offsets, offsets), tape.constant(Tensor::full(3, 1, 1.0)));
    Var norm = vsqrt(shift(sumsq, kNormSquareFloor));
    Var expo = shift(scale(w_exponent, -1.0), 2.0);
    return vexp(mul(expo, vlog(shift(norm, kNormLogFloor))));
}
} // namespace detail

// (1/N) sum_j alpha_j ( ||b'_j||^(2 - w(bent_j)) + omega_rigidity * w(straight_j) )
inline Var offsets_loss(Var raw_offsets, Var w_exponent, Var w_penalty, const Tensor& alpha,
                        double omega_rigidity) {
    if (alpha.rows() != raw_offsets.rows() || alpha.cols() != 1)
        throw UsageError("offsets_loss: alpha must be [N,1]");
    Tape& tape = *raw_offsets.tape;
    Var term = add(detail::blended_norm_power(raw_offsets, w_exponent),
                   scale(w_penalty, omega_rigidity));
    return mean(mul(tape.constant(alpha), term));
}

// ablation variant penalizing the gated offsets, no rigidity penalty term
inline Var naive_offsets_loss(Var gated_offsets, Var w_exponent, const Tensor& alpha) {
    if (alpha.rows() != gated_offsets.rows() || alpha.cols() != 1)
        throw UsageError("naive_offsets_loss: alpha must be [N,1]");
    Tape& tape = *gated_offsets.tape;
    return mean(mul(tape.constant(alpha), detail::blended_norm_power(gated_offsets, w_exponent)));
}

// (1/N) sum_j occupancy_j * |div b|^2 with occupancy detached
inline Var divergence_loss(Var divergence, const Tensor& occupancy) {
    if (!divergence.val().same_shape(occupancy) || occupancy.cols() != 1)
        throw UsageError("divergence_loss: divergence/occupancy must both be [N,1]");
    Tape& tape = *divergence.tape;
    return mean(mul(tape.constant(occupancy), mul(divergence, divergence)));
}

inline Var total_loss(Var data, Var offsets, Var divergence, const LossWeights& w) {
    return add(data, add(scale(offsets, w.offsets), scale(divergence, w.divergence)));
}

} // namespace warpfield
