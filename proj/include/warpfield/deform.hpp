#pragma once

#include <functional>

#include "core/dual.hpp"
#include "fields.hpp"

namespace warpfield {

// Render/training-time modifiers of the bending pipeline.
struct BendOptions {
    double exaggeration = 1.0;   // m: bent = x + m * b
    double stabilize_r_min = 0;  // w := 0 where w < r_min (0 is a no-op)
    bool rigidity_enabled = true;
    bool bending_enabled = true;
};

struct BentSamples {
    Tensor bent;     // [N,3]
    Tensor raw;      // [N,3] ungated offsets b'
    Tensor rigidity; // [N,1] rendering-time w at the straight points
    Tensor gated;    // [N,3] b = w * b'
};

namespace detail {
inline void apply_stabilization(Tensor& w, double r_min) {
    if (r_min <= 0) return;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] < r_min) w[i] = 0.0;
}
} // namespace detail

inline BentSamples bend_points(const SceneModel& m, const Tensor& pts, const Tensor& latent,
                               const BendOptions& opt = {}) {
    if (pts.cols() != 3) throw UsageError("bend_points: points must be [N,3]");
    int n = pts.rows();
    BentSamples out;
    bool bending = opt.bending_enabled && m.cfg.bending_enabled && !m.cfg.naive_conditioning;
    bool rigidity = opt.rigidity_enabled && m.cfg.rigidity_enabled;

    out.rigidity = rigidity ? eval_rigidity(m, pts) : Tensor::full(n, 1, 1.0);
    detail::apply_stabilization(out.rigidity, opt.stabilize_r_min);

    if (!bending) {
        out.raw = Tensor(n, 3);
        out.gated = Tensor(n, 3);
        out.bent = pts;
        return out;
    }
    out.raw = eval_bending(m, pts, latent);
    out.gated = broadcast_cols(out.rigidity, 3) * out.raw;
    out.bent = (opt.exaggeration == 1.0) ? pts + out.gated : pts + out.gated * opt.exaggeration;
    return out;
}

// ---------------------------------------------------------------------------
// Divergence of a (gated) offset field, generic over the field so tests can
// feed analytic fields and the engine can feed the networks.
// ---------------------------------------------------------------------------

// maps a dual of straight points [N,3] to the dual of gated offsets b
using DualBendFn = std::function<DualTensor(const DualTensor&)>;

inline DualBendFn model_gated_bend_dual(const SceneModel& m, const Tensor& latent,
                                        const BendOptions& opt = {}) {
    return [&m, latent, opt](const DualTensor& x) -> DualTensor {
        int n = x.v.rows();
        bool bending = opt.bending_enabled && m.cfg.bending_enabled && !m.cfg.naive_conditioning;
        if (!bending) return dual_const(Tensor(n, 3));

        Tensor lat = latent_rows_for(m, latent, n);
        DualTensor input = dualops::concat_cols(x, dual_const(lat));
        DualTensor raw = bending_forward<DualPlainOps, Tensor>(m.bending, input);

        DualTensor w;
        if (opt.rigidity_enabled && m.cfg.rigidity_enabled) {
            w = rigidity_forward<DualPlainOps, Tensor>(m.rigidity, x);
            if (opt.stabilize_r_min > 0) {
                // overridden region is constant zero, so the tangent dies too
                for (int i = 0; i < n; ++i)
                    if (w.v.at(i, 0) < opt.stabilize_r_min) {
                        w.v.at(i, 0) = 0.0;
                        w.d.at(i, 0) = 0.0;
                    }
            }
        } else {
            w = dual_const(Tensor::full(n, 1, 1.0));
        }
        DualTensor gated = dualops::mul(dualops::broadcast_cols(w, 3), raw);
        if (opt.exaggeration != 1.0) gated = dualops::scale(gated, opt.exaggeration);
        return gated;
    };
}

// Hutchinson estimate of div b at each point: mean over K draws of
// e^T (db/dx) e with e standard normal.
inline Tensor divergence_hutchinson(const DualBendFn& field, const Tensor& pts, Rng& rng, int k) {
    if (k < 1) throw UsageError("divergence_hutchinson: K must be >= 1");
    int n = pts.rows();
    Tensor acc(n, 1);
    for (int draw = 0; draw < k; ++draw) {
        Tensor e = random_normal(n, 3, rng);
        DualTensor out = field(dual_seed(pts, e));
        for (int i = 0; i < n; ++i) {
            double s = 0;
            for (int c = 0; c < 3; ++c) s += e.at(i, c) * out.d.at(i, c);
            acc.at(i, 0) += s;
        }
    }
    return acc * (1.0 / double(k));
}

// Exact divergence via three jvp calls with basis tangents.
inline Tensor divergence_exact(const DualBendFn& field, const Tensor& pts) {
    int n = pts.rows();
    Tensor div(n, 1);
    for (int axis = 0; axis < 3; ++axis) {
        Tensor e(n, 3);
        for (int i = 0; i < n; ++i) e.at(i, axis) = 1.0;
        DualTensor out = field(dual_seed(pts, e));
        for (int i = 0; i < n; ++i) div.at(i, 0) += out.d.at(i, axis);
    }
    return div;
}

// ---------------------------------------------------------------------------
// On-tape bending for training. Values of the divergence pass share the
// forward subgraph; the tangent side rides the same tape so one backward
// sweep reaches the parameters.
// ---------------------------------------------------------------------------

struct TapeBentSamples {
    Var bent;     // [N,3]
    Var raw;      // [N,3]
    Var rigidity; // [N,1] at straight points
    Var gated;    // [N,3]
    Var divergence; // [N,1] when requested, else invalid
};

// pts are constants (sample placement carries no gradient); lat_rows is a
// tape expression [N,latent_dim] routing into the latent table; div_tangent,
// when non-null, requests a single-draw Hutchinson estimate with that e.
inline TapeBentSamples bend_points_tape(Tape& tape, const TapeModel& tm, const Tensor& pts,
                                        Var lat_rows, const Tensor* div_tangent,
                                        bool rigidity_enabled) {
    const SceneModel& m = *tm.source;
    int n = pts.rows();
    Var x = tape.constant(pts);
    TapeBentSamples out;

    if (div_tangent != nullptr) {
        Tensor tan_lat(n, m.cfg.latent_dim); // latent tangent is zero
        DualVar input = dualops::concat_cols(dual_seed(x, tape.constant(*div_tangent)),
                                             dual_seed(lat_rows, tape.constant(tan_lat)));
        DualVar raw = bending_forward<DualTapeOps, Var>(tm.bending, input);
        DualVar w = rigidity_enabled
                        ? rigidity_forward<DualTapeOps, Var>(tm.rigidity, dual_seed(x, tape.constant(*div_tangent)))
                        : dual_const(tape.constant(Tensor::full(n, 1, 1.0)));
        DualVar gated = dualops::mul(dualops::broadcast_cols(w, 3), raw);
        Var ed = mul(tape.constant(*div_tangent), gated.d);                  // [N,3]
        out.divergence = matmul(ed, tape.constant(Tensor::full(3, 1, 1.0))); // [N,1]
        out.raw = raw.v;
        out.rigidity = w.v;
        out.gated = gated.v;
    } else {
        Var input = concat_cols(x, lat_rows);
        out.raw = bending_forward<TapeOps, Var>(tm.bending, input);
        out.rigidity = rigidity_enabled ? rigidity_forward<TapeOps, Var>(tm.rigidity, x)
                                        : tape.constant(Tensor::full(n, 1, 1.0));
        out.gated = mul(broadcast_cols(out.rigidity, 3), out.raw);
    }
    out.bent = add(x, out.gated);
    return out;
}

// ---------------------------------------------------------------------------
// Bent-ray view directions
// ---------------------------------------------------------------------------

struct ViewDirs {
    Tensor dirs; // [N,3] unit vectors
    int fallback_count = 0; // zero-length differences that fell back to the straight direction
};

// approximate: normalize(bent_j - bent_{j-1}); sample 0 copies sample 1's
// direction. bent is [R*S,3] ray-major; straight_dirs is [R,3].
inline ViewDirs approximate_view_dirs(const Tensor& bent, int rays, int samples,
                                      const Tensor& straight_dirs) {
    if (samples < 2) throw UsageError("approximate view directions need >= 2 samples per ray");
    ViewDirs out;
    out.dirs = Tensor(rays * samples, 3);
    for (int r = 0; r < rays; ++r) {
        for (int j = 1; j < samples; ++j) {
            int row = r * samples + j;
            double d[3], n2 = 0;
            for (int c = 0; c < 3; ++c) {
                d[c] = bent.at(row, c) - bent.at(row - 1, c);
                n2 += d[c] * d[c];
            }
            if (n2 < 1e-24) {
                ++out.fallback_count;
                double sn = 0;
                for (int c = 0; c < 3; ++c) sn += straight_dirs.at(r, c) * straight_dirs.at(r, c);
                sn = std::sqrt(sn);
                for (int c = 0; c < 3; ++c) out.dirs.at(row, c) = straight_dirs.at(r, c) / sn;
            } else {
                double nn = std::sqrt(n2);
                for (int c = 0; c < 3; ++c) out.dirs.at(row, c) = d[c] / nn;
            }
        }
        for (int c = 0; c < 3; ++c) out.dirs.at(r * samples, c) = out.dirs.at(r * samples + 1, c);
    }
    return out;
}

// exact: normalize(J d) with J the Jacobian of the full bent map x + b(x);
// J d = d + (db/dx) d comes out of one jvp with tangent d.
inline ViewDirs exact_view_dirs(const DualBendFn& field, const Tensor& pts,
                                const Tensor& per_point_dirs) {
    ViewDirs out;
    int n = pts.rows();
    DualTensor g = field(dual_seed(pts, per_point_dirs));
    out.dirs = Tensor(n, 3);
    for (int i = 0; i < n; ++i) {
        double d[3], n2 = 0;
        for (int c = 0; c < 3; ++c) {
            d[c] = per_point_dirs.at(i, c) + g.d.at(i, c);
            n2 += d[c] * d[c];
        }
        if (n2 < 1e-24) {
            ++out.fallback_count;
            double sn = 0;
            for (int c = 0; c < 3; ++c) sn += per_point_dirs.at(i, c) * per_point_dirs.at(i, c);
            sn = std::sqrt(sn);
            for (int c = 0; c < 3; ++c) out.dirs.at(i, c) = per_point_dirs.at(i, c) / sn;
        } else {
            double nn = std::sqrt(n2);
            for (int c = 0; c < 3; ++c) out.dirs.at(i, c) = d[c] / nn;
        }
    }
    return out;
}

inline Tensor repeat_rows_per_ray(const Tensor& per_ray, int samples) {
    Tensor out(per_ray.rows() * samples, per_ray.cols());
    for (int r = 0; r < per_ray.rows(); ++r)
        for (int j = 0; j < samples; ++j)
            for (int c = 0; c < per_ray.cols(); ++c) out.at(r * samples + j, c) = per_ray.at(r, c);
    return out;
}

} // namespace warpfield
