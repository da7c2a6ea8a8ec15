#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <vector>

#include "camera.hpp"
#include "composite.hpp"
#include "core/common.hpp"
#include "deform.hpp"
#include "fields.hpp"
#include "image.hpp"
#include "sampling.hpp"
#include "threads.hpp"

namespace warpfield {

// Axis-aligned box of canonical-space positions, accumulated from bent
// training samples and carried in checkpoints for correspondence rendering.
struct CanonicalBounds {
    Tensor lo{1, 3}, hi{1, 3};
    bool valid = false;

    void include(const Tensor& pts) {
        if (pts.cols() != 3) throw UsageError("bounds: points must be [N,3]");
        for (int i = 0; i < pts.rows(); ++i) {
            if (!valid) {
                for (int c = 0; c < 3; ++c) lo.at(0, c) = hi.at(0, c) = pts.at(i, c);
                valid = true;
                continue;
            }
            for (int c = 0; c < 3; ++c) {
                lo.at(0, c) = std::min(lo.at(0, c), pts.at(i, c));
                hi.at(0, c) = std::max(hi.at(0, c), pts.at(i, c));
            }
        }
    }

    // grow the extent by a fraction, centered
    void expand_fraction(double f) {
        if (!valid) throw UsageError("bounds: cannot expand an empty box");
        for (int c = 0; c < 3; ++c) {
            double mid = 0.5 * (lo.at(0, c) + hi.at(0, c));
            double half = 0.5 * (hi.at(0, c) - lo.at(0, c)) * (1.0 + f);
            lo.at(0, c) = mid - half;
            hi.at(0, c) = mid + half;
        }
    }
};

enum class RenderModality { color, rigidity, correspondence, canonical };

// Render-time edits; defaults are the unedited pipeline.
struct EditOptions {
    double exaggeration = 1.0;
    double remove_threshold = -1.0; // when >= 0: samples with w > tau turn transparent
    double stabilize_r_min = 0.0;   // w below this snaps to 0

    void validate() const {
        if (remove_threshold > 1.0) throw UsageError("edit: removal threshold must be in [0,1]");
        if (stabilize_r_min < 0.0 || stabilize_r_min > 1.0)
            throw UsageError("edit: stabilization threshold must be in [0,1]");
    }
};

struct RenderConfig {
    int coarse_samples = 64;
    int fine_samples = 64;
    bool jitter = false; // deterministic placement by default
    std::uint64_t seed = 0;
    RenderModality modality = RenderModality::color;
    EditOptions edit;
    CanonicalBounds bounds; // required by the correspondence modality

    void validate() const {
        if (coarse_samples < 2 || fine_samples < 1)
            throw UsageError("render: need at least 2 coarse and 1 fine sample");
        edit.validate();
        if (modality == RenderModality::correspondence && !valid_bounds())
            throw UsageError("render: correspondence needs canonical bounds");
    }
    bool valid_bounds() const { return bounds.valid; }
};

// t=0 and t=1 return the endpoint rows untouched.
inline Tensor interpolate_latents(const Tensor& a, const Tensor& b, double t) {
    if (!a.same_shape(b)) throw UsageError("interpolate_latents: shape mismatch");
    if (t < 0.0 || t > 1.0) throw UsageError("interpolate_latents: t must be in [0,1]");
    if (t == 0.0) return a;
    if (t == 1.0) return b;
    return a * (1.0 - t) + b * t;
}

// argmin_j |sum_{k<j} w_k - 0.5|, first index on ties: the sample sitting at
// the median of the ray's weight distribution
inline int median_sample_index(const Tensor& weights, int ray) {
    double acc = 0, best = std::abs(acc - 0.5);
    int best_j = 0;
    for (int j = 1; j < weights.cols(); ++j) {
        acc += weights.at(ray, j - 1);
        double d = std::abs(acc - 0.5);
        if (d < best) {
            best = d;
            best_j = j;
        }
    }
    return best_j;
}

namespace detail {

struct PassOut {
    RenderOutput ro;
    Tensor rigidity; // [R,S] stabilized straight-point w
    Tensor bent;     // [R*S,3]
};

inline Tensor pass_rgb(const SceneModel& m, FieldKind kind, const CanonicalEval<PlainOps, Tensor>& ce,
                       const Tensor& straight, const Tensor& bent, const RayBundle& rays,
                       int samples, const Tensor& latent, const BendOptions& bopt) {
    if (!m.cfg.has_view_head()) return ce.rgb;
    Tensor dirs;
    if (m.cfg.view_dependence == ViewDependence::approximate) {
        dirs = approximate_view_dirs(bent, rays.count(), samples, rays.directions).dirs;
    } else {
        Tensor per_point = repeat_rows_per_ray(rays.directions, samples);
        dirs = exact_view_dirs(model_gated_bend_dual(m, latent, bopt), straight, per_point).dirs;
    }
    Tensor enc = encode_position<PlainOps>(m.cfg.dir_encoding, dirs);
    const Mlp& head = kind == FieldKind::coarse ? m.view_head_coarse : m.view_head_fine;
    return view_head_forward<PlainOps, Tensor>(head, ce.feature, enc);
}

inline PassOut eval_pass(const SceneModel& m, const Tensor& latent, const RayBundle& rays,
                         const SampleSet& set, FieldKind kind, const RenderConfig& rc) {
    int R = set.rays(), S = set.samples_per_ray();
    BendOptions bopt;
    bopt.exaggeration = rc.edit.exaggeration;
    bopt.stabilize_r_min = rc.edit.stabilize_r_min;
    bopt.bending_enabled = rc.modality != RenderModality::canonical;

    Tensor pts = sample_points(rays, set);
    BentSamples bs = bend_points(m, pts, latent, bopt);

    Tensor enc = encode_position<PlainOps>(m.cfg.encoding, bs.bent);
    if (m.cfg.naive_conditioning)
        enc = concat_cols(enc, latent_rows_for(m, latent, enc.rows()));
    const Mlp& net = kind == FieldKind::coarse ? m.canonical_coarse : m.canonical_fine;
    auto ce = canonical_forward<PlainOps, Tensor>(net, enc, m.cfg.canonical_skip);
    Tensor rgb = pass_rgb(m, kind, ce, pts, bs.bent, rays, S, latent, bopt);

    Tensor sigma(R, S);
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < S; ++j) {
            int row = r * S + j;
            bool removed = rc.edit.remove_threshold >= 0.0 &&
                           bs.rigidity.at(row, 0) > rc.edit.remove_threshold;
            sigma.at(r, j) = removed ? 0.0 : ce.sigma.at(row, 0);
        }

    PassOut out;
    out.ro = composite(rgb, sigma, set.deltas);
    out.rigidity = Tensor(R, S);
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < S; ++j) out.rigidity.at(r, j) = bs.rigidity.at(r * S + j, 0);
    out.bent = bs.bent;
    return out;
}

} // namespace detail

struct RayRenderOut {
    RenderOutput coarse, fine;
    Tensor fine_rigidity; // [R,S_total]
    Tensor fine_bent;     // [R*S_total,3]
    SampleSet coarse_set, fine_set;
};

// Two-pass render of one ray bundle. slots index the per-ray random streams
// (global pixel ids for images), so chunking never changes a ray's samples.
inline RayRenderOut render_ray_bundle(const SceneModel& m, const Tensor& latent,
                                      const RayBundle& rays,
                                      const std::vector<std::uint64_t>& slots, double near,
                                      double far, const RenderConfig& rc) {
    rc.validate();
    int R = rays.count();
    if (int(slots.size()) != R) throw UsageError("render: one stream slot per ray required");

    std::vector<std::vector<double>> coarse_depths(static_cast<std::size_t>(R));
    for (int r = 0; r < R; ++r) {
        Rng rng = derive_rng(rc.seed, Stream::stratified_coarse, 0, slots[std::size_t(r)]);
        coarse_depths[std::size_t(r)] =
            stratified_sample(near, far, rc.coarse_samples, rng, rc.jitter);
    }
    SampleSet coarse_set = make_sample_set(coarse_depths, far, SampleTag::coarse);
    detail::PassOut coarse = detail::eval_pass(m, latent, rays, coarse_set, FieldKind::coarse, rc);

    std::vector<std::vector<double>> fine_depths(static_cast<std::size_t>(R));
    for (int r = 0; r < R; ++r) {
        std::vector<double> w(std::size_t(rc.coarse_samples));
        for (int j = 0; j < rc.coarse_samples; ++j)
            w[std::size_t(j)] = coarse.ro.weights.at(r, j);
        Rng rng = derive_rng(rc.seed, Stream::importance_fine, 0, slots[std::size_t(r)]);
        std::vector<double> fine =
            importance_sample(w, coarse_depths[std::size_t(r)], rc.fine_samples, rng, !rc.jitter);
        fine_depths[std::size_t(r)] = merge_depths(coarse_depths[std::size_t(r)], fine);
    }
    SampleSet fine_set = make_sample_set(fine_depths, far, SampleTag::fine);
    detail::PassOut fine = detail::eval_pass(m, latent, rays, fine_set, FieldKind::fine, rc);

    RayRenderOut out;
    out.coarse = std::move(coarse.ro);
    out.fine = std::move(fine.ro);
    out.fine_rigidity = std::move(fine.rigidity);
    out.fine_bent = std::move(fine.bent);
    out.coarse_set = std::move(coarse_set);
    out.fine_set = std::move(fine_set);
    return out;
}

struct RenderResult {
    Image image;       // content selected by the modality
    Image coarse;      // coarse-pass color render
    int clamped = 0;   // correspondence positions outside the canonical box
    int empty_rays = 0; // rays with total fine weight < 0.1
};

namespace detail {

inline void correspondence_color(const CanonicalBounds& box, const double* p, double* rgb,
                                 bool* clamped) {
    *clamped = false;
    for (int c = 0; c < 3; ++c) {
        double span = box.hi.at(0, c) - box.lo.at(0, c);
        double norm = span > 0 ? (p[c] - box.lo.at(0, c)) / span : 0.5;
        if (norm < 0.0 || norm > 1.0) *clamped = true;
        norm = norm < 0.0 ? 0.0 : (norm > 1.0 ? 1.0 : norm);
        int cell = int(norm * 100.0);
        if (cell > 99) cell = 99;
        rgb[c] = (double(cell) + 0.5) / 100.0;
    }
}

} // namespace detail

inline RenderResult render_image(const SceneModel& m, const Tensor& latent, const Camera& cam,
                                 const RenderConfig& rc) {
    rc.validate();
    cam.validate();
    RenderResult res;
    res.image = Image(cam.width, cam.height);
    res.coarse = Image(cam.width, cam.height);
    auto pixels = all_pixels(cam);
    std::atomic<int> clamped{0}, empty{0};

    parallel_for(int(pixels.size()), [&](int begin, int end) {
        std::vector<std::pair<int, int>> chunk(pixels.begin() + begin, pixels.begin() + end);
        RayBundle rays = generate_rays(cam, chunk);
        std::vector<std::uint64_t> slots(std::size_t(end - begin));
        for (int i = 0; i < end - begin; ++i) slots[std::size_t(i)] = std::uint64_t(begin + i);
        RayRenderOut out = render_ray_bundle(m, latent, rays, slots, cam.near, cam.far, rc);

        int S = out.fine_set.samples_per_ray();
        for (int r = 0; r < rays.count(); ++r) {
            int pix = begin + r;
            for (int c = 0; c < 3; ++c) res.coarse.pixels.at(pix, c) = out.coarse.rgb.at(r, c);

            if (rc.modality == RenderModality::color || rc.modality == RenderModality::canonical) {
                for (int c = 0; c < 3; ++c) res.image.pixels.at(pix, c) = out.fine.rgb.at(r, c);
                continue;
            }
            double total = 0;
            for (int j = 0; j < S; ++j) total += out.fine.weights.at(r, j);
            if (total < 0.1) {
                ++empty;
                double v = rc.modality == RenderModality::rigidity ? 1.0 : 0.0;
                for (int c = 0; c < 3; ++c) res.image.pixels.at(pix, c) = v;
                continue;
            }
            int j = median_sample_index(out.fine.weights, r);
            if (rc.modality == RenderModality::rigidity) {
                double v = 1.0 - out.fine_rigidity.at(r, j);
                for (int c = 0; c < 3; ++c) res.image.pixels.at(pix, c) = v;
            } else {
                double p[3], rgb[3];
                bool clip;
                for (int c = 0; c < 3; ++c) p[c] = out.fine_bent.at(r * S + j, c);
                detail::correspondence_color(rc.bounds, p, rgb, &clip);
                if (clip) ++clamped;
                for (int c = 0; c < 3; ++c) res.image.pixels.at(pix, c) = rgb[c];
            }
        }
    });
    res.clamped = clamped.load();
    res.empty_rays = empty.load();
    return res;
}

// Single-pass render of a caller-supplied density/color field through the
// engine quadrature; mirrors the dataset oracle exactly.
using PointFieldFn = std::function<void(const double* p, double& sigma, double* rgb)>;

inline Image render_point_field(const PointFieldFn& field, const Camera& cam, int samples) {
    cam.validate();
    if (samples < 1) throw UsageError("render_point_field: need at least 1 sample");
    Image img(cam.width, cam.height);
    auto pixels = all_pixels(cam);
    parallel_for(int(pixels.size()), [&](int begin, int end) {
        Rng rng(0); // jitter-free; never consulted
        std::vector<std::pair<int, int>> chunk(pixels.begin() + begin, pixels.begin() + end);
        RayBundle rays = generate_rays(cam, chunk);
        int r_count = rays.count();
        std::vector<double> depths = stratified_sample(cam.near, cam.far, samples, rng, false);
        SampleSet set = make_sample_set(
            std::vector<std::vector<double>>(std::size_t(r_count), depths), cam.far,
            SampleTag::coarse);
        Tensor pts = sample_points(rays, set);
        Tensor sigma(r_count, samples);
        Tensor colors(r_count * samples, 3);
        for (int i = 0; i < pts.rows(); ++i) {
            double p[3] = {pts.at(i, 0), pts.at(i, 1), pts.at(i, 2)};
            double s, rgb[3];
            field(p, s, rgb);
            sigma.at(i / samples, i % samples) = s;
            for (int c = 0; c < 3; ++c) colors.at(i, c) = rgb[c];
        }
        RenderOutput ro = composite(colors, sigma, set.deltas);
        for (int r = 0; r < r_count; ++r)
            for (int c = 0; c < 3; ++c) img.pixels.at(begin + r, c) = ro.rgb.at(r, c);
    });
    return img;
}

} // namespace warpfield
