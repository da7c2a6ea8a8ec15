#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "camera.hpp"
#include "composite.hpp"
#include "core/common.hpp"
#include "core/tensor.hpp"
#include "image.hpp"
#include "sampling.hpp"
#include "threads.hpp"

namespace warpfield {

// Truncated Gaussian density blob with a flat color.
struct Blob {
    double center[3] = {0, 0, 0};
    double radius = 0.5;
    double amplitude = 1.0;
    double color[3] = {1, 1, 1};
};

// Foreground blob translating linearly over the clip.
struct MovingBlob {
    Blob base;
    double velocity[3] = {0, 0, 0}; // total displacement across the clip
};

struct SyntheticSpec {
    std::vector<Blob> background;
    std::vector<MovingBlob> foreground;
    int frames = 24;
    int width = 64, height = 64;
    double focal = 80.0;
    double near = 2.0, far = 6.5;
    double arc_radius = 4.0;
    double arc_span_deg = 60.0;
    double camera_height = 0.4;
    double novel_angle_offset_deg = 7.0;
    double novel_height_offset = 0.5;
    int novel_stride = 4;       // every k-th frame gets a held-out view
    int oracle_samples = 512;   // quadrature resolution of the ground truth
    double mask_threshold = 0.01; // absolute foreground ray-weight cutoff
    std::uint64_t seed = 1;
};

namespace detail {
inline double blob_density(const Blob& b, const double* p) {
    double d2 = 0;
    for (int c = 0; c < 3; ++c) {
        double d = p[c] - b.center[c];
        d2 += d * d;
    }
    if (d2 > 9.0 * b.radius * b.radius) return 0.0; // truncated at 3 radii
    return b.amplitude * std::exp(-d2 / (2.0 * b.radius * b.radius));
}
} // namespace detail

// Analytic density/color field of one time step; foreground blobs are moved
// to their per-frame positions up front.
struct AnalyticField {
    std::vector<Blob> blobs;
    int foreground_count = 0; // foreground blobs occupy the front of the list

    // sigma, fg share of sigma, and density-weighted color at a point
    void sample(const double* p, double& sigma, double& fg_fraction, double* rgb) const {
        sigma = 0;
        double fg = 0;
        rgb[0] = rgb[1] = rgb[2] = 0;
        for (std::size_t i = 0; i < blobs.size(); ++i) {
            double d = detail::blob_density(blobs[i], p);
            sigma += d;
            if (int(i) < foreground_count) fg += d;
            for (int c = 0; c < 3; ++c) rgb[c] += d * blobs[i].color[c];
        }
        if (sigma > 0)
            for (int c = 0; c < 3; ++c) rgb[c] /= sigma;
        fg_fraction = sigma > 0 ? fg / sigma : 0.0;
    }
};

inline AnalyticField field_at_time(const SyntheticSpec& spec, int frame, bool include_foreground) {
    AnalyticField f;
    double t = spec.frames > 1 ? double(frame) / double(spec.frames - 1) : 0.0;
    if (include_foreground) {
        for (const auto& m : spec.foreground) {
            Blob b = m.base;
            for (int c = 0; c < 3; ++c) b.center[c] += t * m.velocity[c];
            f.blobs.push_back(b);
        }
        f.foreground_count = int(f.blobs.size());
    }
    for (const auto& b : spec.background) f.blobs.push_back(b);
    return f;
}

inline Camera arc_camera(const SyntheticSpec& spec, double angle_deg, double height) {
    double a = angle_deg * M_PI / 180.0;
    Tensor pos = Tensor::from_rows(
        1, 3, {spec.arc_radius * std::sin(a), height, -spec.arc_radius * std::cos(a)});
    return look_at_camera(pos, Tensor(1, 3), spec.focal, spec.width, spec.height, spec.near,
                          spec.far);
}

inline Camera frame_camera(const SyntheticSpec& spec, int frame) {
    double t = spec.frames > 1 ? double(frame) / double(spec.frames - 1) : 0.5;
    return arc_camera(spec, (t - 0.5) * spec.arc_span_deg, spec.camera_height);
}

inline Camera novel_camera(const SyntheticSpec& spec, int frame) {
    double t = spec.frames > 1 ? double(frame) / double(spec.frames - 1) : 0.5;
    return arc_camera(spec, (t - 0.5) * spec.arc_span_deg + spec.novel_angle_offset_deg,
                      spec.camera_height + spec.novel_height_offset);
}

// Every blob center must project inside every camera it is visible from, with
// camera-space depth inside (near, far).
inline void validate_spec(const SyntheticSpec& spec) {
    if (spec.frames < 1) throw UsageError("synthetic: need at least one frame");
    for (const auto& b : spec.background)
        if (b.amplitude < 0 || b.radius <= 0) throw UsageError("synthetic: invalid blob");
    for (const auto& m : spec.foreground)
        if (m.base.amplitude < 0 || m.base.radius <= 0) throw UsageError("synthetic: invalid blob");

    for (int i = 0; i < spec.frames; ++i) {
        AnalyticField f = field_at_time(spec, i, true);
        for (const Camera& cam : {frame_camera(spec, i), novel_camera(spec, i)}) {
            for (const auto& b : f.blobs) {
                double pc[3]; // camera frame: R^T (p - t)
                for (int r = 0; r < 3; ++r) {
                    pc[r] = 0;
                    for (int c = 0; c < 3; ++c)
                        pc[r] += cam.rotation.at(c, r) * (b.center[c] - cam.translation.at(0, c));
                }
                if (!(pc[2] > cam.near && pc[2] < cam.far))
                    throw DataError("synthetic: blob outside the depth range of frame " +
                                    std::to_string(i));
                double u = cam.intrinsics.at(0, 0) * pc[0] / pc[2] + cam.intrinsics.at(0, 2);
                double v = cam.intrinsics.at(1, 1) * pc[1] / pc[2] + cam.intrinsics.at(1, 2);
                if (u < 0 || u >= cam.width || v < 0 || v >= cam.height)
                    throw DataError("synthetic: blob projects outside frame " + std::to_string(i));
            }
        }
    }
}

struct OracleRender {
    Image image;
    Tensor foreground_weight; // [W*H,1] absolute ray weight carried by foreground blobs
};

// Ground-truth render: jitter-free stratified depths fed through the same
// composite() quadrature the engine uses.
inline OracleRender oracle_render(const AnalyticField& field, const Camera& cam, int samples) {
    OracleRender out;
    out.image = Image(cam.width, cam.height);
    out.foreground_weight = Tensor(cam.width * cam.height, 1);
    auto pixels = all_pixels(cam);

    parallel_for(int(pixels.size()), [&](int begin, int end) {
        Rng rng(0); // jitter-free; never consulted
        std::vector<std::pair<int, int>> chunk(pixels.begin() + begin, pixels.begin() + end);
        RayBundle rays = generate_rays(cam, chunk);
        int r_count = rays.count();
        std::vector<double> depths = stratified_sample(cam.near, cam.far, samples, rng, false);
        SampleSet set = make_sample_set(std::vector<std::vector<double>>(std::size_t(r_count), depths),
                                        cam.far, SampleTag::coarse);
        Tensor pts = sample_points(rays, set);
        Tensor sigma(r_count, samples);
        Tensor colors(r_count * samples, 3);
        Tensor fg(r_count, samples);
        for (int i = 0; i < pts.rows(); ++i) {
            double p[3] = {pts.at(i, 0), pts.at(i, 1), pts.at(i, 2)};
            double s, frac, rgb[3];
            field.sample(p, s, frac, rgb);
            sigma.at(i / samples, i % samples) = s;
            fg.at(i / samples, i % samples) = frac;
            for (int c = 0; c < 3; ++c) colors.at(i, c) = rgb[c];
        }
        RenderOutput ro = composite(colors, sigma, set.deltas);
        for (int r = 0; r < r_count; ++r) {
            int pix = begin + r;
            for (int c = 0; c < 3; ++c) out.image.pixels.at(pix, c) = ro.rgb.at(r, c);
            double wfg = 0;
            for (int j = 0; j < samples; ++j) wfg += ro.weights.at(r, j) * fg.at(r, j);
            out.foreground_weight.at(pix, 0) = wfg;
        }
    });
    return out;
}

struct SyntheticFrame {
    Image image;
    Camera camera;
    int time_id = 0;
};

struct SyntheticScene {
    SyntheticSpec spec;
    std::vector<SyntheticFrame> frames;
    std::vector<SyntheticFrame> novel;    // held-out views, ground truth included
    std::vector<Image> background_only;   // per frame, frame camera, foreground deleted
    std::vector<Image> foreground_mask;   // per frame, 0/1 grayscale
};

inline SyntheticScene generate_synthetic(const SyntheticSpec& spec) {
    validate_spec(spec);
    SyntheticScene scene;
    scene.spec = spec;
    for (int i = 0; i < spec.frames; ++i) {
        Camera cam = frame_camera(spec, i);
        AnalyticField full = field_at_time(spec, i, true);
        AnalyticField bg = field_at_time(spec, i, false);

        OracleRender fr = oracle_render(full, cam, spec.oracle_samples);
        scene.frames.push_back({fr.image, cam, i});
        scene.background_only.push_back(oracle_render(bg, cam, spec.oracle_samples).image);

        Image mask(cam.width, cam.height);
        for (int p = 0; p < cam.width * cam.height; ++p) {
            double on = fr.foreground_weight.at(p, 0) > spec.mask_threshold ? 1.0 : 0.0;
            for (int c = 0; c < 3; ++c) mask.pixels.at(p, c) = on;
        }
        scene.foreground_mask.push_back(std::move(mask));

        if (spec.novel_stride > 0 && i % spec.novel_stride == 0) {
            Camera ncam = novel_camera(spec, i);
            scene.novel.push_back({oracle_render(full, ncam, spec.oracle_samples).image, ncam, i});
        }
    }
    return scene;
}

// Desk-scale default: three static blobs, one brighter blob crossing the
// stage over the clip.
inline SyntheticSpec toy_scene() {
    SyntheticSpec s;
    s.background = {
        {{-0.80, -0.25, 0.35}, 0.50, 2.2, {0.90, 0.25, 0.20}},
        {{0.75, 0.30, -0.25}, 0.45, 2.0, {0.20, 0.80, 0.30}},
        {{0.05, -0.65, -0.45}, 0.55, 1.8, {0.25, 0.35, 0.90}},
    };
    MovingBlob fg;
    fg.base = {{-0.45, 0.55, 0.10}, 0.40, 2.5, {0.95, 0.85, 0.25}};
    fg.velocity[0] = 0.90;
    fg.velocity[1] = -0.50;
    fg.velocity[2] = 0.25;
    s.foreground = {fg};
    return s;
}

} // namespace warpfield
