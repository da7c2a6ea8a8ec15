#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "camera.hpp"
#include "core/common.hpp"
#include "core/tensor.hpp"

namespace warpfield {

// One depth per equal-width bin of [near, far]; jitter-free mode returns bin
// centers.
inline std::vector<double> stratified_sample(double near, double far, int count, Rng& rng,
                                             bool jitter = true) {
    if (count < 1) throw UsageError("stratified_sample: count must be >= 1");
    if (!(near < far)) throw UsageError("stratified_sample: requires near < far");
    std::vector<double> depths(static_cast<std::size_t>(count));
    double bin = (far - near) / double(count);
    for (int i = 0; i < count; ++i) {
        double u = jitter ? rng.uniform() : 0.5;
        depths[std::size_t(i)] = near + (double(i) + u) * bin;
    }
    return depths;
}

// Inverse-transform sampling from the piecewise-constant density over the
// count-1 bins between consecutive coarse depths. Bin k carries coarse weight
// k plus an additive floor of 1e-5; the last coarse sample's weight has no bin
// to govern and is unused. Deterministic mode uses stratified CDF positions
// (i+0.5)/count instead of random draws.
inline std::vector<double> importance_sample(const std::vector<double>& coarse_weights,
                                             const std::vector<double>& coarse_depths, int count,
                                             Rng& rng, bool deterministic = false) {
    constexpr double kFloor = 1e-5;
    if (coarse_weights.size() != coarse_depths.size())
        throw UsageError("importance_sample: weights/depths size mismatch");
    if (coarse_depths.size() < 2) throw UsageError("importance_sample: need at least 2 coarse depths");
    if (count < 1) throw UsageError("importance_sample: count must be >= 1");
    std::size_t bins = coarse_depths.size() - 1;
    std::vector<double> cdf(bins + 1, 0.0);
    double total = 0;
    for (std::size_t k = 0; k < bins; ++k) {
        double w = coarse_weights[k];
        if (w < 0) throw UsageError("importance_sample: negative weight");
        total += w + kFloor;
        cdf[k + 1] = total;
    }
    if (!(total > 0)) throw NumericError("importance_sample: degenerate weights despite flooring");
    for (auto& c : cdf) c /= total;
    cdf[bins] = 1.0;

    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        double u = deterministic ? (double(i) + 0.5) / double(count) : rng.uniform();
        std::size_t k = std::size_t(std::upper_bound(cdf.begin(), cdf.end() - 1, u) - cdf.begin());
        k = k > 0 ? k - 1 : 0;
        double span = cdf[k + 1] - cdf[k];
        double frac = span > 0 ? (u - cdf[k]) / span : 0.5;
        out[std::size_t(i)] = coarse_depths[k] + frac * (coarse_depths[k + 1] - coarse_depths[k]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Sorted union, nudging exact collisions up by one ulp so depths stay strictly
// increasing.
inline std::vector<double> merge_depths(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> m;
    m.reserve(a.size() + b.size());
    m.insert(m.end(), a.begin(), a.end());
    m.insert(m.end(), b.begin(), b.end());
    std::sort(m.begin(), m.end());
    for (std::size_t i = 1; i < m.size(); ++i)
        if (m[i] <= m[i - 1]) m[i] = std::nextafter(m[i - 1], std::numeric_limits<double>::infinity());
    return m;
}

enum class SampleTag { coarse, fine };

// Per-ray depth/interval grid over a ray bundle; fixed sample count per ray.
struct SampleSet {
    Tensor depths; // [R,S]
    Tensor deltas; // [R,S], delta_last = far - depth_last
    SampleTag tag = SampleTag::coarse;
    int rays() const { return depths.rows(); }
    int samples_per_ray() const { return depths.cols(); }
};

inline SampleSet make_sample_set(const std::vector<std::vector<double>>& per_ray_depths, double far,
                                 SampleTag tag) {
    if (per_ray_depths.empty()) throw UsageError("make_sample_set: no rays");
    int s = int(per_ray_depths[0].size());
    SampleSet set;
    set.tag = tag;
    set.depths = Tensor(int(per_ray_depths.size()), s);
    set.deltas = Tensor(int(per_ray_depths.size()), s);
    for (int r = 0; r < set.depths.rows(); ++r) {
        const auto& d = per_ray_depths[std::size_t(r)];
        if (int(d.size()) != s) throw UsageError("make_sample_set: ragged sample counts");
        for (int j = 0; j < s; ++j) {
            set.depths.at(r, j) = d[std::size_t(j)];
            double next = (j + 1 < s) ? d[std::size_t(j + 1)] : far;
            double delta = next - d[std::size_t(j)];
            if (!(delta > 0)) throw NumericError("make_sample_set: non-positive interval length");
            set.deltas.at(r, j) = delta;
        }
    }
    return set;
}

// Straight-ray points o + j*d flattened ray-major to [R*S, 3].
inline Tensor sample_points(const RayBundle& rays, const SampleSet& set) {
    int R = set.rays(), S = set.samples_per_ray();
    if (rays.count() != R) throw UsageError("sample_points: ray/sample count mismatch");
    Tensor pts(R * S, 3);
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < S; ++j) {
            double t = set.depths.at(r, j);
            for (int c = 0; c < 3; ++c)
                pts.at(r * S + j, c) = rays.origins.at(r, c) + t * rays.directions.at(r, c);
        }
    return pts;
}

} // namespace warpfield
