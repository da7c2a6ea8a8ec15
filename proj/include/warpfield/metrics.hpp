#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"
#include "image.hpp"

namespace warpfield {

constexpr double kPsnrCap = 99.0; // reported for (near-)identical images

inline double psnr(const Tensor& a, const Tensor& b, double peak = 1.0) {
    if (!a.same_shape(b)) throw UsageError("psnr: shape mismatch");
    double mse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= double(a.size());
    if (mse == 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
    return psnr(a.pixels, b.pixels, peak);
}

namespace detail {
inline std::vector<double> gaussian_window(int radius, double sigma) {
    int n = 2 * radius + 1;
    std::vector<double> w(std::size_t(n) * std::size_t(n));
    double total = 0;
    for (int y = -radius; y <= radius; ++y)
        for (int x = -radius; x <= radius; ++x) {
            double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
            w[std::size_t((y + radius) * n + (x + radius))] = v;
            total += v;
        }
    for (auto& v : w) v /= total;
    return w;
}

inline std::vector<double> grayscale(const Image& img) {
    std::vector<double> g(std::size_t(img.width) * img.height);
    for (int i = 0; i < img.width * img.height; ++i)
        g[std::size_t(i)] = (img.pixels.at(i, 0) + img.pixels.at(i, 1) + img.pixels.at(i, 2)) / 3.0;
    return g;
}
} // namespace detail

// Mean structural similarity over all fully-interior 11x11 Gaussian windows
// (sigma 1.5) of the channel-mean grayscale images, unit dynamic range.
inline double ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw UsageError("ssim: shape mismatch");
    constexpr int kRadius = 5;
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    if (a.width < 2 * kRadius + 1 || a.height < 2 * kRadius + 1)
        throw UsageError("ssim: image smaller than the 11x11 window");

    static const std::vector<double> win = detail::gaussian_window(kRadius, 1.5);
    std::vector<double> ga = detail::grayscale(a), gb = detail::grayscale(b);

    double total = 0;
    int count = 0;
    for (int cy = kRadius; cy < a.height - kRadius; ++cy)
        for (int cx = kRadius; cx < a.width - kRadius; ++cx) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            int t = 0;
            for (int dy = -kRadius; dy <= kRadius; ++dy)
                for (int dx = -kRadius; dx <= kRadius; ++dx, ++t) {
                    double w = win[std::size_t(t)];
                    double va = ga[std::size_t((cy + dy) * a.width + (cx + dx))];
                    double vb = gb[std::size_t((cy + dy) * a.width + (cx + dx))];
                    mx += w * va;
                    my += w * vb;
                    xx += w * va * va;
                    yy += w * vb * vb;
                    xy += w * va * vb;
                }
            double sx = xx - mx * mx, sy = yy - my * my, sxy = xy - mx * my;
            double s = ((2 * mx * my + kC1) * (2 * sxy + kC2)) /
                       ((mx * mx + my * my + kC1) * (sx + sy + kC2));
            total += s;
            ++count;
        }
    return total / double(count);
}

struct StabilityReport {
    Tensor std_image;                  // [W*H,1] per-pixel channel-maxed temporal std
    std::vector<double> sorted_values; // ascending, for cumulative curves

    double median() const {
        if (sorted_values.empty()) throw UsageError("stability: empty report");
        std::size_t n = sorted_values.size();
        return n % 2 ? sorted_values[n / 2]
                     : 0.5 * (sorted_values[n / 2 - 1] + sorted_values[n / 2]);
    }
};

// Per-pixel per-channel population standard deviation across frames from a
// fixed camera, reduced over channels by max.
inline StabilityReport background_stability(const std::vector<Image>& frames) {
    if (frames.size() < 2) throw DataError("stability: need at least 2 frames");
    int w = frames[0].width, h = frames[0].height;
    for (const auto& f : frames)
        if (f.width != w || f.height != h) throw DataError("stability: frame size mismatch");

    StabilityReport rep;
    rep.std_image = Tensor(w * h, 1);
    double n = double(frames.size());
    for (int i = 0; i < w * h; ++i) {
        double worst = 0;
        for (int c = 0; c < 3; ++c) {
            double s = 0, s2 = 0;
            for (const auto& f : frames) {
                double v = f.pixels.at(i, c);
                s += v;
                s2 += v * v;
            }
            double mean = s / n;
            double var = std::max(0.0, s2 / n - mean * mean);
            worst = std::max(worst, std::sqrt(var));
        }
        rep.std_image.at(i, 0) = worst;
    }
    rep.sorted_values.resize(std::size_t(w) * h);
    for (int i = 0; i < w * h; ++i) rep.sorted_values[std::size_t(i)] = rep.std_image.at(i, 0);
    std::sort(rep.sorted_values.begin(), rep.sorted_values.end());
    return rep;
}

} // namespace warpfield
