#pragma once

#include <utility>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace warpfield {

// Pinhole camera. R maps camera coordinates to world coordinates, t is the
// camera center in world coordinates. Camera frame: +x right, +y down,
// +z forward. Depth j along a ray o + j*d parameterizes the frustum directly
// (directions are NOT normalized; d has unit z in camera space).
struct Camera {
    Tensor rotation{3, 3};    // camera-to-world
    Tensor translation{1, 3}; // camera center
    Tensor intrinsics{3, 3};  // [[fx,0,cx],[0,fy,cy],[0,0,1]]
    int width = 0, height = 0;
    double near = 0, far = 0;

    void validate() const {
        if (width < 1 || height < 1) throw DataError("camera: invalid image size");
        if (!(near > 0 && near < far)) throw DataError("camera: requires 0 < near < far");
        Tensor rtr = matmul(transpose(rotation), rotation);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double want = r == c ? 1.0 : 0.0;
                if (std::abs(rtr.at(r, c) - want) > 1e-6)
                    throw DataError("camera: rotation not orthonormal within 1e-6");
            }
    }
};

struct RayBundle {
    Tensor origins;    // [N,3]
    Tensor directions; // [N,3]
    std::vector<std::pair<int, int>> pixels;
    int count() const { return origins.rows(); }
};

// Rays through pixel centers (u+0.5, v+0.5).
inline RayBundle generate_rays(const Camera& cam, const std::vector<std::pair<int, int>>& pixels) {
    cam.validate();
    const double fx = cam.intrinsics.at(0, 0), fy = cam.intrinsics.at(1, 1);
    const double cx = cam.intrinsics.at(0, 2), cy = cam.intrinsics.at(1, 2);
    if (fx == 0 || fy == 0) throw DataError("camera: zero focal length");

    RayBundle rb;
    rb.origins = Tensor(int(pixels.size()), 3);
    rb.directions = Tensor(int(pixels.size()), 3);
    rb.pixels = pixels;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        auto [u, v] = pixels[i];
        if (u < 0 || u >= cam.width || v < 0 || v >= cam.height)
            throw UsageError("generate_rays: pixel (" + std::to_string(u) + "," + std::to_string(v) +
                             ") out of bounds");
        double dc[3] = {(double(u) + 0.5 - cx) / fx, (double(v) + 0.5 - cy) / fy, 1.0};
        for (int r = 0; r < 3; ++r) {
            double s = 0;
            for (int c = 0; c < 3; ++c) s += cam.rotation.at(r, c) * dc[c];
            rb.directions.at(int(i), r) = s;
            rb.origins.at(int(i), r) = cam.translation.at(0, r);
        }
    }
    return rb;
}

inline std::vector<std::pair<int, int>> all_pixels(const Camera& cam) {
    std::vector<std::pair<int, int>> px;
    px.reserve(std::size_t(cam.width) * cam.height);
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) px.emplace_back(u, v);
    return px;
}

// Proper look-at builder used by the synthetic scenes: +z toward target,
// +y down in world terms when up=(0,1,0).
inline Camera look_at_camera(const Tensor& position, const Tensor& target, double focal_px, int width,
                             int height, double near, double far) {
    auto norm3 = [](double x, double y, double z) { return std::sqrt(x * x + y * y + z * z); };
    double fx_ = target.at(0, 0) - position.at(0, 0);
    double fy_ = target.at(0, 1) - position.at(0, 1);
    double fz_ = target.at(0, 2) - position.at(0, 2);
    double fn = norm3(fx_, fy_, fz_);
    if (fn == 0) throw UsageError("look_at_camera: position equals target");
    fx_ /= fn; fy_ /= fn; fz_ /= fn;
    // x = f x up, y = z x x  (up = (0,1,0))
    double xx = fy_ * 0.0 - fz_ * 1.0, xy = fz_ * 0.0 - fx_ * 0.0, xz = fx_ * 1.0 - fy_ * 0.0;
    double xn = norm3(xx, xy, xz);
    if (xn < 1e-12) throw UsageError("look_at_camera: viewing direction parallel to up vector");
    xx /= xn; xy /= xn; xz /= xn;
    double yx = fy_ * xz - fz_ * xy, yy = fz_ * xx - fx_ * xz, yz = fx_ * xy - fy_ * xx;

    Camera cam;
    cam.rotation = Tensor::from_rows(3, 3, {xx, yx, fx_, xy, yy, fy_, xz, yz, fz_});
    cam.translation = position;
    cam.intrinsics = Tensor::from_rows(
        3, 3, {focal_px, 0, width / 2.0, 0, focal_px, height / 2.0, 0, 0, 1});
    cam.width = width;
    cam.height = height;
    cam.near = near;
    cam.far = far;
    cam.validate();
    return cam;
}

} // namespace warpfield
