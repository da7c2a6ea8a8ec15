#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <png.h>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace warpfield {

// Float image in [0,1], pixels row-major as [H*W,3].
struct Image {
    Tensor pixels;
    int width = 0, height = 0;

    Image() = default;
    Image(int w, int h) : pixels(w * h, 3), width(w), height(h) {}
    Image(Tensor p, int w, int h) : pixels(std::move(p)), width(w), height(h) {
        if (pixels.rows() != w * h || pixels.cols() != 3)
            throw UsageError("image: pixel buffer must be [W*H,3]");
    }
};

// Round-half-even quantization after clamping to [0,1]; nearbyint honors the
// default FE_TONEAREST mode.
inline std::uint8_t quantize_channel(double v) {
    double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return std::uint8_t(std::nearbyint(c * 255.0));
}

inline void write_png(const std::string& path, const Image& img) {
    if (img.width < 1 || img.height < 1) throw UsageError("write_png: empty image");
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    pi.width = png_uint_32(img.width);
    pi.height = png_uint_32(img.height);
    pi.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(std::size_t(img.width) * img.height * 3);
    for (int i = 0; i < img.width * img.height; ++i)
        for (int c = 0; c < 3; ++c) buf[std::size_t(i) * 3 + std::size_t(c)] = quantize_channel(img.pixels.at(i, c));
    if (!png_image_write_to_file(&pi, path.c_str(), 0, buf.data(), 0, nullptr))
        throw DataError("write_png: " + path + ": " + pi.message);
}

inline Image read_png(const std::string& path) {
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.c_str()))
        throw DataError("read_png: " + path + ": " + pi.message);
    pi.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr))
        throw DataError("read_png: " + path + ": " + pi.message);
    Image img(int(pi.width), int(pi.height));
    for (int i = 0; i < img.width * img.height; ++i)
        for (int c = 0; c < 3; ++c)
            img.pixels.at(i, c) = double(buf[std::size_t(i) * 3 + std::size_t(c)]) / 255.0;
    return img;
}

// Grayscale convenience for diagnostic channels (rigidity, stability).
inline Image gray_image(const Tensor& values, int width, int height) {
    if (values.rows() != width * height || values.cols() != 1)
        throw UsageError("gray_image: values must be [W*H,1]");
    Image img(width, height);
    for (int i = 0; i < width * height; ++i)
        for (int c = 0; c < 3; ++c) img.pixels.at(i, c) = values.at(i, 0);
    return img;
}

} // namespace warpfield
