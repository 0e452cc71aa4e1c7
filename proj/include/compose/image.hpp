#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "color.hpp"
#include "error.hpp"
#include "raster_io.hpp"

namespace compose {

/// Linear RGB float image with an optional per-pixel foreground mask.
struct LinearImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;           // row-major RGB
    std::vector<std::uint8_t> mask;    // empty, or width*height flags

    LinearImage() = default;
    LinearImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0f) {
        if (w <= 0 || h <= 0) throw InvalidArgument("image dimensions must be positive");
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool has_mask() const { return !mask.empty(); }

    float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    bool same_size(const LinearImage& o) const { return width == o.width && height == o.height; }

    bool operator==(const LinearImage&) const = default;
};

/// Pixel mask with the same layout as LinearImage::mask.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}
    Mask(int w, int h, std::vector<std::uint8_t> b) : width(w), height(h), bits(std::move(b)) {
        if (bits.size() != static_cast<std::size_t>(w) * h) throw InvalidArgument("mask size does not match dimensions");
    }

    bool operator()(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : bits) n += b != 0;
        return n;
    }
    bool empty() const { return count() == 0; }
};

inline void validate_image(const LinearImage& img) {
    if (img.data.size() != img.pixel_count() * 3) throw InvalidArgument("image data size does not match dimensions");
    if (img.has_mask() && img.mask.size() != img.pixel_count()) throw InvalidArgument("image mask does not match dimensions");
    for (float v : img.data)
        if (!std::isfinite(v) || v < 0.0f) throw InvalidArgument("image contains negative or non-finite values");
}

inline double pixel_luminance(const LinearImage& img, int x, int y) {
    return luminance(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
}

// ---------------------------------------------------------------------------
// Display encoding

struct Srgb8Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // RGB
};

/// clamp(exposure * linear, 0, 1) followed by the sRGB transfer curve.
inline Srgb8Image tonemap(const LinearImage& img, double exposure) {
    if (!(exposure > 0.0) || !std::isfinite(exposure)) throw InvalidArgument("exposure must be > 0");
    Srgb8Image out{img.width, img.height, std::vector<std::uint8_t>(img.data.size())};
    for (std::size_t k = 0; k < img.data.size(); ++k) out.data[k] = linear_to_srgb8(exposure * img.data[k]);
    return out;
}

inline std::string encode_png(const Srgb8Image& img) { return encode_png8(img.width, img.height, img.data); }

// ---------------------------------------------------------------------------
// I/O. PNG output is tonemapped at exposure 1; .pfm and .hdr keep linear values.

inline LinearImage image_from_raster(RgbRaster r) {
    LinearImage img;
    img.width = r.width;
    img.height = r.height;
    img.data = std::move(r.data);
    validate_image(img);
    return img;
}

inline LinearImage load_image(const std::filesystem::path& path) { return image_from_raster(read_raster(path)); }

inline void save_image(const LinearImage& img, const std::filesystem::path& path) {
    write_raster(RgbRaster{img.width, img.height, img.data}, path);
}

/// Any readable image; a pixel is set where any channel is non-zero.
inline Mask load_mask(const std::filesystem::path& path) {
    const RgbRaster r = read_raster(path);
    Mask m(r.width, r.height);
    for (std::size_t p = 0; p < m.bits.size(); ++p)
        m.bits[p] = (r.data[p * 3] != 0.0f || r.data[p * 3 + 1] != 0.0f || r.data[p * 3 + 2] != 0.0f) ? 1 : 0;
    return m;
}

inline void save_mask(const Mask& m, const std::filesystem::path& path) {
    RgbRaster r{m.width, m.height, std::vector<float>(m.bits.size() * 3)};
    for (std::size_t p = 0; p < m.bits.size(); ++p) r.data[p * 3] = r.data[p * 3 + 1] = r.data[p * 3 + 2] = m.bits[p] ? 1.0f : 0.0f;
    write_raster(r, path);
}

}  // namespace compose
