#pragma once

// Equirectangular environment maps: a 2:1 lat-long raster of linear radiance.
//
// Pixel (i, j) covers longitude phi = 2*pi*(i + 0.5)/W - pi and colatitude
// theta = pi*(j + 0.5)/H; its direction is (sin t cos p, cos t, sin t sin p)
// with +Y up. Rows are sampled at pixel centers, so no pixel sits on a pole.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "color.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "raster_io.hpp"
#include "vec.hpp"

namespace compose {

class EnvironmentMap {
public:
    EnvironmentMap() = default;

    /// Black map of the given width; height is width/2.
    explicit EnvironmentMap(int width) : width_(width), height_(width / 2) {
        if (width < 4 || width % 2 != 0)
            throw InvalidArgument("environment map width must be even and >= 4, got " + std::to_string(width));
        data_.assign(static_cast<std::size_t>(width_) * height_ * 3, 0.0f);
    }

    /// Adopts a decoded raster after checking the 2:1 aspect ratio and that
    /// every value is finite and non-negative. Never resamples.
    static EnvironmentMap from_raster(RgbRaster raster) {
        if (raster.width < 4 || raster.width % 2 != 0 || raster.height * 2 != raster.width)
            throw FormatError("environment map must have a 2:1 aspect ratio with even width >= 4, got " +
                              std::to_string(raster.width) + "x" + std::to_string(raster.height));
        for (float v : raster.data)
            if (!std::isfinite(v) || v < 0.0f) throw FormatError("environment map contains negative or non-finite radiance");
        EnvironmentMap env;
        env.width_ = raster.width;
        env.height_ = raster.height;
        env.data_ = std::move(raster.data);
        return env;
    }

    RgbRaster to_raster() const { return {width_, height_, data_}; }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    float at(int i, int j, int c) const { return data_[index(i, j) + c]; }
    float& at(int i, int j, int c) { return data_[index(i, j) + c]; }

    Rgb pixel(int i, int j) const {
        const std::size_t k = index(i, j);
        return {data_[k], data_[k + 1], data_[k + 2]};
    }
    void set_pixel(int i, int j, const Rgb& rgb) {
        const std::size_t k = index(i, j);
        for (int c = 0; c < 3; ++c) data_[k + c] = static_cast<float>(rgb[c]);
    }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    double longitude(int i) const { return 2.0 * std::numbers::pi * (i + 0.5) / width_ - std::numbers::pi; }
    double colatitude(int j) const { return std::numbers::pi * (j + 0.5) / height_; }
    Vec3 direction(int i, int j) const { return spherical_direction(colatitude(j), longitude(i)); }

    bool operator==(const EnvironmentMap&) const = default;

private:
    std::size_t index(int i, int j) const { return (static_cast<std::size_t>(j) * width_ + i) * 3; }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// Spherical coordinates shared with the Gaussian light model.

/// Normalized position (u, v) in [0,1) x [0,1] of a unit direction.
struct UvPosition {
    double u = 0;
    double v = 0;
};

inline UvPosition uv_from_direction(const Vec3& d) {
    double u = (std::atan2(d.z, d.x) + std::numbers::pi) / (2.0 * std::numbers::pi);
    if (u >= 1.0) u -= 1.0;
    if (u < 0.0) u += 1.0;
    const double v = std::acos(std::clamp(d.y, -1.0, 1.0)) / std::numbers::pi;
    return {u, v};
}

inline Vec3 direction_from_uv(double u, double v) {
    return spherical_direction(std::numbers::pi * v, 2.0 * std::numbers::pi * u - std::numbers::pi);
}

// ---------------------------------------------------------------------------

/// Per-row solid angle of one pixel. This is the exact area of the pixel's
/// latitude band, 2 sin(theta_j) sin(dtheta/2) * (2pi/W); it tends to
/// sin(theta_j) * dtheta * dphi as the map grows and sums to 4pi at any width.
struct SolidAngleWeights {
    int width = 0;
    std::vector<double> per_row;

    explicit SolidAngleWeights(int w) : width(w), per_row(static_cast<std::size_t>(w / 2)) {
        const int h = w / 2;
        const double band = 2.0 * std::sin(std::numbers::pi / (2.0 * h)) * (2.0 * std::numbers::pi / w);
        for (int j = 0; j < h; ++j) per_row[j] = std::sin(std::numbers::pi * (j + 0.5) / h) * band;
    }

    double operator[](int row) const { return per_row[row]; }

    double total() const {
        double sum = 0;
        for (double w : per_row) sum += w * width;
        return sum;
    }
};

/// Solid-angle-weighted integral of each channel over the sphere.
inline Rgb integrate_env(const EnvironmentMap& env) {
    const SolidAngleWeights w(env.width());
    Rgb sum{0, 0, 0};
    for (int j = 0; j < env.height(); ++j) {
        Rgb row{0, 0, 0};
        for (int i = 0; i < env.width(); ++i)
            for (int c = 0; c < 3; ++c) row[c] += env.at(i, j, c);
        for (int c = 0; c < 3; ++c) sum[c] += row[c] * w[j];
    }
    return sum;
}

/// Solid-angle-weighted mean radiance per channel.
inline Rgb mean_radiance(const EnvironmentMap& env) {
    Rgb s = integrate_env(env);
    const double total = SolidAngleWeights(env.width()).total();
    for (double& c : s) c /= total;
    return s;
}

// ---------------------------------------------------------------------------
// I/O

inline EnvironmentMap decode_envmap(const std::string& bytes, RasterFormat format) {
    return EnvironmentMap::from_raster(decode_raster(bytes, format));
}

inline EnvironmentMap load_envmap(const std::filesystem::path& path) {
    return EnvironmentMap::from_raster(read_raster(path));
}

inline void save_envmap(const EnvironmentMap& env, const std::filesystem::path& path) {
    write_raster(env.to_raster(), path);
}

// ---------------------------------------------------------------------------
// Sampling and transforms

/// Bilinear lookup with longitude wraparound; colatitude clamps at the
/// first and last row centers.
inline Rgb sample_env(const EnvironmentMap& env, const Vec3& d) {
    const double len = length(d);
    if (!(std::abs(len - 1.0) <= 1e-6)) throw InvalidArgument("sample_env requires a unit direction");
    const UvPosition uv = uv_from_direction(d / len);
    const int w = env.width();
    const int h = env.height();
    double x = uv.u * w - 0.5;
    double y = uv.v * h - 0.5;
    // Snap round-off so pixel-center directions reproduce the pixel exactly.
    if (std::abs(x - std::round(x)) < 1e-9) x = std::round(x);
    if (std::abs(y - std::round(y)) < 1e-9) y = std::round(y);
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));

    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    const double tx = x - fx0;
    const double ty = y - fy0;
    const int i0 = ((static_cast<int>(fx0) % w) + w) % w;
    const int i1 = (i0 + 1) % w;
    const int j0 = static_cast<int>(fy0);
    const int j1 = std::min(j0 + 1, h - 1);

    Rgb out{};
    for (int c = 0; c < 3; ++c) {
        const double top = (1 - tx) * env.at(i0, j0, c) + tx * env.at(i1, j0, c);
        const double bottom = (1 - tx) * env.at(i0, j1, c) + tx * env.at(i1, j1, c);
        out[c] = (1 - ty) * top + ty * bottom;
    }
    return out;
}

/// Circular longitude shift by round(delta_u * W) pixels; content at u moves
/// to u + delta_u. Any finite delta_u is accepted and wrapped.
inline EnvironmentMap rotate_env(const EnvironmentMap& env, double delta_u) {
    if (!std::isfinite(delta_u)) throw InvalidArgument("rotation must be finite");
    const int w = env.width();
    const long long raw = std::llround(delta_u * w);
    const int shift = static_cast<int>(((raw % w) + w) % w);
    EnvironmentMap out(w);
    for (int j = 0; j < env.height(); ++j)
        for (int i = 0; i < w; ++i)
            for (int c = 0; c < 3; ++c) out.at((i + shift) % w, j, c) = env.at(i, j, c);
    return out;
}

inline EnvironmentMap scale_env(const EnvironmentMap& env, double k) {
    if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidArgument("intensity scale must be finite and >= 0");
    EnvironmentMap out = env;
    for (float& v : out.data()) v = static_cast<float>(v * k);
    return out;
}

/// Pixelwise a*E1 + b*E2 for non-negative a, b.
inline EnvironmentMap combine_env(const EnvironmentMap& e1, double a, const EnvironmentMap& e2, double b) {
    if (e1.width() != e2.width()) throw InvalidArgument("environment maps differ in size");
    if (!(a >= 0.0 && b >= 0.0)) throw InvalidArgument("combination weights must be >= 0");
    EnvironmentMap out(e1.width());
    for (std::size_t k = 0; k < out.data().size(); ++k)
        out.data()[k] = static_cast<float>(a * e1.data()[k] + b * e2.data()[k]);
    return out;
}

inline constexpr double kDefaultDiffusionBeta = 0.8;

/// Normalized spherical convolution with K(alpha) = exp(-alpha^2 / (2 beta^2))
/// over every pixel pair, weighted by solid angle:
///   out(p) = sum_q w(q) K(p,q) src(q) / sum_q w(q) K(p,q).
/// `src` holds `channels` interleaved floats per pixel. The kernel depends only
/// on the two rows and the column offset, so it is tabulated once per output
/// row; the sum itself still runs over all pixels.
inline std::vector<float> spherical_blur(const std::vector<float>& src, int channels, int width, double beta) {
    if (!(beta > 0.0) || beta > std::numbers::pi) throw InvalidArgument("blur angle must be in (0, pi]");
    const int w = width;
    const int h = width / 2;
    const SolidAngleWeights weights(w);
    const double inv_two_beta2 = 1.0 / (2.0 * beta * beta);

    std::vector<double> cos_lon(w);
    for (int d = 0; d < w; ++d) cos_lon[d] = std::cos(2.0 * std::numbers::pi * d / w);
    std::vector<double> sin_t(h), cos_t(h);
    for (int j = 0; j < h; ++j) {
        const double theta = std::numbers::pi * (j + 0.5) / h;
        sin_t[j] = std::sin(theta);
        cos_t[j] = std::cos(theta);
    }

    std::vector<float> out(src.size());
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t jp_index) {
        const int jp = static_cast<int>(jp_index);
        std::vector<double> kernel(static_cast<std::size_t>(h) * w);
        double norm = 0;
        for (int jq = 0; jq < h; ++jq) {
            for (int d = 0; d < w; ++d) {
                const double c = std::clamp(cos_t[jp] * cos_t[jq] + sin_t[jp] * sin_t[jq] * cos_lon[d], -1.0, 1.0);
                const double alpha = std::acos(c);
                const double k = weights[jq] * std::exp(-alpha * alpha * inv_two_beta2);
                kernel[static_cast<std::size_t>(jq) * w + d] = k;
                norm += k;
            }
        }
        std::vector<double> acc(channels);
        for (int ip = 0; ip < w; ++ip) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int jq = 0; jq < h; ++jq) {
                const double* krow = kernel.data() + static_cast<std::size_t>(jq) * w;
                const float* srow = src.data() + static_cast<std::size_t>(jq) * w * channels;
                for (int iq = 0; iq < w; ++iq) {
                    const double k = krow[(iq - ip + w) % w];
                    for (int c = 0; c < channels; ++c) acc[c] += k * srow[iq * channels + c];
                }
            }
            float* dst = out.data() + (static_cast<std::size_t>(jp) * w + ip) * channels;
            for (int c = 0; c < channels; ++c) dst[c] = static_cast<float>(acc[c] / norm);
        }
    });
    return out;
}

/// Light diffusion on the sphere: spherical_blur of every RGB channel.
inline EnvironmentMap diffuse_env(const EnvironmentMap& env, double beta) {
    EnvironmentMap out(env.width());
    out.data() = spherical_blur(env.data(), 3, env.width(), beta);
    return out;
}

}  // namespace compose
