#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "color.hpp"
#include "error.hpp"
#include "image.hpp"

namespace compose {

namespace detail {

inline void require_same_size(const LinearImage& a, const LinearImage& b) {
    if (!a.same_size(b)) throw InvalidArgument("images differ in size");
}

inline void require_mask_size(const LinearImage& img, const Mask& m) {
    if (m.width != img.width || m.height != img.height) throw InvalidArgument("mask does not match image size");
}

template <typename Fn>
double masked_channel_mean(const LinearImage& a, const LinearImage& b, const Mask* mask, Fn&& per_value) {
    require_same_size(a, b);
    if (mask) require_mask_size(a, *mask);
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (mask && !mask->bits[p]) continue;
        for (int c = 0; c < 3; ++c) sum += per_value(static_cast<double>(a.data[p * 3 + c]) - b.data[p * 3 + c]);
        n += 3;
    }
    if (n == 0) throw InvalidArgument("mask selects no pixels");
    return sum / static_cast<double>(n);
}

}  // namespace detail

/// Mean absolute channel difference over the mask (or every pixel).
inline double mae(const LinearImage& a, const LinearImage& b, const Mask* mask = nullptr) {
    return detail::masked_channel_mean(a, b, mask, [](double d) { return std::abs(d); });
}

inline double mse(const LinearImage& a, const LinearImage& b, const Mask* mask = nullptr) {
    return detail::masked_channel_mean(a, b, mask, [](double d) { return d * d; });
}

// ---------------------------------------------------------------------------
// SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic
// range 1. Inputs are clamped to [0,1]; only windows that fit entirely inside
// the image contribute, and the per-channel means are averaged.

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

inline std::array<double, kSsimWindow> ssim_kernel_1d() {
    std::array<double, kSsimWindow> k{};
    double sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double x = i - kSsimWindow / 2;
        k[i] = std::exp(-x * x / (2 * kSsimSigma * kSsimSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

namespace detail {

inline std::vector<double> clamped_channel(const LinearImage& img, int c) {
    std::vector<double> out(img.pixel_count());
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = std::clamp(static_cast<double>(img.data[p * 3 + c]), 0.0, 1.0);
    return out;
}

// Separable "valid" filtering: output is (w - 10) x (h - 10).
inline std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
    const auto k = ssim_kernel_1d();
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < kSsimWindow; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < kSsimWindow; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

inline double ssim_channel(const std::vector<double>& a, const std::vector<double>& b, int w, int h) {
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t p = 0; p < a.size(); ++p) {
        aa[p] = a[p] * a[p];
        bb[p] = b[p] * b[p];
        ab[p] = a[p] * b[p];
    }
    const auto mu_a = filter_valid(a, w, h);
    const auto mu_b = filter_valid(b, w, h);
    const auto e_aa = filter_valid(aa, w, h);
    const auto e_bb = filter_valid(bb, w, h);
    const auto e_ab = filter_valid(ab, w, h);
    double sum = 0;
    for (std::size_t p = 0; p < mu_a.size(); ++p) {
        const double var_a = e_aa[p] - mu_a[p] * mu_a[p];
        const double var_b = e_bb[p] - mu_b[p] * mu_b[p];
        const double cov = e_ab[p] - mu_a[p] * mu_b[p];
        sum += ((2 * mu_a[p] * mu_b[p] + kSsimC1) * (2 * cov + kSsimC2)) /
               ((mu_a[p] * mu_a[p] + mu_b[p] * mu_b[p] + kSsimC1) * (var_a + var_b + kSsimC2));
    }
    return sum / static_cast<double>(mu_a.size());
}

}  // namespace detail

inline double ssim(const LinearImage& a, const LinearImage& b) {
    detail::require_same_size(a, b);
    if (a.width < kSsimWindow || a.height < kSsimWindow) throw InvalidArgument("SSIM needs images of at least 11x11");
    double total = 0;
    for (int c = 0; c < 3; ++c)
        total += detail::ssim_channel(detail::clamped_channel(a, c), detail::clamped_channel(b, c), a.width, a.height);
    return total / 3.0;
}

struct MetricReport {
    double mae = 0;
    double mse = 0;
    double ssim = 0;
    std::optional<double> masked_mae;
    std::optional<double> masked_mse;
};

inline MetricReport compare_images(const LinearImage& a, const LinearImage& b, const Mask* mask = nullptr) {
    MetricReport r;
    r.mae = mae(a, b);
    r.mse = mse(a, b);
    r.ssim = ssim(a, b);
    if (mask) {
        r.masked_mae = mae(a, b, mask);
        r.masked_mse = mse(a, b, mask);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Shadow measurements

struct ShadowStats {
    double umbra_mean_luma = 0;
    double edge_max_grad = 0;
};

/// Rec.709 luminance gradient magnitude by central differences (one-sided at
/// the border).
inline double luminance_gradient(const LinearImage& img, int x, int y) {
    auto lum = [&](int px, int py) { return pixel_luminance(img, px, py); };
    const int x0 = std::max(x - 1, 0), x1 = std::min(x + 1, img.width - 1);
    const int y0 = std::max(y - 1, 0), y1 = std::min(y + 1, img.height - 1);
    const double gx = x1 > x0 ? (lum(x1, y) - lum(x0, y)) / (x1 - x0) : 0.0;
    const double gy = y1 > y0 ? (lum(x, y1) - lum(x, y0)) / (y1 - y0) : 0.0;
    return std::hypot(gx, gy);
}

inline ShadowStats shadow_stats(const LinearImage& img, const Mask& umbra, const Mask& edge_band) {
    detail::require_mask_size(img, umbra);
    detail::require_mask_size(img, edge_band);
    if (umbra.empty()) throw InvalidArgument("umbra mask is empty");
    if (edge_band.empty()) throw InvalidArgument("edge band mask is empty");
    ShadowStats s;
    double sum = 0;
    std::size_t n = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (umbra(x, y)) {
                sum += pixel_luminance(img, x, y);
                ++n;
            }
            if (edge_band(x, y)) s.edge_max_grad = std::max(s.edge_max_grad, luminance_gradient(img, x, y));
        }
    s.umbra_mean_luma = sum / static_cast<double>(n);
    return s;
}

// ---------------------------------------------------------------------------
// Mask morphology (square structuring element)

inline Mask dilate(const Mask& m, int radius) {
    Mask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool any = false;
            for (int dy = -radius; dy <= radius && !any; ++dy)
                for (int dx = -radius; dx <= radius && !any; ++dx) {
                    const int px = x + dx, py = y + dy;
                    if (px >= 0 && py >= 0 && px < m.width && py < m.height && m(px, py)) any = true;
                }
            out.set(x, y, any);
        }
    return out;
}

/// Pixels outside the image count as unset.
inline Mask erode(const Mask& m, int radius) {
    Mask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool all = true;
            for (int dy = -radius; dy <= radius && all; ++dy)
                for (int dx = -radius; dx <= radius && all; ++dx) {
                    const int px = x + dx, py = y + dy;
                    if (px < 0 || py < 0 || px >= m.width || py >= m.height || !m(px, py)) all = false;
                }
            out.set(x, y, all);
        }
    return out;
}

/// Band of `radius` pixels on both sides of the umbra boundary, restricted to
/// the interior of `surface` so silhouette edges never enter the band.
inline Mask shadow_edge_band(const Mask& umbra, const Mask& surface, int radius) {
    const Mask outer = dilate(umbra, radius);
    const Mask inner = erode(umbra, radius);
    const Mask interior = erode(surface, 1);
    Mask band(umbra.width, umbra.height);
    for (std::size_t p = 0; p < band.bits.size(); ++p)
        band.bits[p] = outer.bits[p] && !inner.bits[p] && interior.bits[p];
    return band;
}

}  // namespace compose
