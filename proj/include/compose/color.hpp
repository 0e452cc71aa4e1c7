#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace compose {

using Rgb = std::array<double, 3>;

inline constexpr Rgb kRec709Luma{0.2126, 0.7152, 0.0722};

inline double luminance(double r, double g, double b) {
    return kRec709Luma[0] * r + kRec709Luma[1] * g + kRec709Luma[2] * b;
}

inline double srgb_encode(double linear) {
    if (linear <= 0.0031308) return 12.92 * linear;
    return 1.055 * std::pow(linear, 1.0 / 2.4) - 0.055;
}

inline double srgb_decode(double encoded) {
    if (encoded <= 0.04045) return encoded / 12.92;
    return std::pow((encoded + 0.055) / 1.055, 2.4);
}

/// Clamps to [0,1], applies the sRGB curve and quantizes with rounding.
inline std::uint8_t linear_to_srgb8(double linear) {
    const double c = std::clamp(linear, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(srgb_encode(c) * 255.0));
}

/// 256-entry decode table; exact function of the byte value.
inline const std::array<float, 256>& srgb8_to_linear_table() {
    static const std::array<float, 256> table = [] {
        std::array<float, 256> t{};
        for (int i = 0; i < 256; ++i) t[i] = static_cast<float>(srgb_decode(i / 255.0));
        return t;
    }();
    return table;
}

}  // namespace compose
