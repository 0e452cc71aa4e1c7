#pragma once

// The editable dominant light: an isotropic Gaussian in great-circle angle on
// the environment sphere, with center (u, v), angular spread sigma and peak
// radiance gamma. Synthesis, least-squares fitting with an ambient floor, and
// the normalized 4x32x32 feature-map export live here.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <bit>
#include <cstring>
#include <vector>

#include "envmap.hpp"

namespace compose {

inline constexpr double kSigmaMax = std::numbers::pi / 4.0;
inline constexpr double kGammaMax = 8.0;
// Floors used when a normalized parameter decodes to exactly zero.
inline constexpr double kSigmaMin = 1e-6;
inline constexpr double kGammaMin = 1e-9;

struct GaussianLight {
    double u = 0.5;      // longitude position, [0,1)
    double v = 0.5;      // colatitude position, [0,1]
    double sigma = 0.1;  // angular standard deviation, radians
    double gamma = 1.0;  // peak radiance

    Vec3 direction() const { return direction_from_uv(u, v); }

    bool operator==(const GaussianLight&) const = default;
};

inline void validate_light(const GaussianLight& l) {
    if (!(l.u >= 0.0 && l.u < 1.0)) throw InvalidArgument("light u must be in [0,1)");
    if (!(l.v >= 0.0 && l.v <= 1.0)) throw InvalidArgument("light v must be in [0,1]");
    if (!(l.sigma > 0.0 && l.sigma <= kSigmaMax)) throw InvalidArgument("light sigma must be in (0, pi/4]");
    if (!(l.gamma > 0.0) || !std::isfinite(l.gamma)) throw InvalidArgument("light gamma must be finite and > 0");
}

inline double wrap_unit(double u) {
    double w = u - std::floor(u);
    if (w >= 1.0) w = 0.0;
    return w;
}

/// Unnormalized Gaussian lobe exp(-alpha^2 / (2 sigma^2)).
inline double gaussian_lobe(double alpha, double sigma) { return std::exp(-alpha * alpha / (2.0 * sigma * sigma)); }

/// Solid angle of a unit-peak lobe, 2pi * integral_0^pi lobe(a) sin(a) da,
/// by composite Simpson on 4096 intervals. Past 12 sigma the lobe is below
/// 1e-31, so the range is cut there.
inline double gaussian_solid_angle(double sigma) {
    constexpr int n = 4096;
    const double h = std::min(std::numbers::pi, 12.0 * sigma) / n;
    double sum = 0;
    for (int k = 0; k <= n; ++k) {
        const double a = k * h;
        const double f = gaussian_lobe(a, sigma) * std::sin(a);
        sum += (k == 0 || k == n) ? f : (k % 2 ? 4 * f : 2 * f);
    }
    return 2.0 * std::numbers::pi * sum * h / 3.0;
}

/// Radiant power (radiance integrated over the sphere) of the light.
inline double light_power(const GaussianLight& l) { return l.gamma * gaussian_solid_angle(l.sigma); }

/// Same light with gamma chosen so that light_power equals `power`.
inline GaussianLight with_power(GaussianLight l, double power) {
    l.gamma = power / gaussian_solid_angle(l.sigma);
    return l;
}

/// E(p) = gamma * exp(-alpha(d_p, c)^2 / (2 sigma^2)) with no ambient term.
inline EnvironmentMap synth_gaussian_env(const GaussianLight& light, int width) {
    validate_light(light);
    EnvironmentMap env(width);
    const Vec3 c = light.direction();
    const float gamma = static_cast<float>(light.gamma);
    for (int j = 0; j < env.height(); ++j) {
        for (int i = 0; i < width; ++i) {
            // Scaling the stored unit lobe keeps the map exactly linear in gamma,
            // subnormal tails included.
            const float value = gamma * static_cast<float>(gaussian_lobe(angle_between(env.direction(i, j), c), light.sigma));
            for (int ch = 0; ch < 3; ++ch) env.at(i, j, ch) = value;
        }
    }
    return env;
}

// ---------------------------------------------------------------------------
// Fitting

struct LightFit {
    GaussianLight light;
    Rgb ambient{0, 0, 0};
    double rms_residual = 0;
    double peak_to_mean = 0;
    int iterations = 0;

    bool operator==(const LightFit&) const = default;
};

struct FitOptions {
    double initial_sigma = 0.15;
    double min_peak_to_mean = 1.5;
    int max_iterations = 200;
    double relative_tolerance = 1e-8;
};

namespace detail {

// Parameter layout: longitude, colatitude, log sigma, log gamma, ambient rgb.
using FitParams = Eigen::Matrix<double, 7, 1>;
using FitMatrix = Eigen::Matrix<double, 7, 7>;

struct FitProblem {
    int width;
    int height;
    std::vector<Vec3> directions;
    std::vector<double> weights;  // solid angle per pixel
    std::vector<float> values;    // rgb

    explicit FitProblem(const EnvironmentMap& env)
        : width(env.width()), height(env.height()), values(env.data()) {
        const SolidAngleWeights w(width);
        directions.reserve(env.pixel_count());
        weights.reserve(env.pixel_count());
        for (int j = 0; j < height; ++j)
            for (int i = 0; i < width; ++i) {
                directions.push_back(env.direction(i, j));
                weights.push_back(w[j]);
            }
    }

    double objective(const FitParams& x) const {
        const Vec3 c = spherical_direction(x[1], x[0]);
        const double sigma = std::exp(x[2]);
        const double gamma = std::exp(x[3]);
        double f = 0;
        for (std::size_t p = 0; p < directions.size(); ++p) {
            const double g = gamma * gaussian_lobe(angle_between(directions[p], c), sigma);
            double r2 = 0;
            for (int ch = 0; ch < 3; ++ch) {
                const double r = values[p * 3 + ch] - x[4 + ch] - g;
                r2 += r * r;
            }
            f += weights[p] * r2;
        }
        return f;
    }

    // Accumulates the Gauss-Newton normal equations A^T W A and A^T W r.
    void normal_equations(const FitParams& x, FitMatrix& jtj, FitParams& jtr) const {
        jtj.setZero();
        jtr.setZero();
        const double phi = x[0];
        const double theta = x[1];
        const Vec3 c = spherical_direction(theta, phi);
        const Vec3 dc_dphi{-std::sin(theta) * std::sin(phi), 0.0, std::sin(theta) * std::cos(phi)};
        const Vec3 dc_dtheta{std::cos(theta) * std::cos(phi), -std::sin(theta), std::cos(theta) * std::sin(phi)};
        const double sigma = std::exp(x[2]);
        const double gamma = std::exp(x[3]);
        const double inv_s2 = 1.0 / (sigma * sigma);

        Eigen::Matrix4d geo = Eigen::Matrix4d::Zero();
        Eigen::Matrix<double, 4, 3> cross_terms = Eigen::Matrix<double, 4, 3>::Zero();
        Eigen::Vector4d geo_rhs = Eigen::Vector4d::Zero();
        double weight_sum = 0;
        Rgb amb_rhs{0, 0, 0};

        for (std::size_t p = 0; p < directions.size(); ++p) {
            const Vec3& d = directions[p];
            const double sin_a = length(cross(d, c));
            const double alpha = std::atan2(sin_a, dot(d, c));
            const double g = gamma * gaussian_lobe(alpha, sigma);
            // d(alpha^2)/dx = -2 (alpha / sin alpha) (d . dc/dx); the ratio tends to 1 at alpha = 0.
            const double ratio = sin_a > 1e-12 ? alpha / std::max(sin_a, 1e-6) : 1.0;
            const double da2_dphi = -2.0 * ratio * dot(d, dc_dphi);
            const double da2_dtheta = -2.0 * ratio * dot(d, dc_dtheta);
            const Eigen::Vector4d q{-0.5 * g * inv_s2 * da2_dphi, -0.5 * g * inv_s2 * da2_dtheta,
                                    g * alpha * alpha * inv_s2, g};
            const double w = weights[p];
            double r_sum = 0;
            for (int ch = 0; ch < 3; ++ch) {
                const double r = values[p * 3 + ch] - x[4 + ch] - g;
                r_sum += r;
                amb_rhs[ch] += w * r;
            }
            geo.noalias() += (3.0 * w) * q * q.transpose();
            for (int ch = 0; ch < 3; ++ch) cross_terms.col(ch) += w * q;
            geo_rhs += (w * r_sum) * q;
            weight_sum += w;
        }
        jtj.topLeftCorner<4, 4>() = geo;
        jtj.topRightCorner<4, 3>() = cross_terms;
        jtj.bottomLeftCorner<3, 4>() = cross_terms.transpose();
        for (int ch = 0; ch < 3; ++ch) {
            jtj(4 + ch, 4 + ch) = weight_sum;
            jtr[4 + ch] = amb_rhs[ch];
        }
        jtr.head<4>() = geo_rhs;
    }
};

// Keeps parameters inside the model's domain after a step.
inline void project_params(FitParams& x) {
    double theta = x[1];
    double phi = x[0];
    if (theta < 0.0) {
        theta = -theta;
        phi += std::numbers::pi;
    }
    if (theta > std::numbers::pi) {
        theta = 2.0 * std::numbers::pi - theta;
        phi += std::numbers::pi;
    }
    phi = std::remainder(phi, 2.0 * std::numbers::pi);
    x[0] = phi;
    x[1] = theta;
    x[2] = std::clamp(x[2], std::log(kSigmaMin), std::log(kSigmaMax));
    for (int ch = 0; ch < 3; ++ch) x[4 + ch] = std::max(x[4 + ch], 0.0);
}

inline double median(std::vector<double> values) {
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        const double lower = *std::max_element(values.begin(), values.begin() + mid);
        m = 0.5 * (m + lower);
    }
    return m;
}

}  // namespace detail

/// Ratio of the peak luminance to the solid-angle-weighted mean luminance.
inline double peak_to_mean_ratio(const EnvironmentMap& env) {
    const SolidAngleWeights w(env.width());
    double peak = 0;
    double mean = 0;
    for (int j = 0; j < env.height(); ++j)
        for (int i = 0; i < env.width(); ++i) {
            const double l = luminance(env.at(i, j, 0), env.at(i, j, 1), env.at(i, j, 2));
            peak = std::max(peak, l);
            mean += w[j] * l;
        }
    mean /= w.total();
    return mean > 0 ? peak / mean : 0.0;
}

/// Least-squares decomposition of a map into a per-channel ambient floor and
/// one Gaussian light, minimizing the solid-angle-weighted RGB residual with
/// damped Gauss-Newton. Deterministic for a given input.
inline LightFit fit_gaussian(const EnvironmentMap& env, const FitOptions& options = {}) {
    const int w = env.width();
    const int h = env.height();
    std::vector<float> luma(env.pixel_count());
    std::vector<double> luma_d(env.pixel_count());
    double peak = 0;
    for (std::size_t p = 0; p < env.pixel_count(); ++p) {
        const double l = luminance(env.data()[p * 3], env.data()[p * 3 + 1], env.data()[p * 3 + 2]);
        luma[p] = static_cast<float>(l);
        luma_d[p] = l;
        peak = std::max(peak, l);
    }
    if (!(peak > 0.0)) throw EmptyEnvironment("environment map is entirely black");
    const double ratio = peak_to_mean_ratio(env);
    if (ratio < options.min_peak_to_mean)
        throw NoDominantLight("peak-to-mean ratio " + std::to_string(ratio) + " is below " +
                              std::to_string(options.min_peak_to_mean));

    // Center from the argmax of the luminance blurred over three pixel rows.
    const std::vector<float> blurred = spherical_blur(luma, 1, w, 3.0 * std::numbers::pi / h);
    const std::size_t best = static_cast<std::size_t>(std::max_element(blurred.begin(), blurred.end()) - blurred.begin());
    const int bi = static_cast<int>(best % w);
    const int bj = static_cast<int>(best / w);

    detail::FitParams x;
    x[0] = env.longitude(bi);
    x[1] = env.colatitude(bj);
    x[2] = std::log(options.initial_sigma);
    const double med = detail::median(luma_d);
    x[3] = std::log(std::max(peak - med, 1e-12 * peak));
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<double> channel(env.pixel_count());
        for (std::size_t p = 0; p < env.pixel_count(); ++p) channel[p] = env.data()[p * 3 + ch];
        x[4 + ch] = detail::median(std::move(channel));
    }

    const detail::FitProblem problem(env);
    double f = problem.objective(x);
    const double f0 = f;
    double lambda = 1e-3;
    int iter = 0;
    detail::FitMatrix jtj;
    detail::FitParams jtr;
    bool fresh = true;
    for (; iter < options.max_iterations; ++iter) {
        if (fresh) problem.normal_equations(x, jtj, jtr);
        detail::FitMatrix damped = jtj;
        for (int k = 0; k < 7; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-30);
        const detail::FitParams step = damped.ldlt().solve(jtr);
        detail::FitParams candidate = x + step;
        detail::project_params(candidate);
        const double fc = problem.objective(candidate);
        if (std::isfinite(fc) && fc < f) {
            const double change = (f - fc) / f;
            x = candidate;
            f = fc;
            lambda /= 3.0;
            fresh = true;
            if (change < options.relative_tolerance || f <= 1e-28 * f0) {
                ++iter;
                break;
            }
        } else {
            lambda *= 10.0;
            fresh = false;
            if (lambda > 1e16) break;
        }
    }

    LightFit fit;
    fit.light.u = wrap_unit((x[0] + std::numbers::pi) / (2.0 * std::numbers::pi));
    fit.light.v = std::clamp(x[1] / std::numbers::pi, 0.0, 1.0);
    fit.light.sigma = std::min(std::exp(x[2]), kSigmaMax);
    fit.light.gamma = std::exp(x[3]);
    for (int ch = 0; ch < 3; ++ch) fit.ambient[ch] = x[4 + ch];
    fit.rms_residual = std::sqrt(f / (3.0 * SolidAngleWeights(w).total()));
    fit.peak_to_mean = ratio;
    fit.iterations = iter;
    return fit;
}

// ---------------------------------------------------------------------------
// Editing

/// Parameter edits applied to an existing light. Absolute values replace the
/// corresponding parameter first; du then shifts longitude with wraparound and
/// the scales multiply. sigma is clamped to (0, sigma_max], gamma kept > 0.
struct LightEdit {
    std::optional<double> u;
    std::optional<double> v;
    std::optional<double> sigma;
    std::optional<double> gamma;
    double du = 0.0;
    double sigma_scale = 1.0;
    double gamma_scale = 1.0;
};

inline GaussianLight edit_light(GaussianLight light, const LightEdit& e) {
    if (e.u) light.u = *e.u;
    if (e.v) light.v = *e.v;
    if (e.sigma) light.sigma = *e.sigma;
    if (e.gamma) light.gamma = *e.gamma;
    light.u = wrap_unit(light.u + e.du);
    light.v = std::clamp(light.v, 0.0, 1.0);
    light.sigma = std::clamp(light.sigma * e.sigma_scale, kSigmaMin, kSigmaMax);
    light.gamma = std::max(light.gamma * e.gamma_scale, kGammaMin);
    return light;
}

// ---------------------------------------------------------------------------
// Feature map

inline constexpr int kFeatureSize = 32;
inline constexpr int kFeaturePlanes = 4;

/// Four constant 32x32 planes holding normalized (x, y, sigma, gamma).
struct LightFeatureMap {
    std::vector<double> values = std::vector<double>(kFeaturePlanes * kFeatureSize * kFeatureSize, 0.0);

    double at(int plane, int row, int col) const {
        return values[(static_cast<std::size_t>(plane) * kFeatureSize + row) * kFeatureSize + col];
    }
    std::span<const double> plane(int k) const {
        return {values.data() + static_cast<std::size_t>(k) * kFeatureSize * kFeatureSize,
                static_cast<std::size_t>(kFeatureSize) * kFeatureSize};
    }
};

inline std::array<double, 4> normalized_parameters(const GaussianLight& l) {
    return {l.u, l.v, l.sigma / kSigmaMax, std::min(l.gamma / kGammaMax, 1.0)};
}

inline LightFeatureMap to_feature_map(const GaussianLight& light) {
    validate_light(light);
    const auto params = normalized_parameters(light);
    LightFeatureMap fm;
    const std::size_t plane_size = static_cast<std::size_t>(kFeatureSize) * kFeatureSize;
    for (int k = 0; k < kFeaturePlanes; ++k)
        std::fill_n(fm.values.begin() + k * plane_size, plane_size, params[k]);
    return fm;
}

inline GaussianLight from_feature_map(const LightFeatureMap& fm) {
    if (fm.values.size() != static_cast<std::size_t>(kFeaturePlanes) * kFeatureSize * kFeatureSize)
        throw InvalidArgument("feature map must be 4x32x32");
    std::array<double, 4> p{};
    for (int k = 0; k < kFeaturePlanes; ++k) {
        const auto plane = fm.plane(k);
        const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
        if (*hi - *lo > 1e-6) throw InvalidArgument("feature map plane " + std::to_string(k) + " is not constant");
        if (!(*lo >= 0.0 && *hi <= 1.0)) throw InvalidArgument("feature map values must lie in [0,1]");
        p[k] = plane[0];
    }
    GaussianLight l;
    l.u = wrap_unit(p[0]);
    l.v = p[1];
    l.sigma = p[2] > 0 ? p[2] * kSigmaMax : kSigmaMin;
    l.gamma = p[3] > 0 ? p[3] * kGammaMax : kGammaMin;
    return l;
}

inline nlohmann::json light_to_json(const GaussianLight& l) {
    return {{"u", l.u}, {"v", l.v}, {"sigma", l.sigma}, {"gamma", l.gamma}};
}

inline GaussianLight light_from_json(const nlohmann::json& j) {
    GaussianLight l;
    l.u = j.at("u").get<double>();
    l.v = j.at("v").get<double>();
    l.sigma = j.at("sigma").get<double>();
    l.gamma = j.at("gamma").get<double>();
    return l;
}

inline nlohmann::json fit_to_json(const LightFit& fit) {
    nlohmann::json j = light_to_json(fit.light);
    j["ambient"] = {fit.ambient[0], fit.ambient[1], fit.ambient[2]};
    j["rms_residual"] = fit.rms_residual;
    j["peak_to_mean"] = fit.peak_to_mean;
    return j;
}

/// Writes raw little-endian float32 planes (C order, 4x32x32) to `path` and a
/// JSON sidecar at `path` + ".json" with the normalization constants and the
/// unnormalized light.
inline void write_feature_map(const LightFeatureMap& fm, const GaussianLight& light, const std::filesystem::path& path) {
    std::string bytes;
    bytes.reserve(fm.values.size() * 4);
    for (double v : fm.values) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        char buf[4];
        std::memcpy(buf, &bits, 4);
        bytes.append(buf, 4);
    }
    write_file_bytes(path, bytes);
    nlohmann::json manifest = {{"shape", {kFeaturePlanes, kFeatureSize, kFeatureSize}},
                               {"dtype", "float32-le"},
                               {"planes", {"x", "y", "sigma", "gamma"}},
                               {"sigma_max", kSigmaMax},
                               {"gamma_max", kGammaMax},
                               {"light", light_to_json(light)}};
    write_file_bytes(std::filesystem::path(path.string() + ".json"), manifest.dump(2) + "\n");
}

inline LightFeatureMap read_feature_map(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    LightFeatureMap fm;
    if (bytes.size() != fm.values.size() * 4) throw FormatError("feature map file must hold 4x32x32 float32 values");
    for (std::size_t k = 0; k < fm.values.size(); ++k) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + k * 4, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        fm.values[k] = std::bit_cast<float>(bits);
    }
    return fm;
}

}  // namespace compose
