#include <compose/environments.hpp>
#include <compose/gausslight.hpp>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace compose;
using namespace testing_support;

TEST(Synth, PeakAtCenterPixel) {
    std::mt19937_64 rng(20);
    for (int k = 0; k < 20; ++k) {
        GaussianLight l = random_light(rng);
        l.sigma = std::min(l.sigma, 0.3);
        const EnvironmentMap env = synth_gaussian_env(l, 64);
        const auto it = std::max_element(env.data().begin(), env.data().end());
        const std::size_t p = static_cast<std::size_t>(it - env.data().begin()) / 3;
        const int i = static_cast<int>(p % 64), j = static_cast<int>(p / 64);
        // The containing pixel, or a neighbour when the center is near a pixel edge.
        const double ci = l.u * 64, cj = l.v * 32;
        double di = std::abs(i + 0.5 - ci);
        di = std::min(di, 64 - di);
        EXPECT_LE(di, 1.0);
        EXPECT_LE(std::abs(j + 0.5 - cj), 1.0);
        // Among pixel centers the maximum must be the one closest in angle.
        double best = 1e9;
        for (int jj = 0; jj < 32; ++jj)
            for (int ii = 0; ii < 64; ++ii) best = std::min(best, angle_between(env.direction(ii, jj), l.direction()));
        EXPECT_NEAR(angle_between(env.direction(i, j), l.direction()), best, 1e-12);
    }
}

TEST(Synth, LinearInGamma) {
    const EnvironmentMap one = synth_gaussian_env({0.3, 0.6, 0.2, 1.0}, 64);
    const EnvironmentMap two = synth_gaussian_env({0.3, 0.6, 0.2, 2.0}, 64);
    for (std::size_t k = 0; k < one.data().size(); ++k) EXPECT_EQ(two.data()[k], 2.0f * one.data()[k]);
}

TEST(Synth, ValueOneSigmaAway) {
    // Place a pixel center exactly sigma away along the meridian.
    const EnvironmentMap probe(64);
    const int i = 20, j = 12;
    const double sigma = 0.25;
    const double theta_c = probe.colatitude(j) - sigma;
    const GaussianLight l{(probe.longitude(i) + std::numbers::pi) / (2 * std::numbers::pi), theta_c / std::numbers::pi, sigma, 3.0};
    const EnvironmentMap env = synth_gaussian_env(l, 64);
    EXPECT_NEAR(env.at(i, j, 0), 3.0 * std::exp(-0.5), 0.01 * 3.0 * std::exp(-0.5));
}

TEST(Synth, MonotoneInAngularDistance) {
    const GaussianLight l{0.7, 0.4, 0.3, 2.0};
    const EnvironmentMap env = synth_gaussian_env(l, 64);
    std::vector<std::pair<double, float>> samples;
    for (int j = 0; j < 32; ++j)
        for (int i = 0; i < 64; ++i) samples.emplace_back(angle_between(env.direction(i, j), l.direction()), env.at(i, j, 0));
    std::sort(samples.begin(), samples.end());
    for (std::size_t k = 1; k < samples.size(); ++k) EXPECT_LE(samples[k].second, samples[k - 1].second);
}

TEST(Synth, RejectsInvalidLight) {
    EXPECT_THROW(synth_gaussian_env({1.0, 0.5, 0.1, 1}, 64), InvalidArgument);
    EXPECT_THROW(synth_gaussian_env({0.5, 0.5, 0.0, 1}, 64), InvalidArgument);
    EXPECT_THROW(synth_gaussian_env({0.5, 0.5, 1.0, 1}, 64), InvalidArgument);
    EXPECT_THROW(synth_gaussian_env({0.5, 0.5, 0.1, 0}, 64), InvalidArgument);
}

TEST(SolidAngle, SmallSigmaLimit) {
    // Small-sigma series of 2 pi * integral exp(-a^2 / 2s^2) sin(a) da:
    // 2 pi s^2 (1 - s^2/3 + s^4/15 - ...).
    const double s = 0.02;
    const double series = 2 * std::numbers::pi * s * s * (1 - s * s / 3 + std::pow(s, 4) / 15);
    EXPECT_NEAR(gaussian_solid_angle(s), series, 1e-8 * series);
    const GaussianLight l = with_power({0.1, 0.5, 0.3, 1.0}, 2.5);
    EXPECT_NEAR(light_power(l), 2.5, 1e-12);
}

TEST(SolidAngle, MatchesPixelQuadrature) {
    const GaussianLight l{0.4, 0.5, 0.4, 1.0};
    const EnvironmentMap env = synth_gaussian_env(l, 512);
    EXPECT_NEAR(integrate_env(env)[0], light_power(l), 1e-3 * light_power(l));
}

TEST(Fit, RecoversRandomLights) {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 20; ++k) {
        const GaussianLight l = random_light(rng, k < 4);
        const LightFit f = fit_gaussian(synth_gaussian_env(l, 64));
        EXPECT_LE(wrapped_distance(f.light.u, l.u), 1.0 / 64) << k;
        EXPECT_LE(std::abs(f.light.v - l.v), 1.0 / 64) << k;
        EXPECT_LE(std::abs(f.light.sigma / l.sigma - 1), 0.05) << k;
        EXPECT_LE(std::abs(f.light.gamma / l.gamma - 1), 0.02) << k;
        for (double a : f.ambient) EXPECT_LE(std::abs(a), 0.01) << k;
    }
}

TEST(Fit, RecoversAmbientFloor) {
    const GaussianLight l{0.2, 0.35, 0.12, 5.0};
    EnvironmentMap env = synth_gaussian_env(l, 64);
    const Rgb floor{0.2, 0.3, 0.4};
    for (int j = 0; j < 32; ++j)
        for (int i = 0; i < 64; ++i)
            for (int c = 0; c < 3; ++c) env.at(i, j, c) += static_cast<float>(floor[c]);
    const LightFit f = fit_gaussian(env);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(f.ambient[c], floor[c], 1e-4);
    EXPECT_NEAR(f.light.sigma, l.sigma, 1e-4);
    EXPECT_NEAR(f.light.gamma, l.gamma, 1e-3);
}

TEST(Fit, UniformMapHasNoDominantLight) {
    EXPECT_THROW(fit_gaussian(uniform_env(64, 0.3)), NoDominantLight);
    EXPECT_THROW(fit_gaussian(builtin_environment("overcast")), NoDominantLight);
    EXPECT_THROW(fit_gaussian(EnvironmentMap(64)), EmptyEnvironment);
}

TEST(Fit, NoDominantLightIsADomainError) {
    try {
        fit_gaussian(uniform_env(64, 0.3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_TRUE(e.is_domain());
        EXPECT_EQ(e.name(), "NoDominantLight");
    }
}

TEST(Fit, Deterministic) {
    const EnvironmentMap env = builtin_environment("sun_sky");
    EXPECT_EQ(fit_gaussian(env), fit_gaussian(env));
}

TEST(Fit, BuiltinEnvironmentsFindTheirLights) {
    const LightFit sun = fit_gaussian(builtin_environment("sun_sky"));
    EXPECT_LE(wrapped_distance(sun.light.u, 0.30), 1.0 / 64);
    EXPECT_NEAR(sun.light.v, 0.30, 1.0 / 64);
    const LightFit key = fit_gaussian(builtin_environment("studio_key"));
    EXPECT_LE(wrapped_distance(key.light.u, 0.62), 1.0 / 64);
    EXPECT_NEAR(key.light.v, 0.25, 1.0 / 64);
}

TEST(Fit, RotationEquivariance) {
    std::mt19937_64 rng(22);
    for (int k = 0; k < 5; ++k) {
        const EnvironmentMap env = synth_gaussian_env(random_light(rng), 64);
        const double delta = std::floor(uniform(rng, 0, 64)) / 64;
        const LightFit a = fit_gaussian(env);
        const LightFit b = fit_gaussian(rotate_env(env, delta));
        EXPECT_LE(wrapped_distance(b.light.u, wrap_unit(a.light.u + delta)), 1.0 / 64);
        EXPECT_NEAR(b.light.sigma / a.light.sigma, 1.0, 0.01);
        EXPECT_NEAR(b.light.gamma / a.light.gamma, 1.0, 0.01);
    }
}

TEST(Fit, ScaleCovariance) {
    const EnvironmentMap env = builtin_environment("sun_sky");
    const LightFit a = fit_gaussian(env);
    for (double k : {0.25, 3.0}) {
        const LightFit b = fit_gaussian(scale_env(env, k));
        EXPECT_NEAR(b.light.gamma, k * a.light.gamma, 0.01 * k * a.light.gamma);
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(b.ambient[c], k * a.ambient[c], 0.01 * k * a.ambient[c] + 1e-9);
        EXPECT_NEAR(b.light.sigma, a.light.sigma, 0.01 * a.light.sigma);
        EXPECT_LE(wrapped_distance(b.light.u, a.light.u), 1.0 / 64);
        EXPECT_NEAR(b.light.v, a.light.v, 1.0 / 64);
    }
}

TEST(FeatureMap, MaxLightNormalizesToOnes) {
    const LightFeatureMap fm = to_feature_map({0.5, 0.5, kSigmaMax, kGammaMax});
    for (int k = 0; k < 4; ++k)
        for (double v : fm.plane(k)) EXPECT_EQ(v, (std::array<double, 4>{0.5, 0.5, 1.0, 1.0}[k]));
}

TEST(FeatureMap, GammaAboveMaxClamps) {
    const LightFeatureMap fm = to_feature_map({0.1, 0.2, 0.3, 2 * kGammaMax});
    EXPECT_EQ(fm.at(3, 7, 9), 1.0);
    EXPECT_EQ(from_feature_map(fm).gamma, kGammaMax);
}

TEST(FeatureMap, RoundTripIsExact) {
    std::mt19937_64 rng(23);
    for (int k = 0; k < 100; ++k) {
        const GaussianLight l = random_light(rng, k % 4 == 0);
        const GaussianLight back = from_feature_map(to_feature_map(l));
        EXPECT_NEAR(back.u, l.u, 1e-15);
        EXPECT_NEAR(back.v, l.v, 1e-15);
        EXPECT_NEAR(back.sigma, l.sigma, 1e-15);
        EXPECT_NEAR(back.gamma, l.gamma, 1e-14);
    }
}

TEST(FeatureMap, ZeroPlanesDecodeToFloors) {
    LightFeatureMap fm;
    const GaussianLight l = from_feature_map(fm);
    EXPECT_EQ(l.u, 0.0);
    EXPECT_EQ(l.v, 0.0);
    EXPECT_EQ(l.sigma, kSigmaMin);
    EXPECT_EQ(l.gamma, kGammaMin);
}

TEST(FeatureMap, RejectsNonConstantOrOutOfRange) {
    LightFeatureMap fm = to_feature_map({0.5, 0.5, 0.1, 1.0});
    fm.values[kFeatureSize * kFeatureSize + 3] = 0.9;
    EXPECT_THROW(from_feature_map(fm), InvalidArgument);
    LightFeatureMap big = to_feature_map({0.5, 0.5, 0.1, 1.0});
    std::fill(big.values.begin(), big.values.begin() + kFeatureSize * kFeatureSize, 1.5);
    EXPECT_THROW(from_feature_map(big), InvalidArgument);
}

TEST(FeatureMap, FileRoundTrip) {
    TempDir dir;
    const GaussianLight l{0.123, 0.456, 0.2, 3.3};
    write_feature_map(to_feature_map(l), l, dir / "light.bin");
    EXPECT_EQ(std::filesystem::file_size(dir / "light.bin"), 4u * 32 * 32 * 4);
    const GaussianLight back = from_feature_map(read_feature_map(dir / "light.bin"));
    EXPECT_NEAR(back.u, l.u, 1e-6);
    EXPECT_NEAR(back.v, l.v, 1e-6);
    EXPECT_NEAR(back.sigma, l.sigma, 1e-6);
    EXPECT_NEAR(back.gamma, l.gamma, 1e-5);
    const auto meta = nlohmann::json::parse(read_file_bytes(dir / "light.bin.json"));
    EXPECT_EQ(light_from_json(meta["light"]), l);
    EXPECT_EQ(meta["shape"], nlohmann::json({4, 32, 32}));
}

TEST(EditLight, NeutralEditIsIdentity) {
    const GaussianLight l{0.3, 0.4, 0.2, 2.0};
    EXPECT_EQ(edit_light(l, {}), l);
}

TEST(EditLight, SigmaScaleClampsAtMax) {
    const GaussianLight l{0.3, 0.4, 0.2, 2.0};
    LightEdit e;
    e.sigma_scale = 2;
    EXPECT_DOUBLE_EQ(edit_light(l, e).sigma, 0.4);
    e.sigma_scale = 10;
    EXPECT_EQ(edit_light(l, e).sigma, kSigmaMax);
}

TEST(EditLight, QuarterShiftsCompose) {
    const GaussianLight l{0.3, 0.4, 0.2, 2.0};
    LightEdit e;
    e.du = 0.25;
    GaussianLight x = l;
    for (int k = 0; k < 4; ++k) x = edit_light(x, e);
    EXPECT_NEAR(x.u, l.u, 1e-12);
}

TEST(EditLight, AbsoluteOverridesApplyBeforeScales) {
    LightEdit e;
    e.sigma = 0.1;
    e.sigma_scale = 3;
    e.u = 0.9;
    e.du = 0.2;
    const GaussianLight x = edit_light({0.3, 0.4, 0.2, 2.0}, e);
    EXPECT_NEAR(x.sigma, 0.3, 1e-12);
    EXPECT_NEAR(x.u, 0.1, 1e-12);
}
