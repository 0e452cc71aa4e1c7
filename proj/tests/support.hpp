#pragma once

#include <compose/envmap.hpp>
#include <compose/gausslight.hpp>
#include <compose/image.hpp>
#include <compose/olat.hpp>
#include <compose/synthstage.hpp>

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace testing_support {

using namespace compose;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

/// Light drawn from the acceptance ranges: sigma uniform in (0.03, pi/4],
/// gamma log-uniform in [0.5, 8], colatitude in [0.05, 0.95]. When
/// `near_seam` is set, u lies within two 64-pixel columns of the seam.
inline GaussianLight random_light(std::mt19937_64& rng, bool near_seam = false) {
    GaussianLight l;
    l.u = uniform(rng, 0, 1);
    if (near_seam) {
        const double offset = uniform(rng, 0, 2.0 / 64);
        l.u = uniform(rng, 0, 1) < 0.5 ? offset : 1.0 - offset;
        if (l.u >= 1.0) l.u = 0.0;
    }
    l.v = uniform(rng, 0.05, 0.95);
    l.sigma = kSigmaMax - uniform(rng, 0, kSigmaMax - 0.03);
    l.gamma = log_uniform(rng, 0.5, kGammaMax);
    return l;
}

inline double wrapped_distance(double a, double b) {
    const double d = std::abs(a - b);
    return std::min(d, 1.0 - d);
}

inline EnvironmentMap random_env(std::mt19937_64& rng, int width) {
    EnvironmentMap env(width);
    for (int j = 0; j < env.height(); ++j)
        for (int i = 0; i < env.width(); ++i)
            env.set_pixel(i, j, {uniform(rng, 0, 2), uniform(rng, 0, 2), uniform(rng, 0, 2)});
    return env;
}

inline LinearImage random_image(std::mt19937_64& rng, int w, int h, double hi = 1.0) {
    LinearImage img(w, h);
    for (float& v : img.data) v = static_cast<float>(uniform(rng, 0, hi));
    return img;
}

inline EnvironmentMap uniform_env(int width, double value) {
    EnvironmentMap env(width);
    for (int j = 0; j < env.height(); ++j)
        for (int i = 0; i < env.width(); ++i) env.set_pixel(i, j, {value, value, value});
    return env;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string templ = (std::filesystem::temp_directory_path() / "compose-test-XXXXXX").string();
        path_ = mkdtemp(templ.data());
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Small bases shared across tests; building them is the slow part.
inline const OlatBasis& small_basis(const std::string& scene = "sphere_on_plane", int n = 40, int size = 32) {
    static std::map<std::tuple<std::string, int, int>, OlatBasis> cache;
    auto key = std::make_tuple(scene, n, size);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, build_olat_basis(builtin_scene(scene), n, size, size)).first;
    return it->second;
}

inline double max_abs_diff(const LinearImage& a, const LinearImage& b) {
    double m = 0;
    for (std::size_t k = 0; k < a.data.size(); ++k) m = std::max(m, std::abs(static_cast<double>(a.data[k]) - b.data[k]));
    return m;
}

inline double max_abs(const LinearImage& a) {
    double m = 0;
    for (float v : a.data) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
}

}  // namespace testing_support
