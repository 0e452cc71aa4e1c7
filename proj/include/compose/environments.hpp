#pragma once

// Procedural environment maps used as sources by the CLI, dataset recipes and
// the HTTP service ("builtin:<name>").

#include <cmath>
#include <string>
#include <vector>

#include "envmap.hpp"
#include "gausslight.hpp"

namespace compose {

inline std::vector<std::string> builtin_environment_names() { return {"sun_sky", "studio_key", "overcast"}; }

/// sun_sky: a warm sun over a blue gradient sky and dim ground.
/// studio_key: a broad key light over a gray ambient floor.
/// overcast: a smooth sky gradient with no dominant light.
inline EnvironmentMap builtin_environment(const std::string& name, int width = 64) {
    EnvironmentMap env(width);
    auto sky = [&](Rgb zenith, Rgb horizon, Rgb ground) {
        for (int j = 0; j < env.height(); ++j) {
            const double up = std::cos(env.colatitude(j));
            for (int i = 0; i < width; ++i) {
                Rgb c{};
                for (int ch = 0; ch < 3; ++ch)
                    c[ch] = up >= 0 ? horizon[ch] + (zenith[ch] - horizon[ch]) * up : ground[ch];
                env.set_pixel(i, j, c);
            }
        }
    };
    auto add_light = [&](const GaussianLight& l, Rgb tint) {
        const Vec3 c = l.direction();
        for (int j = 0; j < env.height(); ++j)
            for (int i = 0; i < width; ++i) {
                const double g = l.gamma * gaussian_lobe(angle_between(env.direction(i, j), c), l.sigma);
                for (int ch = 0; ch < 3; ++ch) env.at(i, j, ch) += static_cast<float>(g * tint[ch]);
            }
    };
    if (name == "sun_sky") {
        sky({0.10, 0.16, 0.30}, {0.22, 0.25, 0.30}, {0.06, 0.05, 0.04});
        add_light({0.30, 0.30, 0.08, 6.0}, {1.0, 0.95, 0.85});
    } else if (name == "studio_key") {
        sky({0.12, 0.12, 0.12}, {0.10, 0.10, 0.10}, {0.05, 0.05, 0.05});
        add_light({0.62, 0.25, 0.15, 3.0}, {1.0, 1.0, 1.0});
    } else if (name == "overcast") {
        sky({0.55, 0.57, 0.60}, {0.45, 0.46, 0.48}, {0.30, 0.30, 0.30});
    } else {
        throw InvalidArgument("unknown builtin environment '" + name + "'");
    }
    return env;
}

/// "builtin:<name>" or a file path.
inline EnvironmentMap resolve_environment(const std::string& spec, int builtin_width = 64) {
    constexpr std::string_view prefix = "builtin:";
    if (spec.rfind(prefix, 0) == 0) return builtin_environment(spec.substr(prefix.size()), builtin_width);
    return load_envmap(spec);
}

}  // namespace compose
