#pragma once

// One-light-at-a-time relighting. Light is linear, so the scene under any
// environment map is the solid-angle-weighted sum of its OLAT images scaled by
// the map's radiance toward each basis light.

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "envmap.hpp"
#include "gausslight.hpp"
#include "image.hpp"
#include "parallel.hpp"
#include "synthstage.hpp"

namespace compose {

inline constexpr const char* kBasisSchema = "compose-kit/olat-basis/v1";
inline constexpr int kDefaultLightCount = 160;
inline constexpr int kDefaultRenderSize = 256;

struct OlatBasis {
    std::string scene;
    int width = 0;
    int height = 0;
    std::vector<Vec3> directions;
    std::vector<double> weights;       // steradians per light
    std::vector<LinearImage> images;   // response to a unit-radiance light

    std::size_t count() const { return directions.size(); }
};

inline void validate_basis(const OlatBasis& b) {
    if (b.directions.empty()) throw InvalidArgument("OLAT basis is empty");
    if (b.weights.size() != b.count() || b.images.size() != b.count())
        throw InvalidArgument("OLAT basis directions, weights and images differ in count");
    double total = 0;
    for (std::size_t i = 0; i < b.count(); ++i) {
        require_unit(b.directions[i], "basis direction");
        if (!(b.weights[i] > 0.0)) throw InvalidArgument("basis weights must be > 0");
        total += b.weights[i];
        if (b.images[i].width != b.width || b.images[i].height != b.height)
            throw InvalidArgument("basis images differ in size");
    }
    if (std::abs(total - 4.0 * std::numbers::pi) > 1e-3 * 4.0 * std::numbers::pi)
        throw InvalidArgument("basis weights must sum to 4*pi");
}

/// Equal-area Fibonacci lattice on the unit sphere.
inline std::vector<Vec3> fibonacci_directions(int n) {
    const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::vector<Vec3> dirs(n);
    for (int i = 0; i < n; ++i) {
        const double y = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
        const double phi = golden_angle * i;
        dirs[i] = {r * std::cos(phi), y, r * std::sin(phi)};
    }
    return dirs;
}

inline OlatBasis build_olat_basis(const SceneSpec& scene, int n_lights, int width, int height) {
    if (n_lights < 4) throw InvalidArgument("an OLAT basis needs at least 4 lights");
    const SurfaceBuffer buf = trace_primary(scene, width, height);
    OlatBasis basis;
    basis.scene = scene.name;
    basis.width = width;
    basis.height = height;
    basis.directions = fibonacci_directions(n_lights);
    basis.weights.assign(n_lights, 4.0 * std::numbers::pi / n_lights);
    basis.images.resize(n_lights);
    parallel_for(static_cast<std::size_t>(n_lights),
                 [&](std::size_t i) { basis.images[i] = shade_directional(scene, buf, basis.directions[i]); });
    return basis;
}

/// I(p) = sum_i weight_i * env(d_i) * image_i(p), channelwise, accumulated in
/// double in basis order.
inline LinearImage render_olat(const OlatBasis& basis, const EnvironmentMap& env) {
    if (basis.count() == 0) throw InvalidArgument("OLAT basis is empty");
    std::vector<Rgb> coef(basis.count());
    for (std::size_t i = 0; i < basis.count(); ++i) {
        coef[i] = sample_env(env, basis.directions[i]);
        for (double& c : coef[i]) c *= basis.weights[i];
    }
    LinearImage out(basis.width, basis.height);
    out.mask = basis.images.front().mask;
    parallel_for(static_cast<std::size_t>(basis.height), [&](std::size_t row) {
        std::vector<double> acc(static_cast<std::size_t>(basis.width) * 3, 0.0);
        const std::size_t offset = row * basis.width * 3;
        for (std::size_t i = 0; i < basis.count(); ++i) {
            const float* src = basis.images[i].data.data() + offset;
            const Rgb& k = coef[i];
            for (int x = 0; x < basis.width; ++x)
                for (int c = 0; c < 3; ++c) acc[x * 3 + c] += k[c] * src[x * 3 + c];
        }
        for (std::size_t k = 0; k < acc.size(); ++k) out.data[offset + k] = static_cast<float>(acc[k]);
    });
    return out;
}

/// The scene under a heavily blurred copy of the map: hard shadows and
/// highlights are gone while the ambient color is kept.
inline LinearImage diffuse_image(const OlatBasis& basis, const EnvironmentMap& env, double beta) {
    return render_olat(basis, diffuse_env(env, beta));
}

/// omega_d * diffuse + (1 - omega_d) * shadowed.
inline LinearImage composite(const LinearImage& diffuse, const LinearImage& shadowed, double omega_d) {
    if (!diffuse.same_size(shadowed)) throw InvalidArgument("composite operands differ in size");
    if (!(omega_d >= 0.0 && omega_d <= 1.0)) throw InvalidArgument("omega_d must lie in [0,1]");
    const double omega_s = 1.0 - omega_d;
    LinearImage out(diffuse.width, diffuse.height);
    out.mask = diffuse.has_mask() ? diffuse.mask : shadowed.mask;
    for (std::size_t k = 0; k < out.data.size(); ++k)
        out.data[k] = static_cast<float>(omega_d * diffuse.data[k] + omega_s * shadowed.data[k]);
    return out;
}

// ---------------------------------------------------------------------------
// The edit pipeline: light estimation and editing, light diffusion, shadow
// synthesis, compositing.

struct EditRequest {
    /// An absolute light, or edits applied in place to the light fitted on the
    /// source map.
    std::variant<GaussianLight, LightEdit> light = GaussianLight{};
    double omega_d = 0.0;
    double beta = kDefaultDiffusionBeta;
    double exposure = 1.0;

    bool needs_fit() const { return std::holds_alternative<LightEdit>(light); }
};

struct EditResult {
    LinearImage edited;
    LinearImage diffuse;
    LinearImage shadowed;
    GaussianLight light;             // the light used for shadow synthesis
    std::optional<LightFit> fit;     // present when the request was in-place
};

inline GaussianLight resolve_light(const EditRequest& req, const EnvironmentMap& source, std::optional<LightFit>& fit) {
    if (const auto* absolute = std::get_if<GaussianLight>(&req.light)) {
        validate_light(*absolute);
        return *absolute;
    }
    fit = fit_gaussian(source);
    return edit_light(fit->light, std::get<LightEdit>(req.light));
}

/// Width of the Gaussian-only map rendered for shadow synthesis. Fine enough
/// that bilinear lookups at basis directions track the analytic lobe.
inline constexpr int kShadowEnvWidth = 256;

inline EditResult edit(const OlatBasis& basis, const EnvironmentMap& source, const EditRequest& req) {
    if (!(req.omega_d >= 0.0 && req.omega_d <= 1.0)) throw InvalidArgument("omega_d must lie in [0,1]");
    if (!(req.exposure > 0.0)) throw InvalidArgument("exposure must be > 0");
    EditResult r;
    r.light = resolve_light(req, source, r.fit);
    r.diffuse = diffuse_image(basis, source, req.beta);
    r.shadowed = render_olat(basis, synth_gaussian_env(r.light, kShadowEnvWidth));
    r.edited = composite(r.diffuse, r.shadowed, req.omega_d);
    return r;
}

// ---------------------------------------------------------------------------
// On-disk basis: manifest.json plus one .pfm per light.

inline void save_basis(const OlatBasis& basis, const std::filesystem::path& dir) {
    validate_basis(basis);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "'");
    nlohmann::json manifest;
    manifest["schema"] = kBasisSchema;
    manifest["scene"] = basis.scene;
    manifest["count"] = basis.count();
    manifest["width"] = basis.width;
    manifest["height"] = basis.height;
    manifest["lights"] = nlohmann::json::array();
    for (std::size_t i = 0; i < basis.count(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "olat_%04zu.pfm", i);
        save_image(basis.images[i], dir / name);
        manifest["lights"].push_back(
            {{"direction", vec_to_json(basis.directions[i])}, {"weight", basis.weights[i]}, {"image", name}});
    }
    save_mask(Mask{basis.width, basis.height, basis.images.front().mask}, dir / "foreground.pfm");
    manifest["mask"] = "foreground.pfm";
    write_file_bytes(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline OlatBasis load_basis(const std::filesystem::path& dir) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file_bytes(dir / "manifest.json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("basis manifest is not valid JSON: ") + e.what());
    }
    OlatBasis basis;
    try {
        if (manifest.at("schema").get<std::string>() != kBasisSchema) throw FormatError("unsupported basis schema");
        basis.scene = manifest.value("scene", std::string());
        basis.width = manifest.at("width").get<int>();
        basis.height = manifest.at("height").get<int>();
        const auto& lights = manifest.at("lights");
        if (lights.size() != manifest.at("count").get<std::size_t>()) throw FormatError("basis count does not match light list");
        std::vector<std::uint8_t> mask;
        if (manifest.contains("mask")) mask = load_mask(dir / manifest["mask"].get<std::string>()).bits;
        for (const auto& l : lights) {
            basis.directions.push_back(vec_from_json(l.at("direction")));
            basis.weights.push_back(l.at("weight").get<double>());
            LinearImage img = load_image(dir / l.at("image").get<std::string>());
            img.mask = mask;
            basis.images.push_back(std::move(img));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed basis manifest: ") + e.what());
    }
    validate_basis(basis);
    return basis;
}

}  // namespace compose
