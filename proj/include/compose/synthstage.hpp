#pragma once

// A deterministic synthetic light stage: a tiny direct-lighting raytracer over
// Lambertian spheres and a ground plane. It produces OLAT bases with binary
// (hard) cast shadows and a brute-force environment-lit reference render.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "envmap.hpp"
#include "image.hpp"
#include "parallel.hpp"
#include "vec.hpp"

namespace compose {

inline constexpr const char* kSceneSchema = "compose-kit/scene/v1";

struct Sphere {
    Vec3 center;
    double radius = 1.0;
    Rgb albedo{0.8, 0.8, 0.8};
};

struct GroundPlane {
    double height = 0.0;
    Rgb albedo{0.6, 0.6, 0.6};
};

struct Camera {
    Vec3 position{0, 4, 8};
    Vec3 look_at{0, 0.5, 0};
    double vfov_deg = 40.0;
};

struct SceneSpec {
    std::string name;
    std::vector<Sphere> spheres;
    std::optional<GroundPlane> ground;
    Camera camera;
};

inline void validate_scene(const SceneSpec& s) {
    if (s.spheres.empty() && !s.ground) throw InvalidArgument("scene needs at least one primitive");
    auto check_albedo = [](const Rgb& a) {
        for (double c : a)
            if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("albedo must lie in [0,1]");
    };
    for (const auto& sp : s.spheres) {
        if (!(sp.radius > 0.0)) throw InvalidArgument("sphere radius must be > 0");
        check_albedo(sp.albedo);
        if (length(s.camera.position - sp.center) <= sp.radius) throw InvalidArgument("camera is inside a sphere");
    }
    if (s.ground) {
        check_albedo(s.ground->albedo);
        if (s.camera.position.y <= s.ground->height) throw InvalidArgument("camera is below the ground plane");
    }
    if (!(s.camera.vfov_deg > 0.0 && s.camera.vfov_deg < 180.0)) throw InvalidArgument("vertical field of view must be in (0, 180)");
    if (length(s.camera.look_at - s.camera.position) == 0.0) throw InvalidArgument("camera look-at equals its position");
}

/// Builtin scenes, versioned with the scene schema.
///   sphere_on_plane: a unit sphere resting on the ground.
///   head_proxy: a head-sized sphere with a nose sphere toward the camera,
///   floating above the ground so it casts a face shadow and a ground shadow.
inline SceneSpec builtin_scene(const std::string& name) {
    SceneSpec s;
    s.name = name;
    if (name == "sphere_on_plane") {
        s.spheres.push_back({{0, 1, 0}, 1.0, {0.8, 0.8, 0.8}});
        s.ground = GroundPlane{0.0, {0.6, 0.6, 0.6}};
        s.camera = {{0, 7.0, 6.0}, {0, 0.2, 0}, 50.0};
    } else if (name == "head_proxy") {
        s.spheres.push_back({{0, 1.6, 0}, 1.0, {0.85, 0.66, 0.55}});
        s.spheres.push_back({{0, 1.5, 0.98}, 0.26, {0.85, 0.66, 0.55}});
        s.ground = GroundPlane{0.0, {0.55, 0.55, 0.55}};
        s.camera = {{0, 7.5, 6.5}, {0, 0.6, 0}, 50.0};
    } else {
        throw InvalidArgument("unknown builtin scene '" + name + "'");
    }
    return s;
}

inline std::vector<std::string> builtin_scene_names() { return {"sphere_on_plane", "head_proxy"}; }

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json vec_to_json(const Vec3& v) { return {v.x, v.y, v.z}; }
inline Vec3 vec_from_json(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
inline nlohmann::json rgb_to_json(const Rgb& c) { return {c[0], c[1], c[2]}; }
inline Rgb rgb_from_json(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

inline nlohmann::json scene_to_json(const SceneSpec& s) {
    nlohmann::json j;
    j["schema"] = kSceneSchema;
    j["name"] = s.name;
    j["spheres"] = nlohmann::json::array();
    for (const auto& sp : s.spheres)
        j["spheres"].push_back({{"center", vec_to_json(sp.center)}, {"radius", sp.radius}, {"albedo", rgb_to_json(sp.albedo)}});
    if (s.ground) j["ground"] = {{"height", s.ground->height}, {"albedo", rgb_to_json(s.ground->albedo)}};
    j["camera"] = {{"position", vec_to_json(s.camera.position)},
                   {"look_at", vec_to_json(s.camera.look_at)},
                   {"vfov_deg", s.camera.vfov_deg}};
    return j;
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema").get<std::string>() != kSceneSchema)
            throw FormatError("unsupported scene schema '" + j.at("schema").get<std::string>() + "'");
        SceneSpec s;
        s.name = j.value("name", std::string("custom"));
        for (const auto& sp : j.value("spheres", nlohmann::json::array()))
            s.spheres.push_back({vec_from_json(sp.at("center")), sp.at("radius").get<double>(), rgb_from_json(sp.at("albedo"))});
        if (j.contains("ground"))
            s.ground = GroundPlane{j["ground"].at("height").get<double>(), rgb_from_json(j["ground"].at("albedo"))};
        const auto& cam = j.at("camera");
        s.camera = {vec_from_json(cam.at("position")), vec_from_json(cam.at("look_at")), cam.at("vfov_deg").get<double>()};
        validate_scene(s);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed scene document: ") + e.what());
    }
}

/// A builtin scene name, or a path to a scene JSON document.
inline SceneSpec resolve_scene(const std::string& name_or_path) {
    for (const auto& n : builtin_scene_names())
        if (n == name_or_path) return builtin_scene(n);
    if (!std::filesystem::exists(name_or_path)) throw InvalidArgument("unknown scene '" + name_or_path + "'");
    try {
        return scene_from_json(nlohmann::json::parse(read_file_bytes(name_or_path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("scene file is not valid JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Ray casting

inline constexpr int kNoHit = -1;
inline constexpr int kGroundId = 0;  // spheres are 1..n

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int object = kNoHit;
    Vec3 position;
    Vec3 normal;
    Rgb albedo{0, 0, 0};
};

namespace detail {

inline double intersect_sphere(const Sphere& s, const Vec3& origin, const Vec3& dir, double t_min) {
    const Vec3 oc = origin - s.center;
    const double b = dot(oc, dir);
    const double c = dot(oc, oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0) return std::numeric_limits<double>::infinity();
    const double root = std::sqrt(disc);
    double t = -b - root;
    if (t > t_min) return t;
    t = -b + root;
    if (t > t_min) return t;
    return std::numeric_limits<double>::infinity();
}

inline double intersect_ground(const GroundPlane& g, const Vec3& origin, const Vec3& dir, double t_min) {
    if (std::abs(dir.y) < 1e-12) return std::numeric_limits<double>::infinity();
    const double t = (g.height - origin.y) / dir.y;
    return t > t_min ? t : std::numeric_limits<double>::infinity();
}

}  // namespace detail

inline Hit trace_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& dir) {
    constexpr double t_min = 1e-9;
    Hit hit;
    if (scene.ground) {
        const double t = detail::intersect_ground(*scene.ground, origin, dir, t_min);
        if (t < hit.t) {
            hit.t = t;
            hit.object = kGroundId;
        }
    }
    for (std::size_t k = 0; k < scene.spheres.size(); ++k) {
        const double t = detail::intersect_sphere(scene.spheres[k], origin, dir, t_min);
        if (t < hit.t) {
            hit.t = t;
            hit.object = static_cast<int>(k) + 1;
        }
    }
    if (hit.object == kNoHit) return hit;
    hit.position = origin + dir * hit.t;
    if (hit.object == kGroundId) {
        hit.normal = {0, 1, 0};
        hit.albedo = scene.ground->albedo;
    } else {
        const Sphere& s = scene.spheres[hit.object - 1];
        hit.normal = normalize(hit.position - s.center);
        hit.albedo = s.albedo;
    }
    return hit;
}

/// True when anything blocks the ray from a surface point toward `dir`.
inline bool occluded(const SceneSpec& scene, const Hit& from, const Vec3& dir) {
    const Vec3 origin = from.position + from.normal * 1e-6;
    if (scene.ground && detail::intersect_ground(*scene.ground, origin, dir, 1e-9) < std::numeric_limits<double>::infinity())
        return true;
    for (const auto& s : scene.spheres)
        if (detail::intersect_sphere(s, origin, dir, 1e-9) < std::numeric_limits<double>::infinity()) return true;
    return false;
}

/// Primary hits for one center ray per pixel.
struct SurfaceBuffer {
    int width = 0;
    int height = 0;
    std::vector<Hit> hits;

    const Hit& operator()(int x, int y) const { return hits[static_cast<std::size_t>(y) * width + x]; }
};

inline SurfaceBuffer trace_primary(const SceneSpec& scene, int width, int height) {
    validate_scene(scene);
    if (width <= 0 || height <= 0) throw InvalidArgument("image dimensions must be positive");
    const Camera& cam = scene.camera;
    const Vec3 forward = normalize(cam.look_at - cam.position);
    Vec3 right = cross(forward, Vec3{0, 1, 0});
    if (length(right) < 1e-9) right = {1, 0, 0};
    right = normalize(right);
    const Vec3 up = cross(right, forward);
    const double half_h = std::tan(cam.vfov_deg * std::numbers::pi / 360.0);
    const double half_w = half_h * width / height;

    SurfaceBuffer buf{width, height, std::vector<Hit>(static_cast<std::size_t>(width) * height)};
    parallel_for(static_cast<std::size_t>(height), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < width; ++x) {
            const double sx = (2.0 * (x + 0.5) / width - 1.0) * half_w;
            const double sy = (1.0 - 2.0 * (y + 0.5) / height) * half_h;
            const Vec3 dir = normalize(forward + right * sx + up * sy);
            buf.hits[static_cast<std::size_t>(y) * width + x] = trace_ray(scene, cam.position, dir);
        }
    });
    return buf;
}

/// Foreground mask: pixels whose primary ray hits geometry.
inline Mask foreground_mask(const SurfaceBuffer& buf) {
    Mask m(buf.width, buf.height);
    for (std::size_t p = 0; p < buf.hits.size(); ++p) m.bits[p] = buf.hits[p].object != kNoHit;
    return m;
}

inline Mask ground_mask(const SurfaceBuffer& buf) {
    Mask m(buf.width, buf.height);
    for (std::size_t p = 0; p < buf.hits.size(); ++p) m.bits[p] = buf.hits[p].object == kGroundId;
    return m;
}

/// Scene under one unit-radiance directional light toward `light_dir`:
/// albedo * max(0, n.d) / pi where the shadow ray escapes, 0 otherwise.
inline LinearImage shade_directional(const SceneSpec& scene, const SurfaceBuffer& buf, const Vec3& light_dir) {
    LinearImage img(buf.width, buf.height);
    img.mask = foreground_mask(buf).bits;
    for (std::size_t p = 0; p < buf.hits.size(); ++p) {
        const Hit& h = buf.hits[p];
        if (h.object == kNoHit) continue;
        const double cos_term = dot(h.normal, light_dir);
        if (cos_term <= 0.0 || occluded(scene, h, light_dir)) continue;
        for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = static_cast<float>(h.albedo[c] * cos_term / std::numbers::pi);
    }
    return img;
}

inline void require_unit(const Vec3& d, const char* what) {
    if (!(std::abs(length(d) - 1.0) <= 1e-6)) throw InvalidArgument(std::string(what) + " must be a unit vector");
}

inline LinearImage raytrace_directional(const SceneSpec& scene, const Vec3& light_dir, int width, int height) {
    require_unit(light_dir, "light direction");
    return shade_directional(scene, trace_primary(scene, width, height), light_dir);
}

/// Ground-plane pixels facing the light whose shadow ray toward `light_dir`
/// is blocked.
inline Mask umbra_mask(const SceneSpec& scene, const SurfaceBuffer& buf, const Vec3& light_dir) {
    Mask m(buf.width, buf.height);
    for (std::size_t p = 0; p < buf.hits.size(); ++p) {
        const Hit& h = buf.hits[p];
        if (h.object != kGroundId || dot(h.normal, light_dir) <= 0.0) continue;
        m.bits[p] = occluded(scene, h, light_dir) ? 1 : 0;
    }
    return m;
}

inline Mask umbra_mask(const SceneSpec& scene, const Vec3& light_dir, int width, int height) {
    require_unit(light_dir, "light direction");
    return umbra_mask(scene, trace_primary(scene, width, height), light_dir);
}

// ---------------------------------------------------------------------------
// Environment-lit reference

namespace detail {

inline double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Shirley-Chiu concentric square-to-disk map.
inline void concentric_disk(double a, double b, double& x, double& y) {
    const double sx = 2 * a - 1;
    const double sy = 2 * b - 1;
    if (sx == 0 && sy == 0) {
        x = y = 0;
        return;
    }
    double r, phi;
    if (std::abs(sx) > std::abs(sy)) {
        r = sx;
        phi = (std::numbers::pi / 4) * (sy / sx);
    } else {
        r = sy;
        phi = std::numbers::pi / 2 - (std::numbers::pi / 4) * (sx / sy);
    }
    x = r * std::cos(phi);
    y = r * std::sin(phi);
}

}  // namespace detail

/// Direct lighting under an environment map by stratified cosine-weighted
/// hemisphere quadrature with binary shadow rays. The jitter stream of each
/// pixel is seeded from (seed, pixel index), so the output is deterministic.
inline LinearImage raytrace_env(const SceneSpec& scene, const EnvironmentMap& env, int samples_per_pixel, int width,
                                int height, std::uint64_t seed = 0) {
    if (samples_per_pixel < 1) throw InvalidArgument("samples per pixel must be >= 1");
    const SurfaceBuffer buf = trace_primary(scene, width, height);
    LinearImage img(width, height);
    img.mask = foreground_mask(buf).bits;
    const int strata = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(samples_per_pixel)))));

    parallel_for(buf.hits.size(), [&](std::size_t p) {
        const Hit& h = buf.hits[p];
        if (h.object == kNoHit) return;
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + p);
        const Vec3 n = h.normal;
        const Vec3 helper = std::abs(n.x) > 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
        const Vec3 t = normalize(cross(helper, n));
        const Vec3 b = cross(n, t);
        double acc[3] = {0, 0, 0};
        for (int k = 0; k < samples_per_pixel; ++k) {
            double a, c;
            if (k < strata * strata) {
                a = ((k % strata) + detail::unit_double(rng)) / strata;
                c = ((k / strata) + detail::unit_double(rng)) / strata;
            } else {
                a = detail::unit_double(rng);
                c = detail::unit_double(rng);
            }
            double dx, dy;
            detail::concentric_disk(a, c, dx, dy);
            const double dz = std::sqrt(std::max(0.0, 1.0 - dx * dx - dy * dy));
            const Vec3 dir = normalize(t * dx + b * dy + n * dz);
            if (occluded(scene, h, dir)) continue;
            const Rgb radiance = sample_env(env, dir);
            for (int ch = 0; ch < 3; ++ch) acc[ch] += radiance[ch];
        }
        // Cosine-weighted pdf cancels the cosine and 1/pi of the Lambert BRDF.
        for (int ch = 0; ch < 3; ++ch) img.data[p * 3 + ch] = static_cast<float>(h.albedo[ch] * acc[ch] / samples_per_pixel);
    });
    return img;
}

}  // namespace compose
