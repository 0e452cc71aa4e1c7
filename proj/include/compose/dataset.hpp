#pragma once

// Training-data factory. Each sample augments a source environment map
// (longitude rotation, intensity scale), renders it through a scene's OLAT
// basis, renders the diffuse target under the blurred map, samples a Gaussian
// light and renders the shadowed target under it. A JSON-lines manifest logs
// every sampled parameter so each sample can be recomputed from the recipe.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "environments.hpp"
#include "gausslight.hpp"
#include "olat.hpp"
#include "synthstage.hpp"

namespace compose {

inline constexpr const char* kRecipeSchema = "compose-kit/recipe/v1";
inline constexpr const char* kDatasetSchema = "compose-kit/dataset/v1";

struct Range {
    double lo = 0;
    double hi = 1;
};

struct DatasetRecipe {
    std::vector<std::string> scenes;  // builtin names or scene files
    std::vector<std::string> envs;    // "builtin:<name>" or env files
    int n_lights = kDefaultLightCount;
    int width = kDefaultRenderSize;
    int height = kDefaultRenderSize;
    int count = 1;
    std::uint64_t seed = 0;
    Range rotation{0.0, 1.0};         // uniform delta_u
    Range intensity{0.5, 2.0};        // log-uniform scale
    Range light_u{0.0, 1.0};
    Range light_v{0.0, 1.0};
    Range light_sigma{0.03, kSigmaMax};  // uniform over (lo, hi]
    Range light_gamma{0.5, kGammaMax};   // log-uniform
    double beta = kDefaultDiffusionBeta;
    int shadow_env_width = kShadowEnvWidth;
};

inline void validate_recipe(const DatasetRecipe& r) {
    if (r.scenes.empty()) throw InvalidArgument("recipe lists no scenes");
    if (r.envs.empty()) throw InvalidArgument("recipe lists no environment maps");
    if (r.count < 1) throw InvalidArgument("recipe count must be >= 1");
    if (r.n_lights < 4) throw InvalidArgument("recipe needs at least 4 lights");
    if (r.width <= 0 || r.height <= 0) throw InvalidArgument("recipe image size must be positive");
    auto check = [](const Range& range, double lo, double hi, const char* what) {
        if (!(range.lo >= lo && range.hi <= hi && range.lo <= range.hi))
            throw InvalidArgument(std::string("recipe range '") + what + "' is outside its bounds");
    };
    check(r.rotation, 0.0, 1.0, "rotation");
    check(r.intensity, 1e-6, 1e6, "intensity");
    check(r.light_u, 0.0, 1.0, "light.u");
    check(r.light_v, 0.0, 1.0, "light.v");
    check(r.light_sigma, 0.0, kSigmaMax, "light.sigma");
    check(r.light_gamma, 1e-6, 1e6, "light.gamma");
    if (!(r.light_sigma.hi > 0.0)) throw InvalidArgument("recipe sigma range must include positive values");
    if (!(r.beta > 0.0 && r.beta <= std::numbers::pi)) throw InvalidArgument("recipe beta must be in (0, pi]");
    if (r.shadow_env_width < 4 || r.shadow_env_width % 2) throw InvalidArgument("shadow_env_width must be even and >= 4");
}

inline nlohmann::json range_to_json(const Range& r) { return {r.lo, r.hi}; }
inline Range range_from_json(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline nlohmann::json recipe_to_json(const DatasetRecipe& r) {
    return {{"schema", kRecipeSchema},
            {"scenes", r.scenes},
            {"envs", r.envs},
            {"n_lights", r.n_lights},
            {"width", r.width},
            {"height", r.height},
            {"count", r.count},
            {"seed", r.seed},
            {"rotation", range_to_json(r.rotation)},
            {"intensity", range_to_json(r.intensity)},
            {"light",
             {{"u", range_to_json(r.light_u)},
              {"v", range_to_json(r.light_v)},
              {"sigma", range_to_json(r.light_sigma)},
              {"gamma", range_to_json(r.light_gamma)}}},
            {"beta", r.beta},
            {"shadow_env_width", r.shadow_env_width}};
}

/// Missing keys keep their defaults. Relative env and scene paths resolve
/// against `base_dir`.
inline DatasetRecipe recipe_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    DatasetRecipe r;
    try {
        if (j.contains("schema") && j["schema"].get<std::string>() != kRecipeSchema)
            throw FormatError("unsupported recipe schema");
        auto resolve = [&](const std::string& entry, bool builtin) {
            if (builtin || base_dir.empty() || std::filesystem::path(entry).is_absolute()) return entry;
            return (base_dir / entry).string();
        };
        const auto names = builtin_scene_names();
        for (const auto& s : j.at("scenes")) {
            const std::string v = s.get<std::string>();
            r.scenes.push_back(resolve(v, std::find(names.begin(), names.end(), v) != names.end()));
        }
        for (const auto& e : j.at("envs")) {
            const std::string v = e.get<std::string>();
            r.envs.push_back(resolve(v, v.rfind("builtin:", 0) == 0));
        }
        r.n_lights = j.value("n_lights", r.n_lights);
        r.width = j.value("width", r.width);
        r.height = j.value("height", r.height);
        r.count = j.value("count", r.count);
        r.seed = j.value("seed", r.seed);
        if (j.contains("rotation")) r.rotation = range_from_json(j["rotation"]);
        if (j.contains("intensity")) r.intensity = range_from_json(j["intensity"]);
        if (j.contains("light")) {
            const auto& l = j["light"];
            if (l.contains("u")) r.light_u = range_from_json(l["u"]);
            if (l.contains("v")) r.light_v = range_from_json(l["v"]);
            if (l.contains("sigma")) r.light_sigma = range_from_json(l["sigma"]);
            if (l.contains("gamma")) r.light_gamma = range_from_json(l["gamma"]);
        }
        r.beta = j.value("beta", r.beta);
        r.shadow_env_width = j.value("shadow_env_width", r.shadow_env_width);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed recipe: ") + e.what());
    }
    validate_recipe(r);
    return r;
}

inline DatasetRecipe load_recipe(const std::filesystem::path& path) {
    try {
        return recipe_from_json(nlohmann::json::parse(read_file_bytes(path)), path.parent_path());
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("recipe is not valid JSON: ") + e.what());
    }
}

/// Parameters drawn for one sample.
struct SampleDraw {
    std::size_t scene_index = 0;
    std::size_t env_index = 0;
    double rotation = 0;
    double intensity = 1;
    GaussianLight light;
};

namespace detail {

inline double draw_uniform(std::mt19937_64& rng, const Range& r) { return r.lo + (r.hi - r.lo) * unit_double(rng); }

inline double draw_log_uniform(std::mt19937_64& rng, const Range& r) {
    return std::exp(std::log(r.lo) + (std::log(r.hi) - std::log(r.lo)) * unit_double(rng));
}

}  // namespace detail

inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return seed ^ static_cast<std::uint64_t>(index); }

/// Deterministic draw for sample `index`, seeded with seed XOR index.
inline SampleDraw draw_sample(const DatasetRecipe& recipe, std::size_t index) {
    std::mt19937_64 rng(sample_seed(recipe.seed, index));
    SampleDraw d;
    d.scene_index = static_cast<std::size_t>(rng() % recipe.scenes.size());
    d.env_index = static_cast<std::size_t>(rng() % recipe.envs.size());
    d.rotation = detail::draw_uniform(rng, recipe.rotation);
    if (d.rotation >= 1.0) d.rotation = 0.0;
    d.intensity = detail::draw_log_uniform(rng, recipe.intensity);
    d.light.u = wrap_unit(detail::draw_uniform(rng, recipe.light_u));
    d.light.v = detail::draw_uniform(rng, recipe.light_v);
    // (lo, hi]: measured down from hi so lo itself is never drawn.
    d.light.sigma = recipe.light_sigma.hi - (recipe.light_sigma.hi - recipe.light_sigma.lo) * detail::unit_double(rng);
    d.light.gamma = detail::draw_log_uniform(rng, recipe.light_gamma);
    return d;
}

/// Source map after the logged augmentation.
inline EnvironmentMap augment_env(const EnvironmentMap& source, const SampleDraw& d) {
    return scale_env(rotate_env(source, d.rotation), d.intensity);
}

/// Writes every sample under out_dir/samples/<index>/ and returns the manifest
/// rows (also written to out_dir/manifest.jsonl).
inline std::vector<nlohmann::json> emit_dataset(const DatasetRecipe& recipe, const std::filesystem::path& out_dir) {
    validate_recipe(recipe);
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "samples", ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "'");

    std::vector<EnvironmentMap> sources;
    for (const auto& e : recipe.envs) sources.push_back(resolve_environment(e));
    std::map<std::size_t, OlatBasis> bases;

    write_file_bytes(out_dir / "recipe.json", recipe_to_json(recipe).dump(2) + "\n");
    std::vector<nlohmann::json> rows;
    std::string manifest;
    for (int index = 0; index < recipe.count; ++index) {
        const SampleDraw d = draw_sample(recipe, static_cast<std::size_t>(index));
        auto it = bases.find(d.scene_index);
        if (it == bases.end())
            it = bases.emplace(d.scene_index, build_olat_basis(resolve_scene(recipe.scenes[d.scene_index]), recipe.n_lights,
                                                               recipe.width, recipe.height))
                     .first;
        const OlatBasis& basis = it->second;
        const EnvironmentMap env = augment_env(sources[d.env_index], d);

        char name[32];
        std::snprintf(name, sizeof(name), "%06d", index);
        const std::filesystem::path rel = std::filesystem::path("samples") / name;
        std::filesystem::create_directories(out_dir / rel, ec);
        if (ec) throw IoError("cannot create '" + (out_dir / rel).string() + "'");

        save_envmap(env, out_dir / rel / "env.pfm");
        save_image(render_olat(basis, env), out_dir / rel / "input.pfm");
        save_image(diffuse_image(basis, env, recipe.beta), out_dir / rel / "diffuse.pfm");
        save_image(render_olat(basis, synth_gaussian_env(d.light, recipe.shadow_env_width)), out_dir / rel / "shadowed.pfm");
        write_feature_map(to_feature_map(d.light), d.light, out_dir / rel / "light.bin");

        const long long shift_raw = std::llround(d.rotation * sources[d.env_index].width());
        nlohmann::json row = {
            {"schema", kDatasetSchema},
            {"index", index},
            {"seed", sample_seed(recipe.seed, static_cast<std::size_t>(index))},
            {"scene", recipe.scenes[d.scene_index]},
            {"env_source", recipe.envs[d.env_index]},
            {"rotation_delta_u", d.rotation},
            {"rotation_shift_px", shift_raw % sources[d.env_index].width()},
            {"intensity_scale", d.intensity},
            {"beta", recipe.beta},
            {"n_lights", recipe.n_lights},
            {"shadow_env_width", recipe.shadow_env_width},
            {"light", light_to_json(d.light)},
            {"paths",
             {{"env", (rel / "env.pfm").string()},
              {"input", (rel / "input.pfm").string()},
              {"diffuse", (rel / "diffuse.pfm").string()},
              {"shadowed", (rel / "shadowed.pfm").string()},
              {"feature_map", (rel / "light.bin").string()}}}};
        manifest += row.dump() + "\n";
        rows.push_back(std::move(row));
    }
    write_file_bytes(out_dir / "manifest.jsonl", manifest);
    return rows;
}

}  // namespace compose
