#include <compose/dataset.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace compose;
using namespace testing_support;

namespace {

DatasetRecipe tiny_recipe() {
    DatasetRecipe r;
    r.scenes = {"sphere_on_plane", "head_proxy"};
    r.envs = {"builtin:sun_sky", "builtin:studio_key"};
    r.n_lights = 12;
    r.width = r.height = 16;
    r.count = 4;
    r.seed = 99;
    r.shadow_env_width = 64;
    return r;
}

std::vector<nlohmann::json> read_manifest(const std::filesystem::path& path) {
    std::vector<nlohmann::json> rows;
    std::istringstream in(read_file_bytes(path));
    for (std::string line; std::getline(in, line);) rows.push_back(nlohmann::json::parse(line));
    return rows;
}

}  // namespace

TEST(Recipe, JsonRoundTripAndRelativePaths) {
    TempDir dir;
    DatasetRecipe r = tiny_recipe();
    r.envs.push_back("maps/sky.hdr");
    write_file_bytes(dir / "recipe.json", recipe_to_json(r).dump());
    const DatasetRecipe back = load_recipe(dir / "recipe.json");
    EXPECT_EQ(back.scenes, r.scenes);
    EXPECT_EQ(back.envs[0], "builtin:sun_sky");
    EXPECT_EQ(back.envs[2], (dir / "maps/sky.hdr").string());
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.count, 4);
}

TEST(Recipe, Validation) {
    DatasetRecipe r = tiny_recipe();
    r.scenes.clear();
    EXPECT_THROW(validate_recipe(r), InvalidArgument);
    r = tiny_recipe();
    r.envs.clear();
    EXPECT_THROW(validate_recipe(r), InvalidArgument);
    r = tiny_recipe();
    r.count = 0;
    EXPECT_THROW(validate_recipe(r), InvalidArgument);
    r = tiny_recipe();
    r.light_sigma = {0.03, 2.0};
    EXPECT_THROW(validate_recipe(r), InvalidArgument);
    EXPECT_THROW(recipe_from_json(nlohmann::json{{"scenes", {"x"}}}), FormatError);
}

TEST(Recipe, DrawsStayInRange) {
    const DatasetRecipe r = tiny_recipe();
    for (std::size_t k = 0; k < 500; ++k) {
        const SampleDraw d = draw_sample(r, k);
        EXPECT_GE(d.rotation, 0.0);
        EXPECT_LT(d.rotation, 1.0);
        EXPECT_GE(d.intensity, 0.5);
        EXPECT_LE(d.intensity, 2.0);
        EXPECT_GT(d.light.sigma, 0.03);
        EXPECT_LE(d.light.sigma, kSigmaMax);
        EXPECT_GE(d.light.gamma, 0.5);
        EXPECT_LE(d.light.gamma, kGammaMax);
        EXPECT_NO_THROW(validate_light(d.light));
    }
}

TEST(Dataset, DeterministicAcrossRuns) {
    TempDir a, b;
    DatasetRecipe r = tiny_recipe();
    r.count = 2;
    emit_dataset(r, a.path());
    set_thread_count(1);
    emit_dataset(r, b.path());
    set_thread_count(0);
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
        if (!entry.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(entry.path(), a.path());
        EXPECT_EQ(read_file_bytes(entry.path()), read_file_bytes(b.path() / rel)) << rel;
    }
}

TEST(Dataset, ManifestIsConsistentWithArtifacts) {
    TempDir dir;
    const DatasetRecipe r = tiny_recipe();
    const auto rows = emit_dataset(r, dir.path());
    const auto manifest = read_manifest(dir / "manifest.jsonl");
    ASSERT_EQ(manifest.size(), 4u);
    std::map<std::string, OlatBasis> bases;
    for (std::size_t k = 0; k < manifest.size(); ++k) {
        const auto& row = manifest[k];
        EXPECT_EQ(row, rows[k]);
        EXPECT_EQ(row["schema"], kDatasetSchema);
        const GaussianLight logged = light_from_json(row["light"]);

        // Feature map decodes to the logged light.
        const GaussianLight decoded = from_feature_map(read_feature_map(dir / row["paths"]["feature_map"].get<std::string>()));
        EXPECT_NEAR(decoded.u, logged.u, 1e-6);
        EXPECT_NEAR(decoded.v, logged.v, 1e-6);
        EXPECT_NEAR(decoded.sigma, logged.sigma, 1e-6);
        EXPECT_NEAR(decoded.gamma / logged.gamma, 1.0, 1e-6);

        // Shadowed target re-derived from the manifest alone.
        const std::string scene = row["scene"];
        if (!bases.count(scene)) bases.emplace(scene, build_olat_basis(resolve_scene(scene), row["n_lights"], 16, 16));
        const OlatBasis& basis = bases.at(scene);
        const LinearImage shadowed = load_image(dir / row["paths"]["shadowed"].get<std::string>());
        EXPECT_EQ(shadowed.data, render_olat(basis, synth_gaussian_env(logged, row["shadow_env_width"])).data);

        // Augmentation recomputed from the logged parameters.
        const EnvironmentMap source = resolve_environment(row["env_source"]);
        const EnvironmentMap expect = scale_env(rotate_env(source, row["rotation_delta_u"]), row["intensity_scale"]);
        const EnvironmentMap env = load_envmap(dir / row["paths"]["env"].get<std::string>());
        EXPECT_EQ(env, expect);
        EXPECT_EQ(rotate_env(source, row["rotation_shift_px"].get<double>() / source.width()),
                  rotate_env(source, row["rotation_delta_u"]));

        const LinearImage input = load_image(dir / row["paths"]["input"].get<std::string>());
        EXPECT_EQ(input.data, render_olat(basis, env).data);
        const LinearImage diffuse = load_image(dir / row["paths"]["diffuse"].get<std::string>());
        EXPECT_EQ(diffuse.data, diffuse_image(basis, env, row["beta"]).data);
    }
}

TEST(Dataset, UnwritableOutputFails) {
    TempDir dir;
    write_file_bytes(dir / "file", "x");
    EXPECT_THROW(emit_dataset(tiny_recipe(), dir / "file" / "sub"), IoError);
}
