#pragma once

// Command-line front end. run_cli returns the process exit code:
//   0 success, 1 usage/input/IO error, 2 domain error (e.g. NoDominantLight).

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "dataset.hpp"
#include "environments.hpp"
#include "gausslight.hpp"
#include "metrics.hpp"
#include "olat.hpp"
#include "parallel.hpp"
#include "service.hpp"
#include "synthstage.hpp"

namespace compose {

namespace detail {

struct Size2 {
    int width = kDefaultRenderSize;
    int height = kDefaultRenderSize;
};

inline Size2 parse_size(const std::string& s) {
    const auto x = s.find_first_of("xX");
    Size2 out;
    try {
        if (x == std::string::npos) {
            out.width = out.height = parse_dimension(s);
        } else {
            out.width = parse_dimension(s.substr(0, x));
            out.height = parse_dimension(s.substr(x + 1));
        }
    } catch (const Error&) {
        throw InvalidArgument("size must look like WxH, got '" + s + "'");
    }
    return out;
}

/// .png output is tonemapped at `exposure`; float formats store linear values.
inline void write_output(const LinearImage& img, const std::filesystem::path& path, double exposure = 1.0) {
    if (format_from_path(path) == RasterFormat::Png)
        write_file_bytes(path, encode_png(tonemap(img, exposure)));
    else
        save_image(img, path);
}

inline void print_kv(std::ostream& os, const nlohmann::json& j, const std::string& prefix = "") {
    for (const auto& [key, value] : j.items()) {
        const std::string name = prefix.empty() ? key : prefix + "." + key;
        if (value.is_object()) {
            print_kv(os, value, name);
        } else if (value.is_array()) {
            for (std::size_t k = 0; k < value.size(); ++k) os << name << "." << k << "=" << value[k].dump() << "\n";
        } else {
            os << name << "=" << value.dump() << "\n";
        }
    }
}

}  // namespace detail

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"compose-kit: dominant-light shadow editing over synthetic OLAT scenes", "compose-kit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "compose-kit 0.1.0");

    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    bool quiet = false;
    app.add_option("--seed", seed, "Seed override for randomized subcommands");
    app.add_option("--threads", threads, "Worker threads (default: COMPOSE_KIT_THREADS or all cores)")->check(CLI::Range(1u, 1024u));
    app.add_flag("--quiet,-q", quiet, "Suppress progress messages");

    // Subcommand bodies run after parsing so global flags apply regardless of
    // their position on the command line.
    std::vector<std::pair<CLI::App*, std::function<void()>>> actions;
    auto note = [&](const std::string& msg) {
        if (!quiet) out << msg << "\n";
    };

    // gen-olat
    std::string scene_arg, size_arg = "256x256", out_arg;
    int n_lights = kDefaultLightCount;
    auto* gen = app.add_subcommand("gen-olat", "Render an OLAT basis for a scene");
    gen->add_option("--scene", scene_arg, "Builtin scene name or scene JSON file")->required();
    gen->add_option("--lights", n_lights, "Number of basis lights")->check(CLI::Range(4, 100000));
    gen->add_option("--size", size_arg, "Image size WxH");
    gen->add_option("--out", out_arg, "Output directory")->required();
    actions.emplace_back(gen, [&] {
        const auto size = detail::parse_size(size_arg);
        const OlatBasis basis = build_olat_basis(resolve_scene(scene_arg), n_lights, size.width, size.height);
        save_basis(basis, out_arg);
        note("wrote " + std::to_string(basis.count()) + " OLAT images to " + out_arg);
    });

    // fit
    std::string env_arg;
    bool as_json = false;
    auto* fit = app.add_subcommand("fit", "Fit the dominant Gaussian light of an environment map");
    fit->add_option("--env", env_arg, "Environment map (.hdr/.pfm/.png) or builtin:<name>")->required();
    fit->add_flag("--json", as_json, "Print JSON");
    actions.emplace_back(fit, [&] {
        const LightFit f = fit_gaussian(resolve_environment(env_arg));
        nlohmann::json j = fit_to_json(f);
        j["iterations"] = f.iterations;
        if (as_json)
            out << j.dump(2) << "\n";
        else
            detail::print_kv(out, j);
    });

    // synth-env
    double u = 0.5, v = 0.5, sigma = 0.1, gamma = 1.0;
    std::optional<double> sigma_deg;
    int env_width = 64;
    auto* synth = app.add_subcommand("synth-env", "Write an environment map holding one Gaussian light");
    synth->add_option("--u", u, "Light longitude in [0,1)")->required();
    synth->add_option("--v", v, "Light colatitude in [0,1]")->required();
    auto* synth_sigma = synth->add_option("--sigma", sigma, "Angular spread in radians");
    synth->add_option("--sigma-deg", sigma_deg, "Angular spread in degrees")->excludes(synth_sigma);
    synth->add_option("--gamma", gamma, "Peak radiance")->required();
    synth->add_option("--size", env_width, "Map width (height is half)")->check(CLI::Range(4, 1 << 16));
    synth->add_option("--out", out_arg, "Output file")->required();
    actions.emplace_back(synth, [&] {
        if (!synth_sigma->count() && !sigma_deg) throw InvalidArgument("one of --sigma or --sigma-deg is required");
        const GaussianLight light{u, v, sigma_deg ? *sigma_deg * std::numbers::pi / 180.0 : sigma, gamma};
        save_envmap(synth_gaussian_env(light, env_width), out_arg);
        note("wrote " + out_arg);
    });

    // diffuse
    double beta = kDefaultDiffusionBeta;
    auto* diff = app.add_subcommand("diffuse", "Blur an environment map on the sphere");
    diff->add_option("--env", env_arg, "Environment map")->required();
    diff->add_option("--beta", beta, "Blur width in radians");
    diff->add_option("--out", out_arg, "Output file")->required();
    actions.emplace_back(diff, [&] {
        save_envmap(diffuse_env(resolve_environment(env_arg), beta), out_arg);
        note("wrote " + out_arg);
    });

    // render
    std::string basis_arg;
    double exposure = 1.0;
    auto* render = app.add_subcommand("render", "Relight an OLAT basis with an environment map");
    render->add_option("--basis", basis_arg, "OLAT basis directory")->required();
    render->add_option("--env", env_arg, "Environment map")->required();
    render->add_option("--out", out_arg, "Output image")->required();
    render->add_option("--exposure", exposure, "Exposure for .png output");
    actions.emplace_back(render, [&] {
        detail::write_output(render_olat(load_basis(basis_arg), resolve_environment(env_arg)), out_arg, exposure);
        note("wrote " + out_arg);
    });

    // edit
    std::optional<double> eu, ev, esigma, esigma_deg, egamma;
    double du = 0.0, sigma_scale = 1.0, gamma_scale = 1.0, omega_d = 0.0;
    std::string intermediates;
    auto* ed = app.add_subcommand("edit", "Edit the dominant light and composite the result");
    ed->add_option("--basis", basis_arg, "OLAT basis directory")->required();
    ed->add_option("--env", env_arg, "Source environment map")->required();
    ed->add_option("--u", eu, "Absolute light longitude");
    ed->add_option("--v", ev, "Absolute light colatitude");
    auto* ed_sigma = ed->add_option("--sigma", esigma, "Absolute spread in radians");
    ed->add_option("--sigma-deg", esigma_deg, "Absolute spread in degrees")->excludes(ed_sigma);
    ed->add_option("--gamma", egamma, "Absolute peak radiance");
    ed->add_option("--du", du, "Longitude shift applied to the fitted light");
    ed->add_option("--sigma-scale", sigma_scale, "Multiplier on the fitted spread")->check(CLI::PositiveNumber);
    ed->add_option("--gamma-scale", gamma_scale, "Multiplier on the fitted peak")->check(CLI::PositiveNumber);
    ed->add_option("--omega-d", omega_d, "Diffuse weight in [0,1]");
    ed->add_option("--beta", beta, "Diffusion blur width in radians");
    ed->add_option("--exposure", exposure, "Exposure for .png output");
    ed->add_option("--out", out_arg, "Output image")->required();
    ed->add_option("--save-intermediates", intermediates, "Directory for diffuse/shadowed images and the light");
    actions.emplace_back(ed, [&] {
        if (esigma_deg) esigma = *esigma_deg * std::numbers::pi / 180.0;
        EditRequest req;
        const bool in_place = !(eu && ev && esigma && egamma) || du != 0.0 || sigma_scale != 1.0 || gamma_scale != 1.0;
        if (in_place)
            req.light = LightEdit{eu, ev, esigma, egamma, du, sigma_scale, gamma_scale};
        else
            req.light = GaussianLight{*eu, *ev, *esigma, *egamma};
        req.omega_d = omega_d;
        req.beta = beta;
        req.exposure = exposure;
        const OlatBasis basis = load_basis(basis_arg);
        const EditResult r = edit(basis, resolve_environment(env_arg), req);
        detail::write_output(r.edited, out_arg, exposure);
        if (!intermediates.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(intermediates, ec);
            if (ec) throw IoError("cannot create '" + intermediates + "'");
            const std::filesystem::path dir = intermediates;
            save_image(r.diffuse, dir / "diffuse.pfm");
            save_image(r.shadowed, dir / "shadowed.pfm");
            nlohmann::json j = {{"light", light_to_json(r.light)}, {"omega_d", omega_d}, {"beta", beta}};
            if (r.fit) j["fit"] = fit_to_json(*r.fit);
            write_file_bytes(dir / "light.json", j.dump(2) + "\n");
        }
        note("wrote " + out_arg);
    });

    // composite
    std::string a_arg, b_arg;
    auto* comp = app.add_subcommand("composite", "Blend a diffuse and a shadowed image");
    comp->add_option("--a", a_arg, "Diffuse image")->required();
    comp->add_option("--b", b_arg, "Shadowed image")->required();
    comp->add_option("--omega-d", omega_d, "Weight of --a in [0,1]")->required();
    comp->add_option("--out", out_arg, "Output image")->required();
    comp->add_option("--exposure", exposure, "Exposure for .png output");
    actions.emplace_back(comp, [&] {
        detail::write_output(composite(load_image(a_arg), load_image(b_arg), omega_d), out_arg, exposure);
        note("wrote " + out_arg);
    });

    // metrics
    std::string mask_arg;
    auto* met = app.add_subcommand("metrics", "Compare two images");
    met->add_option("--a", a_arg, "First image")->required();
    met->add_option("--b", b_arg, "Second image")->required();
    met->add_option("--mask", mask_arg, "Mask image for masked MAE/MSE");
    met->add_flag("--json", as_json, "Print JSON");
    actions.emplace_back(met, [&] {
        std::optional<Mask> mask;
        if (!mask_arg.empty()) mask = load_mask(mask_arg);
        const MetricReport r = compare_images(load_image(a_arg), load_image(b_arg), mask ? &*mask : nullptr);
        nlohmann::json j = {{"mae", r.mae}, {"mse", r.mse}, {"ssim", r.ssim}};
        if (r.masked_mae) j["masked_mae"] = *r.masked_mae;
        if (r.masked_mse) j["masked_mse"] = *r.masked_mse;
        if (as_json)
            out << j.dump(2) << "\n";
        else
            detail::print_kv(out, j);
    });

    // emit-dataset
    std::string recipe_arg;
    auto* ds = app.add_subcommand("emit-dataset", "Generate training samples from a recipe");
    ds->add_option("--recipe", recipe_arg, "Recipe JSON")->required();
    ds->add_option("--out", out_arg, "Output directory")->required();
    actions.emplace_back(ds, [&] {
        DatasetRecipe recipe = load_recipe(recipe_arg);
        if (seed) recipe.seed = *seed;
        const auto rows = emit_dataset(recipe, out_arg);
        note("wrote " + std::to_string(rows.size()) + " samples to " + out_arg);
    });

    // serve
    std::vector<std::string> basis_dirs;
    int port = 8080;
    std::string host = "127.0.0.1";
    auto* srv = app.add_subcommand("serve", "Serve the HTTP editing API");
    srv->add_option("--basis", basis_dirs, "OLAT basis directory (repeatable)")->required();
    srv->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));
    srv->add_option("--host", host, "Bind address");
    srv->add_option("--env", env_arg, "Source environment preloaded for every scene");
    actions.emplace_back(srv, [&] {
        std::vector<OlatBasis> bases;
        for (const auto& d : basis_dirs) bases.push_back(load_basis(d));
        Service service(std::move(bases));
        if (!env_arg.empty()) {
            const EnvironmentMap env = resolve_environment(env_arg);
            for (const auto& id : service.scene_ids()) service.set_source(id, env);
        }
        if (!service.bind(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
        note("listening on http://" + host + ":" + std::to_string(port));
        out.flush();
        service.listen_after_bind();
    });

    try {
        app.parse(argc, argv);
        if (threads) set_thread_count(threads);
        for (auto& [sub, action] : actions)
            if (sub->parsed()) action();
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << e.what() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;
        err << "error: UsageError: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.name() << ": " << e.what() << "\n";
        return e.is_domain() ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace compose
