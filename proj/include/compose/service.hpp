#pragma once

// HTTP facade for the interactive editor. Every render is a pure function of
// its query parameters and the session's (immutable) state, so identical
// requests return identical PNG bytes.
//
//   GET  /api/health
//   GET  /api/scenes
//   POST /api/scenes/{id}/env        raw .hdr/.pfm/.png body, or JSON {"builtin": name}
//   GET  /api/scenes/{id}/render     ?u&v&sigma&gamma&du&sigma_scale&gamma_scale&omega_d&beta&exposure&which

// Project headers (and Eigen through them) come first: httplib pulls in
// <resolv.h>, whose _res macro collides with Eigen parameter names.
#include "environments.hpp"
#include "gausslight.hpp"
#include "olat.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <charconv>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace compose {

namespace detail {

/// Source map plus its fit. Never modified after creation; the diffuse-image
/// memo only caches a pure function of (state, beta).
struct SourceState {
    EnvironmentMap env;
    std::optional<LightFit> fit;
    std::string fit_error;  // error name when the fit failed

    mutable std::mutex memo_mutex;
    mutable std::map<double, std::shared_ptr<const LinearImage>> diffuse_memo;
};

struct Session {
    std::string id;
    std::shared_ptr<const OlatBasis> basis;
    std::shared_ptr<const SourceState> source;  // replaced atomically under Service::mutex_
};

class BadParameter : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::optional<double> query_double(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    const std::string s = req.get_param_value(key);
    double value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value))
        throw BadParameter(std::string("parameter '") + key + "' is not a number");
    return value;
}

inline nlohmann::json error_body(const std::string& name, const std::string& message) {
    return {{"error", name}, {"message", message}};
}

}  // namespace detail

class Service {
public:
    /// Scene ids come from each basis' scene name; duplicates get a suffix.
    explicit Service(std::vector<OlatBasis> bases) {
        for (auto& b : bases) {
            validate_basis(b);
            std::string id = b.scene.empty() ? "scene" : b.scene;
            const std::string stem = id;
            for (int k = 2; sessions_.count(id); ++k) id = stem + "_" + std::to_string(k);
            sessions_[id] = detail::Session{id, std::make_shared<const OlatBasis>(std::move(b)), nullptr};
        }
        install_routes();
    }

    httplib::Server& server() { return server_; }

    std::vector<std::string> scene_ids() const {
        std::lock_guard lock(mutex_);
        std::vector<std::string> ids;
        for (const auto& [id, _] : sessions_) ids.push_back(id);
        return ids;
    }

    bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
    int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

    /// Sets a scene's source map directly (same semantics as POST .../env).
    nlohmann::json set_source(const std::string& id, EnvironmentMap env) {
        auto state = std::make_shared<detail::SourceState>();
        state->env = std::move(env);
        nlohmann::json result;
        try {
            state->fit = fit_gaussian(state->env);
            result = fit_to_json(*state->fit);
        } catch (const DomainError& e) {
            state->fit_error = e.name();
            result = detail::error_body(e.name(), e.what());
        }
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw InvalidArgument("unknown scene '" + id + "'");
        it->second.source = std::move(state);
        return result;
    }

private:
    std::optional<detail::Session> find(const std::string& id) const {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) return std::nullopt;
        return it->second;
    }

    static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static std::shared_ptr<const LinearImage> diffuse_for(const OlatBasis& basis, const detail::SourceState& src, double beta) {
        {
            std::lock_guard lock(src.memo_mutex);
            auto it = src.diffuse_memo.find(beta);
            if (it != src.diffuse_memo.end()) return it->second;
        }
        auto img = std::make_shared<const LinearImage>(diffuse_image(basis, src.env, beta));
        std::lock_guard lock(src.memo_mutex);
        if (src.diffuse_memo.size() > 16) src.diffuse_memo.clear();
        return src.diffuse_memo.emplace(beta, std::move(img)).first->second;
    }

    void install_routes() {
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                     {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                     {"Access-Control-Allow-Headers", "Content-Type"}});
        server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server_.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}});
        });

        server_.Get("/api/scenes", [this](const httplib::Request&, httplib::Response& res) {
            nlohmann::json list = nlohmann::json::array();
            std::lock_guard lock(mutex_);
            for (const auto& [id, s] : sessions_) {
                nlohmann::json item = {{"id", id},
                                       {"width", s.basis->width},
                                       {"height", s.basis->height},
                                       {"lights", s.basis->count()},
                                       {"has_env", s.source != nullptr}};
                if (s.source && s.source->fit) item["fit"] = fit_to_json(*s.source->fit);
                list.push_back(item);
            }
            send_json(res, 200, {{"scenes", list}});
        });

        server_.Post(R"(/api/scenes/([^/]+)/env)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (!find(id)) return send_json(res, 404, detail::error_body("UnknownScene", "no scene '" + id + "'"));
            EnvironmentMap env;
            try {
                if (req.get_header_value("Content-Type").rfind("application/json", 0) == 0) {
                    const auto body = nlohmann::json::parse(req.body);
                    env = builtin_environment(body.at("builtin").get<std::string>(), body.value("width", 64));
                } else {
                    env = decode_envmap(req.body, format_from_bytes(req.body));
                }
            } catch (const Error& e) {
                return send_json(res, 400, detail::error_body(e.name(), e.what()));
            } catch (const nlohmann::json::exception& e) {
                return send_json(res, 400, detail::error_body("BadRequest", e.what()));
            }
            const nlohmann::json result = set_source(id, std::move(env));
            send_json(res, result.contains("error") ? 422 : 200, result);
        });

        server_.Get(R"(/api/scenes/([^/]+)/render)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const auto session = find(id);
            if (!session) return send_json(res, 404, detail::error_body("UnknownScene", "no scene '" + id + "'"));
            try {
                render(*session, req, res);
            } catch (const detail::BadParameter& e) {
                send_json(res, 400, detail::error_body("BadParameter", e.what()));
            } catch (const DomainError& e) {
                send_json(res, 422, detail::error_body(e.name(), e.what()));
            } catch (const Error& e) {
                send_json(res, 400, detail::error_body(e.name(), e.what()));
            }
        });
    }

    static void render(const detail::Session& session, const httplib::Request& req, httplib::Response& res) {
        const std::string which = req.has_param("which") ? req.get_param_value("which") : "edited";
        if (which != "edited" && which != "diffuse" && which != "shadowed" && which != "envmap")
            throw detail::BadParameter("parameter 'which' must be edited, diffuse, shadowed or envmap");
        const double omega_d = detail::query_double(req, "omega_d").value_or(0.5);
        const double beta = detail::query_double(req, "beta").value_or(kDefaultDiffusionBeta);
        const double exposure = detail::query_double(req, "exposure").value_or(1.0);
        if (!(omega_d >= 0.0 && omega_d <= 1.0)) throw detail::BadParameter("omega_d must lie in [0,1]");
        if (!(beta > 0.0 && beta <= std::numbers::pi)) throw detail::BadParameter("beta must lie in (0, pi]");
        if (!(exposure > 0.0)) throw detail::BadParameter("exposure must be > 0");

        const auto u = detail::query_double(req, "u");
        const auto v = detail::query_double(req, "v");
        const auto sigma = detail::query_double(req, "sigma");
        const auto gamma = detail::query_double(req, "gamma");
        const auto du = detail::query_double(req, "du");
        const auto sigma_scale = detail::query_double(req, "sigma_scale");
        const auto gamma_scale = detail::query_double(req, "gamma_scale");
        GaussianLight light;
        const bool absolute = u && v && sigma && gamma && !du && !sigma_scale && !gamma_scale;
        const auto& src = session.source;

        if (which == "envmap" || which == "diffuse" || !absolute) {
            if (!src) throw NoSourceEnvironment("scene '" + session.id + "' has no source environment yet");
        }
        if (which == "envmap") {
            res.set_content(encode_png(tonemap(LinearImage{image_from_raster(src->env.to_raster())}, exposure)), "image/png");
            return;
        }
        if (which != "diffuse") {
            if (absolute) {
                light = {*u, *v, *sigma, *gamma};
            } else {
                if (!src->fit) throw NoDominantLight("source environment has no dominant light to edit in place");
                light = edit_light(src->fit->light, LightEdit{u, v, sigma, gamma, du.value_or(0.0),
                                                                       sigma_scale.value_or(1.0), gamma_scale.value_or(1.0)});
            }
            try {
                validate_light(light);
            } catch (const InvalidArgument& e) {
                throw detail::BadParameter(e.what());
            }
        }

        LinearImage out;
        if (which == "diffuse") {
            out = *diffuse_for(*session.basis, *src, beta);
        } else {
            LinearImage shadowed = render_olat(*session.basis, synth_gaussian_env(light, kShadowEnvWidth));
            if (which == "shadowed") {
                out = std::move(shadowed);
            } else {
                // Without a source map only the pure shadow branch is defined.
                if (!src && omega_d > 0.0) throw NoSourceEnvironment("omega_d > 0 needs a source environment");
                out = src ? composite(*diffuse_for(*session.basis, *src, beta), shadowed, omega_d) : std::move(shadowed);
            }
        }
        res.set_content(encode_png(tonemap(out, exposure)), "image/png");
    }

public:
    class NoSourceEnvironment : public DomainError {
    public:
        explicit NoSourceEnvironment(const std::string& what) : DomainError("NoSourceEnvironment", what) {}
    };

private:
    mutable std::mutex mutex_;
    std::map<std::string, detail::Session> sessions_;
    httplib::Server server_;
};

}  // namespace compose
