#include <compose/service.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <future>
#include <thread>

#include "shadow_checks.hpp"
#include "support.hpp"

using namespace compose;
using namespace testing_support;

namespace {

LinearImage decode_png_image(const std::string& bytes) {
    RgbRaster r = decode_png(bytes);
    return image_from_raster(std::move(r));
}

class ServiceTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        std::vector<OlatBasis> bases;
        bases.push_back(build_olat_basis(builtin_scene("head_proxy"), 160, 64, 64));
        bases.push_back(build_olat_basis(builtin_scene("sphere_on_plane"), 40, 32, 32));
        service_ = new Service(std::move(bases));
        port_ = service_->bind_any_port("127.0.0.1");
        ASSERT_GT(port_, 0);
        thread_ = new std::thread([] { service_->listen_after_bind(); });
        service_->wait_until_ready();
    }
    static void TearDownTestSuite() {
        service_->stop();
        thread_->join();
        delete thread_;
        delete service_;
    }

    static httplib::Client client() {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(60, 0);
        return c;
    }

    static nlohmann::json post_env(const std::string& scene, const std::string& body, const std::string& type, int& status) {
        auto res = client().Post("/api/scenes/" + scene + "/env", body, type);
        status = res ? res->status : -1;
        return res ? nlohmann::json::parse(res->body) : nlohmann::json();
    }

    static inline Service* service_ = nullptr;
    static inline std::thread* thread_ = nullptr;
    static inline int port_ = 0;
};

}  // namespace

TEST_F(ServiceTest, Health) {
    auto res = client().Get("/api/health");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(ServiceTest, ListsScenes) {
    auto res = client().Get("/api/scenes");
    ASSERT_TRUE(res);
    const auto j = nlohmann::json::parse(res->body);
    ASSERT_EQ(j["scenes"].size(), 2u);
    std::vector<std::string> ids;
    for (const auto& s : j["scenes"]) ids.push_back(s["id"]);
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(ids, (std::vector<std::string>{"head_proxy", "sphere_on_plane"}));
}

TEST_F(ServiceTest, CorsPreflight) {
    auto res = client().Options("/api/scenes/head_proxy/render");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 204);
    EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("GET"), std::string::npos);
}

TEST_F(ServiceTest, UnknownSceneIs404) {
    auto res = client().Get("/api/scenes/teapot/render?u=0.1&v=0.2&sigma=0.1&gamma=1");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404);
    int status = 0;
    post_env("teapot", R"({"builtin":"sun_sky"})", "application/json", status);
    EXPECT_EQ(status, 404);
}

TEST_F(ServiceTest, MalformedParameterIs400) {
    for (const char* q : {"u=abc&v=0.2&sigma=0.1&gamma=1", "u=0.1&v=0.2&sigma=0.1&gamma=1&which=foo",
                          "u=0.1&v=0.2&sigma=5&gamma=1&omega_d=0", "u=0.1&v=0.2&sigma=0.1&gamma=1&omega_d=2",
                          "u=0.1&v=0.2&sigma=0.1&gamma=1&exposure=-1", "sigma_scale=nan"}) {
        auto res = client().Get(std::string("/api/scenes/sphere_on_plane/render?") + q);
        ASSERT_TRUE(res);
        EXPECT_EQ(res->status, 400) << q;
        EXPECT_TRUE(nlohmann::json::parse(res->body).contains("error")) << q;
    }
    int status = 0;
    post_env("sphere_on_plane", "not an image", "application/octet-stream", status);
    EXPECT_EQ(status, 400);
}

TEST_F(ServiceTest, PostedSynthEnvFitsOverTheWire) {
    const GaussianLight l{0.25, 0.5, 0.1, 4.0};
    int status = 0;
    const auto fit = post_env("head_proxy", encode_pfm(synth_gaussian_env(l, 64).to_raster()), "application/octet-stream", status);
    ASSERT_EQ(status, 200) << fit.dump();
    EXPECT_LE(wrapped_distance(fit["u"].get<double>(), l.u), 1.0 / 64);
    EXPECT_LE(std::abs(fit["v"].get<double>() - l.v), 1.0 / 64);
    EXPECT_LE(std::abs(fit["sigma"].get<double>() / l.sigma - 1), 0.05);
    EXPECT_LE(std::abs(fit["gamma"].get<double>() / l.gamma - 1), 0.02);
    for (const auto& a : fit["ambient"]) EXPECT_LE(std::abs(a.get<double>()), 0.01);
    EXPECT_TRUE(fit.contains("peak_to_mean"));
}

TEST_F(ServiceTest, UniformEnvIs422) {
    int status = 0;
    const auto body = post_env("sphere_on_plane", encode_hdr(uniform_env(64, 0.3).to_raster()), "application/octet-stream", status);
    EXPECT_EQ(status, 422);
    EXPECT_EQ(body["error"], "NoDominantLight");
    // In-place edits need a fitted light.
    auto res = client().Get("/api/scenes/sphere_on_plane/render?sigma=0.1");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 422);
    // Explicit placement still renders.
    res = client().Get("/api/scenes/sphere_on_plane/render?u=0.1&v=0.3&sigma=0.1&gamma=2&omega_d=0.5");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
}

TEST_F(ServiceTest, FullDiffuseWeightMatchesDiffusePanel) {
    int status = 0;
    post_env("head_proxy", R"({"builtin":"sun_sky"})", "application/json", status);
    ASSERT_EQ(status, 200);
    auto edited = client().Get("/api/scenes/head_proxy/render?u=0.7&v=0.2&sigma=0.3&gamma=5&omega_d=1&beta=0.6&exposure=2");
    auto diffuse = client().Get("/api/scenes/head_proxy/render?which=diffuse&beta=0.6&exposure=2");
    ASSERT_TRUE(edited && diffuse);
    EXPECT_EQ(edited->status, 200);
    EXPECT_EQ(edited->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(edited->body, diffuse->body);
}

TEST_F(ServiceTest, EnvPanelReturnsSourceMap) {
    int status = 0;
    post_env("head_proxy", R"({"builtin":"studio_key","width":32})", "application/json", status);
    ASSERT_EQ(status, 200);
    auto res = client().Get("/api/scenes/head_proxy/render?which=envmap");
    ASSERT_TRUE(res);
    const RgbRaster r = decode_png(res->body);
    EXPECT_EQ(r.width, 32);
    EXPECT_EQ(r.height, 16);
}

TEST_F(ServiceTest, HalvingSigmaDarkensUmbra) {
    int status = 0;
    post_env("head_proxy", R"({"builtin":"sun_sky"})", "application/json", status);
    ASSERT_EQ(status, 200);
    const SceneSpec scene = builtin_scene("head_proxy");
    const GaussianLight fitted = fit_gaussian(builtin_environment("sun_sky")).light;
    const Mask umbra = umbra_mask(scene, fitted.direction(), 64, 64);
    const Mask band = shadow_edge_band(umbra, ground_mask(trace_primary(scene, 64, 64)), 2);
    auto base = client().Get("/api/scenes/head_proxy/render?which=shadowed&exposure=4");
    auto half = client().Get("/api/scenes/head_proxy/render?which=shadowed&exposure=4&sigma=" + std::to_string(fitted.sigma / 2));
    ASSERT_TRUE(base && half);
    ASSERT_EQ(base->status, 200);
    ASSERT_EQ(half->status, 200);
    EXPECT_NE(base->body, half->body);
    const double before = shadow_stats(decode_png_image(base->body), umbra, band).umbra_mean_luma;
    const double after = shadow_stats(decode_png_image(half->body), umbra, band).umbra_mean_luma;
    EXPECT_LT(after, before);
}

TEST_F(ServiceTest, ConcurrentIdenticalRequestsAgree) {
    int status = 0;
    post_env("head_proxy", R"({"builtin":"sun_sky"})", "application/json", status);
    ASSERT_EQ(status, 200);
    const std::string url = "/api/scenes/head_proxy/render?du=0.1&omega_d=0.4&beta=0.5";
    std::vector<std::future<std::string>> futures;
    for (int k = 0; k < 4; ++k)
        futures.push_back(std::async(std::launch::async, [&] {
            auto res = client().Get(url);
            return res && res->status == 200 ? res->body : std::string();
        }));
    std::vector<std::string> bodies;
    for (auto& f : futures) bodies.push_back(f.get());
    ASSERT_FALSE(bodies[0].empty());
    for (const auto& b : bodies) EXPECT_EQ(b, bodies[0]);
}

TEST_F(ServiceTest, UploadDoesNotTouchOtherScenes) {
    int status = 0;
    post_env("sphere_on_plane", R"({"builtin":"studio_key"})", "application/json", status);
    ASSERT_EQ(status, 200);
    auto before = client().Get("/api/scenes/sphere_on_plane/render?which=diffuse");
    post_env("head_proxy", R"({"builtin":"sun_sky"})", "application/json", status);
    auto after = client().Get("/api/scenes/sphere_on_plane/render?which=diffuse");
    ASSERT_TRUE(before && after);
    EXPECT_EQ(before->body, after->body);
}

TEST(ServiceLatency, FullSizeRenderP95) {
    std::vector<OlatBasis> bases;
    bases.push_back(build_olat_basis(builtin_scene("head_proxy"), 160, 256, 256));
    Service service(std::move(bases));
    service.set_source("head_proxy", builtin_environment("sun_sky"));
    const int port = service.bind_any_port("127.0.0.1");
    std::thread t([&] { service.listen_after_bind(); });
    service.wait_until_ready();
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    // Warm the diffuse cache, as the UI does on its first frame.
    ASSERT_EQ(c.Get("/api/scenes/head_proxy/render?which=diffuse")->status, 200);
    std::vector<double> ms;
    for (int k = 0; k < 20; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        auto res = c.Get("/api/scenes/head_proxy/render?omega_d=0.3&sigma=" + std::to_string(0.05 + 0.01 * k));
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        ASSERT_TRUE(res);
        ASSERT_EQ(res->status, 200);
    }
    std::sort(ms.begin(), ms.end());
    const double p95 = ms[static_cast<std::size_t>(0.95 * (ms.size() - 1))];
    RecordProperty("p95_ms", std::to_string(p95));
    std::printf("render p95 %.1f ms\n", p95);
    EXPECT_LT(p95, 500.0);
    service.stop();
    t.join();
}
