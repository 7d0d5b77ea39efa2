#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fixtures.hpp"
#include "splatwild/renderer.hpp"

using namespace splatwild;

namespace {

OrthoCamera identity_camera(int size, double ppu = 1.0) {
    OrthoCamera cam;
    cam.width = size;
    cam.height = size;
    cam.pixels_per_unit = ppu;
    return cam;
}

// Literal transcription of the compositing rules, no footprint box, used as
// the oracle: the box test in render() must never change a pixel.
Vec3 composite_pixel_oracle(const std::vector<Splat2D>& splats, double px, double py, const Vec3& bg) {
    double T = 1.0;
    Vec3 c = Vec3::Zero();
    for (const Splat2D& sp : splats) {
        if (T < kTransmittanceStop) break;
        Vec2 d(px - sp.center2.x(), py - sp.center2.y());
        double alpha = std::min(kAlphaClamp, sp.opacity * std::exp(-0.5 * d.dot(sp.cov2_inv * d)));
        if (alpha < kAlphaSkip) continue;
        c += sp.color * (alpha * T);
        T *= 1.0 - alpha;
    }
    return c + T * bg;
}

}  // namespace

TEST_CASE("axis gaussian projects to the image center with unit covariance") {
    Gaussian3D g;
    OrthoCamera cam = identity_camera(64);
    Splat2D sp = project_one(g, cam);
    CHECK(sp.center2.x() == 32.0);
    CHECK(sp.center2.y() == 32.0);
    CHECK((sp.cov2 - Mat2::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(sp.depth == 0.0);
}

TEST_CASE("camera rotation carries anisotropy into the screen covariance") {
    Gaussian3D g;
    g.center = Vec3(1.0, 0.0, 0.0);
    g.log_scale = Vec3(std::log(2.0), 0.0, 0.0);  // world covariance diag(4,1,1)
    OrthoCamera cam = identity_camera(64, 2.0);
    cam.rotation << 0, -1, 0,
                    1,  0, 0,
                    0,  0, 1;
    Splat2D sp = project_one(g, cam);
    // Camera space position (0,1,0): x pixel at center, y offset by ppu.
    CHECK(sp.center2.x() == Catch::Approx(32.0).margin(1e-12));
    CHECK(sp.center2.y() == Catch::Approx(34.0).margin(1e-12));
    Mat2 expected;
    expected << 4.0, 0.0, 0.0, 16.0;  // ppu^2 * diag(1, 4)
    CHECK((sp.cov2 - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("screen covariance eigenvalues are floored for degenerate footprints") {
    Gaussian3D g;
    g.log_scale = Vec3(-15.0, -15.0, 0.0);  // sub-pixel sliver
    Splat2D sp = project_one(g, identity_camera(32));
    Vec2 eig = sym2x2_eigenvalues(sp.cov2);
    CHECK(eig[0] >= kCovEigenFloor * (1.0 - 1e-12));
}

TEST_CASE("a saturated splat leaves exactly 1 percent background at its center") {
    Gaussian3D g;
    g.opacity_logit = 40.0;  // sigmoid -> 1 within double precision
    g.color = Vec3(1.0, 0.0, 0.0);
    OrthoCamera cam = identity_camera(31);  // odd size: pixel (15,15) samples the center
    Vec3 bg(0.0, 0.0, 1.0);
    RenderOutput out = render_scene({g}, cam, bg);
    CHECK(out.image.at(15, 15, 0) == Catch::Approx(0.99).margin(1e-12));
    CHECK(out.image.at(15, 15, 2) == Catch::Approx(0.01).margin(1e-12));
}

TEST_CASE("front splat wins and swapping depths flips the winner") {
    Gaussian3D near, far;
    near.color = Vec3(1, 0, 0);
    far.color = Vec3(0, 1, 0);
    near.opacity_logit = far.opacity_logit = 40.0;
    near.center = Vec3(0, 0, -1.0);
    far.center = Vec3(0, 0, 1.0);
    OrthoCamera cam = identity_camera(31);

    RenderOutput a = render_scene({near, far}, cam, Vec3::Zero());
    CHECK(a.image.at(15, 15, 0) == Catch::Approx(0.99).margin(1e-12));
    CHECK(a.image.at(15, 15, 1) == Catch::Approx(0.0099).margin(1e-12));

    std::swap(near.center, far.center);
    RenderOutput b = render_scene({near, far}, cam, Vec3::Zero());
    CHECK(b.image.at(15, 15, 1) == Catch::Approx(0.99).margin(1e-12));
}

TEST_CASE("depth-unsorted splat lists are rejected") {
    Gaussian3D g;
    OrthoCamera cam = identity_camera(16);
    std::vector<Splat2D> splats = {project_one(g, cam), project_one(g, cam)};
    splats[0].depth = 1.0;
    splats[1].depth = 0.0;
    CHECK_THROWS_AS(render(splats, 16, 16, Vec3::Zero()), std::invalid_argument);
}

TEST_CASE("compositing stops once transmittance is exhausted") {
    std::vector<Gaussian3D> stack;
    for (int i = 0; i < 50; ++i) {
        Gaussian3D g;
        g.center = Vec3(0, 0, i * 0.1);
        g.opacity_logit = 3.0;
        g.color = Vec3(1, 1, 1);
        stack.push_back(g);
    }
    OrthoCamera cam = identity_camera(31);
    RenderOutput out = render_scene(stack, cam, Vec3::Zero(), true);
    CHECK(out.final_transmittance.at(15, 15) < kTransmittanceStop);
    // The early-out must have dropped most of the stack at the center pixel.
    CHECK(out.contribs[15 * 31 + 15].size() < 10);
}

TEST_CASE("sub-threshold contributions leave the background untouched") {
    Gaussian3D g;
    g.opacity_logit = inverse_sigmoid(0.003);  // below the 1/255 skip everywhere
    g.color = Vec3(1, 1, 1);
    OrthoCamera cam = identity_camera(16);
    Vec3 bg(0.25, 0.5, 0.75);
    RenderOutput out = render_scene({g}, cam, bg);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) CHECK(out.image.at(y, x, c) == bg[c]);
}

TEST_CASE("channels stay inside the unit interval on random scenes") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
        testing::GradCheckScene s = testing::make_gradcheck_scene(seed, 24, 6);
        RenderOutput out = render_scene(s.gaussians, s.camera, s.background);
        double lo = 1.0, hi = 0.0;
        for (double v : out.image.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo >= 0.0);
        CHECK(hi <= 1.0);
    }
}

TEST_CASE("compositing weights sum to one: uniform colors render uniformly") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::vector<Gaussian3D> scene;
    for (int i = 0; i < 6; ++i) {
        Gaussian3D g;
        g.center = Vec3(u(rng), u(rng), i * 0.2);
        g.log_scale = Vec3(-0.5, -0.5, -0.5);
        g.opacity_logit = 1.0;
        g.color = Vec3(0.6, 0.6, 0.6);
        scene.push_back(g);
    }
    OrthoCamera cam = identity_camera(24, 6.0);
    RenderOutput out = render_scene(scene, cam, Vec3(0.6, 0.6, 0.6));
    for (double v : out.image.data) CHECK(v == Catch::Approx(0.6).margin(1e-12));
}

TEST_CASE("footprint box skip is invisible next to brute-force compositing") {
    for (uint64_t seed = 100; seed < 104; ++seed) {
        testing::GradCheckScene s = testing::make_gradcheck_scene(seed, 16, 5);
        std::vector<Splat2D> splats = project(s.gaussians, s.camera);
        RenderOutput out = render(splats, 16, 16, s.background);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                Vec3 expected = composite_pixel_oracle(splats, x + 0.5, y + 0.5, s.background);
                for (int c = 0; c < 3; ++c) CHECK(out.image.at(y, x, c) == Catch::Approx(expected[c]).margin(1e-13));
            }
    }
}
