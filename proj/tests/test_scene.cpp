#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "splatwild/scene.hpp"

using namespace splatwild;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    auto p = fs::temp_directory_path() / (std::string("splatwild_") + tag + "_XXXXXX");
    std::string s = p.string();
    REQUIRE(mkdtemp(s.data()) != nullptr);
    return fs::path(s);
}

OrthoCamera look_down(int size, double ppu) {
    OrthoCamera cam;
    cam.width = size;
    cam.height = size;
    cam.pixels_per_unit = ppu;
    cam.translation = Vec3(0, 0, 5);
    return cam;
}

Gaussian3D blob(const Vec3& center, double log_scale, double opacity_logit, const Vec3& color) {
    Gaussian3D g;
    g.center = center;
    g.log_scale = Vec3::Constant(log_scale);
    g.opacity_logit = opacity_logit;
    g.color = color;
    return g;
}

int mask_count(const Mask& m) {
    int n = 0;
    for (uint8_t v : m.data) n += v ? 1 : 0;
    return n;
}

double mask_centroid_x(const Mask& m) {
    double sum = 0;
    int n = 0;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(y, x)) {
                sum += x + 0.5;
                ++n;
            }
    REQUIRE(n > 0);
    return sum / n;
}

}  // namespace

TEST_CASE("scene spec validation rejects malformed setups") {
    SyntheticSceneSpec spec;
    spec.statics.push_back(blob(Vec3::Zero(), -0.5, 2.0, Vec3(1, 0, 0)));
    spec.n_frames = 2;
    spec.cameras = {look_down(8, 2.0), look_down(8, 2.0)};
    REQUIRE_NOTHROW(spec.validate());

    SyntheticSceneSpec no_frames = spec;
    no_frames.n_frames = 0;
    no_frames.cameras.clear();
    REQUIRE_THROWS_AS(no_frames.validate(), std::invalid_argument);

    SyntheticSceneSpec short_cams = spec;
    short_cams.cameras.pop_back();
    REQUIRE_THROWS_AS(short_cams.validate(), std::invalid_argument);

    SyntheticSceneSpec bad_script = spec;
    DistractorScript d;
    d.shape = blob(Vec3::Zero(), -1.0, 2.0, Vec3(0, 1, 0));
    d.waypoints = {Vec3::Zero()};  // one waypoint for two frames
    bad_script.distractors.push_back(d);
    REQUIRE_THROWS_AS(bad_script.validate(), std::invalid_argument);

    d.waypoints.push_back(Vec3::Zero());
    SyntheticSceneSpec good_script = spec;
    good_script.distractors.push_back(d);
    REQUIRE_NOTHROW(good_script.validate());
}

TEST_CASE("segmentation assigns each pixel to the largest contribution share") {
    // Hand-built render record over a 1x3 image with two splats whose parent
    // order is deliberately permuted: splat 0 belongs to object 2, splat 1 to
    // object 1. Shares are alpha * incoming transmittance.
    std::vector<Splat2D> splats(2);
    splats[0].parent = 1;
    splats[1].parent = 0;

    RenderOutput ro;
    ro.final_transmittance = Image1(1, 3, 1.0);
    ro.contribs.resize(3);

    // Pixel 0: object 2 share 0.3, object 1 share 0.6 * 0.5 = 0.3, background
    // 0.2. Exact tie between the objects, so the lower id wins.
    ro.contribs[0] = {{0, 0.3, 1.0}, {1, 0.6, 0.5}};
    ro.final_transmittance.at(0, 0) = 0.2;

    // Pixel 1: object 2 alone with share 0.8 against background 0.2.
    ro.contribs[1] = {{0, 0.8, 1.0}};
    ro.final_transmittance.at(0, 1) = 0.2;

    // Pixel 2: nothing composited, stays background.

    IdMap seg = segmentation_from_render(ro, splats, 2, 3, 1);
    CHECK(seg.at(0, 0) == 1);
    CHECK(seg.at(0, 1) == 2);
    CHECK(seg.at(0, 2) == 0);

    RenderOutput unrecorded;
    unrecorded.final_transmittance = Image1(1, 3, 1.0);
    REQUIRE_THROWS_AS(segmentation_from_render(unrecorded, splats, 2, 3, 1), std::invalid_argument);
}

TEST_CASE("statics-only scenes have empty distractor artifacts") {
    SyntheticSceneSpec spec;
    spec.statics.push_back(blob(Vec3(0, 0, 0), -0.3, 3.0, Vec3(0.9, 0.2, 0.1)));
    spec.statics.push_back(blob(Vec3(1.5, 1.5, 0.5), -0.8, 3.0, Vec3(0.1, 0.8, 0.2)));
    spec.n_frames = 2;
    spec.cameras = {look_down(16, 3.0), look_down(16, 3.0)};
    spec.background = Vec3(0.05, 0.05, 0.05);

    SyntheticSequence seq = generate_synthetic_sequence(spec);
    REQUIRE(seq.frames.size() == 2);
    CHECK(seq.tracks.tracks.empty());

    for (const Frame& f : seq.frames) {
        CHECK(f.index >= 0);
        CHECK(mask_count(f.gt_distractor) == 0);
        // With no distractors the observed image is the clean render.
        CHECK(f.image.data == f.clean.data);
        REQUIRE(f.seg.height == 16);
        REQUIRE(f.seg.width == 16);
    }

    // The first static sits on the optical axis: its center pixel belongs to
    // it, and the far corner (several sigma away from both) is background.
    const IdMap& seg = seq.frames[0].seg;
    CHECK(seg.at(8, 8) == 1);
    CHECK(seg.at(15, 0) == 0);
}

TEST_CASE("segmentation matches an independent share recomputation") {
    SyntheticSceneSpec spec;
    spec.statics.push_back(blob(Vec3(-0.4, 0.2, 0.0), -0.4, 1.5, Vec3(0.8, 0.3, 0.2)));
    spec.statics.push_back(blob(Vec3(0.5, -0.3, 0.6), -0.7, 1.0, Vec3(0.2, 0.7, 0.4)));
    DistractorScript d;
    d.shape = blob(Vec3::Zero(), -0.9, 2.5, Vec3(0.9, 0.9, 0.1));
    d.waypoints = {Vec3(0.1, 0.1, -0.5)};
    spec.distractors.push_back(d);
    spec.n_frames = 1;
    spec.cameras = {look_down(24, 4.0)};
    spec.background = Vec3(0.1, 0.1, 0.1);

    SyntheticSequence seq = generate_synthetic_sequence(spec);
    const Frame& f = seq.frames[0];
    int n_objects = 3;

    // Rebuild the frame's full Gaussian list and replay the render with
    // contributions, then reduce the shares with an independent loop.
    std::vector<Gaussian3D> full = spec.statics;
    Gaussian3D moving = d.shape;
    moving.center = d.waypoints[0];
    full.push_back(moving);
    std::vector<Splat2D> splats = project(full, spec.cameras[0]);
    RenderOutput ro = render(splats, 24, 24, spec.background, true);

    int non_background = 0;
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            std::vector<double> share(n_objects + 1, 0.0);
            share[0] = ro.final_transmittance.at(y, x);
            for (const RenderContrib& c : ro.contribs[static_cast<size_t>(y) * 24 + x])
                share[1 + splats[c.splat].parent] += c.alpha * c.transmittance;
            int best = 0;
            double best_share = share[0];
            for (int id = 1; id <= n_objects; ++id)
                if (share[id] > best_share) {
                    best = id;
                    best_share = share[id];
                }
            INFO("pixel (" << y << ", " << x << ")");
            REQUIRE(f.seg.at(y, x) == static_cast<uint32_t>(best));
            if (best != 0) ++non_background;
        }
    // The fixture must actually exercise object pixels.
    REQUIRE(non_background > 20);
}

TEST_CASE("ground-truth masks match isolated renders and union over distractors") {
    SyntheticSceneSpec spec;
    spec.statics.push_back(blob(Vec3(0, 0, 1.0), -0.2, 2.0, Vec3(0.5, 0.5, 0.5)));
    DistractorScript left, right;
    left.shape = blob(Vec3::Zero(), -0.6, 4.0, Vec3(1, 0, 0));
    left.waypoints = {Vec3(-2.0, 0, 0)};
    right.shape = blob(Vec3::Zero(), -0.6, 4.0, Vec3(0, 0, 1));
    right.waypoints = {Vec3(2.0, 0, 0)};
    spec.distractors = {left, right};
    spec.n_frames = 1;
    spec.cameras = {look_down(32, 4.0)};

    SyntheticSequence seq = generate_synthetic_sequence(spec);
    REQUIRE(seq.tracks.tracks.size() == 2);
    REQUIRE(seq.tracks.tracks.at(0).size() == 1);
    REQUIRE(seq.tracks.tracks.at(1).size() == 1);

    const Frame& f = seq.frames[0];
    for (int d = 0; d < 2; ++d) {
        Gaussian3D g = spec.distractors[d].shape;
        g.center = spec.distractors[d].waypoints[0];
        RenderOutput iso = render_scene({g}, spec.cameras[0], Vec3::Zero());
        Mask expect(32, 32);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                expect.at(y, x) = 1.0 - iso.final_transmittance.at(y, x) > 0.5 ? 1 : 0;
        REQUIRE(mask_count(expect) > 0);
        CHECK(seq.tracks.tracks.at(d).at(0).data == expect.data);
    }

    // The frame mask is exactly the union of the per-distractor tracks.
    const Mask& a = seq.tracks.tracks.at(0).at(0);
    const Mask& b = seq.tracks.tracks.at(1).at(0);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            REQUIRE(f.gt_distractor.at(y, x) == ((a.at(y, x) || b.at(y, x)) ? 1 : 0));

    // Disjoint placements: the two tracks never overlap in this fixture.
    for (size_t i = 0; i < a.data.size(); ++i) REQUIRE(!(a.data[i] && b.data[i]));
}

TEST_CASE("distractor masks follow the waypoints") {
    SyntheticSceneSpec spec;
    spec.statics.push_back(blob(Vec3(0, 0, 1.0), -0.4, 1.0, Vec3(0.4, 0.4, 0.4)));
    DistractorScript d;
    d.shape = blob(Vec3::Zero(), -0.6, 4.0, Vec3(0.9, 0.1, 0.1));
    d.waypoints = {Vec3(-2, 0, 0), Vec3(0, 0, 0), Vec3(2, 0, 0)};
    spec.distractors.push_back(d);
    spec.n_frames = 3;
    spec.cameras = {look_down(32, 4.0), look_down(32, 4.0), look_down(32, 4.0)};

    SyntheticSequence seq = generate_synthetic_sequence(spec);
    REQUIRE(seq.tracks.tracks.at(0).size() == 3);

    // Camera maps world x to pixel x = 4 * x + 16, so the mask centroid walks
    // from 8 to 16 to 24 as the waypoints advance.
    double c0 = mask_centroid_x(seq.tracks.tracks.at(0).at(0));
    double c1 = mask_centroid_x(seq.tracks.tracks.at(0).at(1));
    double c2 = mask_centroid_x(seq.tracks.tracks.at(0).at(2));
    CHECK(std::abs(c0 - 8.0) < 1.0);
    CHECK(std::abs(c1 - 16.0) < 1.0);
    CHECK(std::abs(c2 - 24.0) < 1.0);

    // Statics do not move: the clean render is identical across frames while
    // the observed images differ.
    CHECK(seq.frames[0].clean.data == seq.frames[2].clean.data);
    CHECK(seq.frames[0].image.data != seq.frames[2].image.data);
}

TEST_CASE("pixels outside a distractor footprint match the clean render exactly") {
    SyntheticSceneSpec spec;
    spec.statics.push_back(blob(Vec3(0.3, -0.2, 1.0), -0.1, 1.5, Vec3(0.3, 0.6, 0.8)));
    DistractorScript d;
    d.shape = blob(Vec3::Zero(), -1.2, 4.0, Vec3(1, 0.2, 0.2));
    d.waypoints = {Vec3(-2.5, 0, 0)};
    spec.distractors.push_back(d);
    spec.n_frames = 1;
    spec.cameras = {look_down(32, 4.0)};
    spec.background = Vec3(0.02, 0.02, 0.02);

    SyntheticSequence seq = generate_synthetic_sequence(spec);
    const Frame& f = seq.frames[0];

    // Right of the distractor's conservative footprint box the compositing
    // sequences are identical, so observed and clean agree bitwise.
    Gaussian3D g = d.shape;
    g.center = d.waypoints[0];
    Splat2D sp = project_one(g, spec.cameras[0]);
    int first_clear = static_cast<int>(std::ceil(sp.x_hi + 1.0));
    REQUIRE(first_clear < 31);  // fixture must leave room on the right
    for (int y = 0; y < 32; ++y)
        for (int x = first_clear; x < 32; ++x)
            for (int c = 0; c < 3; ++c) REQUIRE(f.image.at(y, x, c) == f.clean.at(y, x, c));

    // At the distractor's own center the observed image shows it instead.
    Vec2 center_px = spec.cameras[0].to_image(g.center);
    int cx = static_cast<int>(center_px.x());
    int cy = static_cast<int>(center_px.y());
    REQUIRE(f.image.at(cy, cx, 0) != f.clean.at(cy, cx, 0));
    REQUIRE(f.gt_distractor.at(cy, cx) == 1);
}

TEST_CASE("sequence generation is deterministic") {
    SyntheticSceneSpec spec;
    spec.statics.push_back(blob(Vec3(-0.3, 0.4, 0.2), -0.5, 1.2, Vec3(0.7, 0.5, 0.3)));
    spec.statics.push_back(blob(Vec3(0.6, -0.1, 0.9), -0.8, 0.8, Vec3(0.2, 0.4, 0.9)));
    DistractorScript d;
    d.shape = blob(Vec3::Zero(), -0.7, 3.0, Vec3(0.9, 0.8, 0.1));
    d.waypoints = {Vec3(-1, -1, 0), Vec3(1, 1, 0)};
    spec.distractors.push_back(d);
    spec.n_frames = 2;
    spec.cameras = {look_down(24, 4.0), look_down(24, 4.0)};
    spec.background = Vec3(0.1, 0.2, 0.3);

    SyntheticSequence a = generate_synthetic_sequence(spec);
    SyntheticSequence b = generate_synthetic_sequence(spec);
    REQUIRE(a.frames.size() == b.frames.size());
    for (size_t i = 0; i < a.frames.size(); ++i) {
        CHECK(a.frames[i].image.data == b.frames[i].image.data);
        CHECK(a.frames[i].clean.data == b.frames[i].clean.data);
        CHECK(a.frames[i].seg.data == b.frames[i].seg.data);
        CHECK(a.frames[i].gt_distractor.data == b.frames[i].gt_distractor.data);
    }
    for (const auto& [id, track] : a.tracks.tracks)
        for (const auto& [frame, mask] : track) CHECK(mask.data == b.tracks.tracks.at(id).at(frame).data);
}

TEST_CASE("camera tables round-trip bitwise") {
    std::vector<Frame> frames(2);
    frames[0].index = 0;
    frames[0].camera.rotation = rotation_from_quat(Vec4(1, 2, 3, 4).normalized());
    frames[0].camera.translation = Vec3(0.1, -0.2, 5.3);
    frames[0].camera.pixels_per_unit = 3.7;
    frames[0].camera.width = 24;
    frames[0].camera.height = 16;
    frames[1].index = 3;  // indices need not be contiguous
    frames[1].camera = look_down(8, 2.0);
    frames[1].camera.translation = Vec3(1.0 / 3.0, 2.0 / 7.0, 4.9);

    fs::path dir = temp_dir("cams");
    std::string path = (dir / "cameras.txt").string();
    write_cameras(path, frames);
    auto cams = read_cameras(path);
    REQUIRE(cams.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(cams[i].first == frames[i].index);
        CHECK(cams[i].second.rotation == frames[i].camera.rotation);
        CHECK(cams[i].second.translation == frames[i].camera.translation);
        CHECK(cams[i].second.pixels_per_unit == frames[i].camera.pixels_per_unit);
        CHECK(cams[i].second.width == frames[i].camera.width);
        CHECK(cams[i].second.height == frames[i].camera.height);
    }

    std::string bad = (dir / "bad.txt").string();
    FILE* f = fopen(bad.c_str(), "w");
    fprintf(f, "0 1 0 0 0 1 0 0 0 1 0 0\n");  // truncated line
    fclose(f);
    REQUIRE_THROWS_AS(read_cameras(bad), std::runtime_error);

    std::string empty = (dir / "empty.txt").string();
    fclose(fopen(empty.c_str(), "w"));
    REQUIRE_THROWS_AS(read_cameras(empty), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("scene directories round-trip") {
    SyntheticSceneSpec spec;
    spec.statics.push_back(blob(Vec3(0, 0, 0.5), -0.3, 2.0, Vec3(0.6, 0.3, 0.8)));
    DistractorScript d;
    d.shape = blob(Vec3::Zero(), -0.8, 3.5, Vec3(0.9, 0.9, 0.2));
    d.waypoints = {Vec3(-1, 0, 0), Vec3(1, 0, 0)};
    spec.distractors.push_back(d);
    spec.n_frames = 2;
    spec.cameras = {look_down(16, 3.0), look_down(16, 3.0)};
    spec.background = Vec3(0.05, 0.1, 0.15);

    SyntheticSequence seq = generate_synthetic_sequence(spec);
    fs::path dir = temp_dir("scene");
    write_scene_dir(dir.string(), seq);

    SyntheticSequence back = load_scene_dir(dir.string());
    REQUIRE(back.frames.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        const Frame& orig = seq.frames[i];
        const Frame& got = back.frames[i];
        CHECK(got.index == orig.index);
        CHECK(got.camera.rotation == orig.camera.rotation);
        CHECK(got.camera.translation == orig.camera.translation);
        CHECK(got.camera.pixels_per_unit == orig.camera.pixels_per_unit);

        // PNG images come back quantized to the 8-bit lattice.
        REQUIRE(got.image.data.size() == orig.image.data.size());
        for (size_t k = 0; k < orig.image.data.size(); ++k)
            REQUIRE(got.image.data[k] == detail::quantize8(orig.image.data[k]) / 255.0);
        for (size_t k = 0; k < orig.clean.data.size(); ++k)
            REQUIRE(got.clean.data[k] == detail::quantize8(orig.clean.data[k]) / 255.0);

        // IDs and masks are exact.
        CHECK(got.seg.data == orig.seg.data);
        CHECK(got.gt_distractor.data == orig.gt_distractor.data);
    }
    REQUIRE(back.tracks.tracks.size() == 1);
    for (int i = 0; i < 2; ++i)
        CHECK(back.tracks.tracks.at(0).at(i).data == seq.tracks.tracks.at(0).at(i).data);

    // Loading tolerates missing optional pieces: drop the sidecars and the
    // tracks and the frames still come back with empty fields.
    fs::remove(dir / "clean_0000.png");
    fs::remove(dir / "seg_0000.png");
    fs::remove(dir / "gtmask_0000.png");
    fs::remove_all(dir / "tracks");
    SyntheticSequence partial = load_scene_dir(dir.string());
    CHECK(partial.frames[0].clean.data.empty());
    CHECK(partial.frames[0].seg.data.empty());
    CHECK(partial.frames[0].gt_distractor.data.empty());
    CHECK(partial.frames[1].seg.data == seq.frames[1].seg.data);
    CHECK(partial.tracks.tracks.empty());
    fs::remove_all(dir);
}
