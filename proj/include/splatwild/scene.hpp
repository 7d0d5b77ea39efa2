#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "splatwild/camera.hpp"
#include "splatwild/masking.hpp"
#include "splatwild/png_io.hpp"
#include "splatwild/renderer.hpp"

namespace splatwild {

// ---------------------------------------------------------------------------
// Synthetic dynamic scenes: a static Gaussian arrangement plus scripted
// distractors, rendered with per-pixel segmentation, ground-truth distractor
// masks, distractor-free reference images, and per-distractor mask tracks.
// ---------------------------------------------------------------------------

struct DistractorScript {
    Gaussian3D shape;             // template; center comes from the waypoints
    std::vector<Vec3> waypoints;  // one center per frame
};

struct SyntheticSceneSpec {
    std::vector<Gaussian3D> statics;
    std::vector<DistractorScript> distractors;
    int n_frames = 0;
    std::vector<OrthoCamera> cameras;  // one per frame
    Vec3 background = Vec3::Zero();
    uint64_t rng_seed = 0;

    void validate() const {
        if (n_frames <= 0) throw std::invalid_argument("scene spec: need at least one frame");
        if (cameras.size() != static_cast<size_t>(n_frames))
            throw std::invalid_argument("scene spec: camera count must match frame count");
        for (const DistractorScript& d : distractors)
            if (d.waypoints.size() != static_cast<size_t>(n_frames))
                throw std::invalid_argument("scene spec: every script needs one waypoint per frame");
        for (const OrthoCamera& cam : cameras) cam.validate();
    }
};

struct SyntheticSequence {
    std::vector<Frame> frames;
    TrackStore tracks;  // track id = distractor index, one mask per frame
};

// Segmentation by compositing weight: each pixel goes to the object whose
// splat contributed the largest share of its color (alpha times the
// transmittance it was composited under), with the leftover transmittance
// competing as background (id 0). Objects are numbered 1..n in source order:
// statics first, then one id per distractor. Ties go to the lower id.
inline IdMap segmentation_from_render(const RenderOutput& ro, const std::vector<Splat2D>& splats,
                                      int n_objects, int width, int height) {
    if (ro.contribs.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("segmentation: render was not recorded with contributions");
    IdMap seg(height, width);
    std::vector<double> share(n_objects + 1);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            std::fill(share.begin(), share.end(), 0.0);
            share[0] = ro.final_transmittance.at(y, x);
            for (const RenderContrib& c : ro.contribs[static_cast<size_t>(y) * width + x])
                share[1 + splats[c.splat].parent] += c.alpha * c.transmittance;
            int best = 0;
            for (int id = 1; id <= n_objects; ++id)
                if (share[id] > share[best]) best = id;
            seg.at(y, x) = static_cast<uint32_t>(best);
        }
    return seg;
}

inline SyntheticSequence generate_synthetic_sequence(const SyntheticSceneSpec& spec) {
    spec.validate();
    int n_static = static_cast<int>(spec.statics.size());
    int n_objects = n_static + static_cast<int>(spec.distractors.size());

    SyntheticSequence out;
    for (int i = 0; i < spec.n_frames; ++i) {
        const OrthoCamera& cam = spec.cameras[i];

        std::vector<Gaussian3D> full = spec.statics;
        for (const DistractorScript& d : spec.distractors) {
            Gaussian3D g = d.shape;
            g.center = d.waypoints[i];
            full.push_back(g);
        }

        Frame frame;
        frame.index = i;
        frame.camera = cam;
        std::vector<Splat2D> splats = project(full, cam);
        RenderOutput ro = render(splats, cam.width, cam.height, spec.background, true);
        frame.image = ro.image;
        frame.seg = segmentation_from_render(ro, splats, n_objects, cam.width, cam.height);
        frame.clean = render_scene(spec.statics, cam, spec.background).image;

        frame.gt_distractor = Mask(cam.height, cam.width);
        for (size_t d = 0; d < spec.distractors.size(); ++d) {
            Gaussian3D g = spec.distractors[d].shape;
            g.center = spec.distractors[d].waypoints[i];
            RenderOutput iso = render_scene({g}, cam, Vec3::Zero());
            Mask m(cam.height, cam.width);
            for (int y = 0; y < cam.height; ++y)
                for (int x = 0; x < cam.width; ++x) {
                    if (1.0 - iso.final_transmittance.at(y, x) > 0.5) {
                        m.at(y, x) = 1;
                        frame.gt_distractor.at(y, x) = 1;
                    }
                }
            out.tracks.tracks[static_cast<int>(d)][i] = std::move(m);
        }
        out.frames.push_back(std::move(frame));
    }
    return out;
}

// ---------------------------------------------------------------------------
// On-disk layout: frame/seg/gtmask/clean PNGs, cameras.txt, tracks/.
// ---------------------------------------------------------------------------

namespace detail {
inline std::string frame_file(const std::string& stem, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%04d.png", index);
    return stem + buf;
}
}  // namespace detail

inline void write_cameras(const std::string& path, const std::vector<Frame>& frames) {
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const Frame& fr : frames) {
        const OrthoCamera& cam = fr.camera;
        std::fprintf(f, "%d", fr.index);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) std::fprintf(f, " %.17g", cam.rotation(r, c));
        for (int c = 0; c < 3; ++c) std::fprintf(f, " %.17g", cam.translation[c]);
        std::fprintf(f, " %.17g %d %d\n", cam.pixels_per_unit, cam.width, cam.height);
    }
    std::fclose(f);
}

inline std::vector<std::pair<int, OrthoCamera>> read_cameras(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "r");
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<std::pair<int, OrthoCamera>> cams;
    while (true) {
        int index;
        OrthoCamera cam;
        double m[9], t[3];
        int got = std::fscanf(f, "%d %lg %lg %lg %lg %lg %lg %lg %lg %lg %lg %lg %lg %lg %d %d", &index,
                              &m[0], &m[1], &m[2], &m[3], &m[4], &m[5], &m[6], &m[7], &m[8], &t[0], &t[1],
                              &t[2], &cam.pixels_per_unit, &cam.width, &cam.height);
        if (got == EOF) break;
        if (got != 16) {
            std::fclose(f);
            throw std::runtime_error(path + ": malformed camera line");
        }
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cam.rotation(r, c) = m[3 * r + c];
        cam.translation = Vec3(t[0], t[1], t[2]);
        cams.emplace_back(index, cam);
    }
    std::fclose(f);
    if (cams.empty()) throw std::runtime_error(path + ": no cameras");
    return cams;
}

inline void write_scene_dir(const std::string& dir, const SyntheticSequence& seq) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (const Frame& f : seq.frames) {
        write_png_rgb8(dir + "/" + detail::frame_file("frame", f.index), f.image);
        write_png_rgb8(dir + "/" + detail::frame_file("clean", f.index), f.clean);
        write_png_ids(dir + "/" + detail::frame_file("seg", f.index), f.seg);
        write_png_mask(dir + "/" + detail::frame_file("gtmask", f.index), f.gt_distractor);
    }
    write_cameras(dir + "/cameras.txt", seq.frames);
    save_track_store(dir + "/tracks", seq.tracks);
}

// Reads a scene directory back. Images come back 8-bit quantized; cameras and
// masks are exact. Missing optional pieces (clean renders, ground-truth masks,
// tracks) load as empty.
inline SyntheticSequence load_scene_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    SyntheticSequence seq;
    for (const auto& [index, cam] : read_cameras(dir + "/cameras.txt")) {
        Frame f;
        f.index = index;
        f.camera = cam;
        f.image = read_png_rgb8(dir + "/" + detail::frame_file("frame", index));
        std::string clean = dir + "/" + detail::frame_file("clean", index);
        if (fs::exists(clean)) f.clean = read_png_rgb8(clean);
        std::string seg = dir + "/" + detail::frame_file("seg", index);
        if (fs::exists(seg)) f.seg = read_png_ids(seg);
        std::string gt = dir + "/" + detail::frame_file("gtmask", index);
        if (fs::exists(gt)) f.gt_distractor = read_png_mask(gt);
        seq.frames.push_back(std::move(f));
    }
    if (fs::exists(dir + "/tracks/manifest.txt")) seq.tracks = load_track_store(dir + "/tracks");
    return seq;
}

}  // namespace splatwild
