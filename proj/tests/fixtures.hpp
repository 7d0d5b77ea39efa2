#pragma once

// Shared synthetic fixtures for the unit suites and the acceptance runner.

#include <random>
#include <vector>

#include "splatwild/backward.hpp"
#include "splatwild/camera.hpp"
#include "splatwild/gaussian.hpp"
#include "splatwild/renderer.hpp"

namespace splatwild::testing {

struct GradCheckScene {
    std::vector<Gaussian3D> gaussians;
    OrthoCamera camera;
    Vec3 background;
    Image3 gt;
    Mask keep;
};

// Random scene for gradient checks. Ground truth lives in [0, 0.1] while every
// splat color and the background stay >= 0.3, so |render - gt| never crosses
// zero and the L1 loss is smooth around the evaluation point (a central
// difference at a kink would not measure the derivative).
inline GradCheckScene make_gradcheck_scene(uint64_t seed, int size = 20, int n_gaussians = 4) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto in = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    GradCheckScene s;
    s.camera.width = size;
    s.camera.height = size;
    s.camera.pixels_per_unit = in(3.0, 5.0);
    Vec4 cq(in(0.5, 1.5), in(-0.3, 0.3), in(-0.3, 0.3), in(-0.3, 0.3));
    s.camera.rotation = rotation_from_quat(cq);
    s.camera.translation = Vec3(in(-0.2, 0.2), in(-0.2, 0.2), in(2.0, 3.0));
    s.background = Vec3(in(0.3, 0.9), in(0.3, 0.9), in(0.3, 0.9));

    double half_units = size / 2.0 / s.camera.pixels_per_unit;
    for (int i = 0; i < n_gaussians; ++i) {
        while (true) {
            Gaussian3D g;
            Vec3 cam_pos(in(-0.7, 0.7) * half_units, in(-0.7, 0.7) * half_units, in(-1.0, 1.0));
            g.center = s.camera.rotation.transpose() * (cam_pos - s.camera.translation);
            g.log_scale = Vec3(in(-1.4, -0.4), in(-1.4, -0.4), in(-1.4, -0.4));
            Vec4 q(in(0.5, 1.5), in(-0.5, 0.5), in(-0.5, 0.5), in(-0.5, 0.5));
            g.rotation = q.normalized();
            g.opacity_logit = in(-1.0, 2.0);
            g.color = Vec3(in(0.3, 0.95), in(0.3, 0.95), in(0.3, 0.95));
            // Keep depths clearly separated so a finite-difference step can
            // never reorder the compositing.
            bool depth_ok = true;
            double depth = (s.camera.rotation * g.center + s.camera.translation).z();
            for (const Gaussian3D& other : s.gaussians) {
                double od = (s.camera.rotation * other.center + s.camera.translation).z();
                if (std::abs(od - depth) < 1e-2) depth_ok = false;
            }
            if (depth_ok) {
                s.gaussians.push_back(g);
                break;
            }
        }
    }

    s.gt = Image3(size, size);
    for (double& v : s.gt.data) v = in(0.0, 0.1);
    s.keep = Mask(size, size, 0);
    for (auto& v : s.keep.data) v = u01(rng) < 0.75 ? 1 : 0;
    return s;
}

inline double scene_masked_l1(const GradCheckScene& s) {
    RenderOutput out = render_scene(s.gaussians, s.camera, s.background);
    return masked_l1(out.image, s.gt, s.keep);
}

struct GradCheckStats {
    int checked = 0;
    int failed = 0;
    double worst_rel = 0.0;
};

// Central-difference comparison for one scalar parameter slot.
// Passes when relative error <= 1e-4, falling back to absolute <= 1e-7 for
// near-zero gradients.
inline bool check_one_gradient(GradCheckScene& s, double* slot, double analytic, double h,
                               GradCheckStats* stats) {
    double saved = *slot;
    *slot = saved + h;
    double plus = scene_masked_l1(s);
    *slot = saved - h;
    double minus = scene_masked_l1(s);
    *slot = saved;
    double fd = (plus - minus) / (2.0 * h);

    ++stats->checked;
    bool ok;
    if (std::abs(analytic) < 1e-3) {
        ok = std::abs(analytic - fd) <= 1e-7;
    } else {
        double rel = std::abs(analytic - fd) / std::max(std::abs(analytic), std::abs(fd));
        stats->worst_rel = std::max(stats->worst_rel, rel);
        ok = rel <= 1e-4;
    }
    if (!ok) ++stats->failed;
    return ok;
}

// Runs the finite-difference oracle on n_params randomly chosen parameter
// slots of the scene. Returns the stats; callers assert failed == 0.
inline GradCheckStats run_gradcheck(uint64_t seed, int n_params) {
    GradCheckScene s = make_gradcheck_scene(seed);
    std::vector<Splat2D> splats = project(s.gaussians, s.camera);
    RenderOutput fwd = render(splats, s.camera.width, s.camera.height, s.background, true);
    SceneGrads grads = backward_masked_l1(s.gaussians, s.camera, splats, fwd, s.gt, s.keep, s.background);

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<int> pick_g(0, static_cast<int>(s.gaussians.size()) - 1);
    std::uniform_int_distribution<int> pick_slot(0, 13);
    const double h = 1e-4;

    GradCheckStats stats;
    for (int trial = 0; trial < n_params; ++trial) {
        int gi = pick_g(rng);
        int slot = pick_slot(rng);
        Gaussian3D& g = s.gaussians[gi];
        double* ptr = nullptr;
        double analytic = 0.0;
        if (slot < 3) {
            ptr = &g.center[slot];
            analytic = grads.center[gi][slot];
        } else if (slot < 6) {
            ptr = &g.log_scale[slot - 3];
            analytic = grads.log_scale[gi][slot - 3];
        } else if (slot < 10) {
            ptr = &g.rotation[slot - 6];
            analytic = grads.rotation[gi][slot - 6];
        } else if (slot < 11) {
            ptr = &g.opacity_logit;
            analytic = grads.opacity_logit[gi];
        } else {
            ptr = &g.color[slot - 11];
            analytic = grads.color[gi][slot - 11];
        }
        check_one_gradient(s, ptr, analytic, h, &stats);
    }
    return stats;
}

}  // namespace splatwild::testing
