#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "splatwild/camera.hpp"
#include "splatwild/gaussian.hpp"
#include "splatwild/image.hpp"
#include "splatwild/math.hpp"
#include "splatwild/threads.hpp"

namespace splatwild {

// Compositing rules shared by the forward and backward passes.
constexpr double kAlphaClamp = 0.99;        // per-splat alpha ceiling
constexpr double kAlphaSkip = 1.0 / 255.0;  // contributions below this are dropped
constexpr double kTransmittanceStop = 1e-4; // stop compositing once this opaque
constexpr double kCovEigenFloor = 1e-8;     // screen-space covariance regularizer

// The Gaussian footprint falls under kAlphaSkip once the Mahalanobis term
// exceeds 2*ln(255) ~ 11.09, so a box test at 12 never changes the image.
constexpr double kFootprintCutoff = 12.0;

struct Splat2D {
    Vec2 center2 = Vec2::Zero();
    Mat2 cov2 = Mat2::Identity();
    double depth = 0.0;
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    int parent = -1;  // index into the source Gaussian list

    // Cached per-splat values filled in by project().
    Mat2 cov2_inv = Mat2::Identity();
    double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;  // conservative footprint box
};

// Orthographic projection of one Gaussian. Covariance maps through the camera
// rotation, keeps its xy block, and scales by pixels_per_unit^2; a diagonal
// shift enforces the eigenvalue floor without rotating the ellipse.
inline Splat2D project_one(const Gaussian3D& g, const OrthoCamera& cam) {
    Vec3 p_cam = cam.to_camera(g.center);
    double s = cam.pixels_per_unit;

    Splat2D sp;
    sp.center2 = Vec2(s * p_cam.x() + cam.width / 2.0, s * p_cam.y() + cam.height / 2.0);
    sp.depth = p_cam.z();

    Mat3 world_cov = build_covariance(g);
    Mat3 cam_cov = cam.rotation * world_cov * cam.rotation.transpose();
    sp.cov2 = s * s * cam_cov.topLeftCorner<2, 2>();

    Vec2 eig = sym2x2_eigenvalues(sp.cov2);
    if (eig[0] < kCovEigenFloor) {
        double shift = kCovEigenFloor - eig[0];
        sp.cov2(0, 0) += shift;
        sp.cov2(1, 1) += shift;
    }

    sp.opacity = g.opacity();
    sp.color = g.color;

    double det = sp.cov2.determinant();
    sp.cov2_inv << sp.cov2(1, 1) / det, -sp.cov2(0, 1) / det,
                   -sp.cov2(1, 0) / det, sp.cov2(0, 0) / det;
    double half_x = std::sqrt(kFootprintCutoff * sp.cov2(0, 0));
    double half_y = std::sqrt(kFootprintCutoff * sp.cov2(1, 1));
    sp.x_lo = sp.center2.x() - half_x;
    sp.x_hi = sp.center2.x() + half_x;
    sp.y_lo = sp.center2.y() - half_y;
    sp.y_hi = sp.center2.y() + half_y;
    return sp;
}

// Projects the whole list and sorts front to back (ascending depth). Ties keep
// source order so renders are reproducible.
inline std::vector<Splat2D> project(const std::vector<Gaussian3D>& gaussians, const OrthoCamera& cam) {
    cam.validate();
    std::vector<Splat2D> splats;
    splats.reserve(gaussians.size());
    for (size_t i = 0; i < gaussians.size(); ++i) {
        Splat2D sp = project_one(gaussians[i], cam);
        if (!sp.center2.allFinite() || !std::isfinite(sp.depth))
            throw std::runtime_error("project: non-finite projection for Gaussian " + std::to_string(i));
        sp.parent = static_cast<int>(i);
        splats.push_back(sp);
    }
    std::stable_sort(splats.begin(), splats.end(),
                     [](const Splat2D& a, const Splat2D& b) { return a.depth < b.depth; });
    return splats;
}

// One splat's effect on one pixel, recorded for the backward pass.
struct RenderContrib {
    int32_t splat;         // index into the sorted splat list
    double alpha;          // clamped alpha actually composited
    double transmittance;  // T just before this splat
};

struct RenderOutput {
    Image3 image;
    Image1 final_transmittance;
    std::vector<std::vector<RenderContrib>> contribs;  // per pixel, front to back; empty unless recorded
};

inline RenderOutput render(const std::vector<Splat2D>& splats, int width, int height, const Vec3& background,
                           bool record_contribs = false) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("render: non-positive image size");
    if (!background.allFinite()) throw std::invalid_argument("render: non-finite background");
    for (size_t i = 1; i < splats.size(); ++i)
        if (splats[i - 1].depth > splats[i].depth)
            throw std::invalid_argument("render: splats not sorted by depth (inversion at " + std::to_string(i) + ")");

    RenderOutput out;
    out.image = Image3(height, width);
    out.final_transmittance = Image1(height, width, 1.0);
    if (record_contribs) out.contribs.resize(static_cast<size_t>(height) * width);

    parallel_chunks(height, [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y) {
            double py = y + 0.5;
            for (int x = 0; x < width; ++x) {
                double px = x + 0.5;
                double T = 1.0;
                Vec3 c = Vec3::Zero();
                std::vector<RenderContrib>* rec =
                    record_contribs ? &out.contribs[static_cast<size_t>(y) * width + x] : nullptr;
                for (size_t i = 0; i < splats.size(); ++i) {
                    if (T < kTransmittanceStop) break;
                    const Splat2D& sp = splats[i];
                    if (px < sp.x_lo || px > sp.x_hi || py < sp.y_lo || py > sp.y_hi) continue;
                    Vec2 d(px - sp.center2.x(), py - sp.center2.y());
                    double maha = d.dot(sp.cov2_inv * d);
                    if (maha > kFootprintCutoff) continue;
                    double alpha = std::min(kAlphaClamp, sp.opacity * std::exp(-0.5 * maha));
                    if (alpha < kAlphaSkip) continue;
                    c += sp.color * (alpha * T);
                    if (rec) rec->push_back({static_cast<int32_t>(i), alpha, T});
                    T *= 1.0 - alpha;
                }
                c += T * background;
                for (int ch = 0; ch < 3; ++ch) out.image.at(y, x, ch) = c[ch];
                out.final_transmittance.at(y, x) = T;
            }
        }
    });
    return out;
}

inline RenderOutput render_scene(const std::vector<Gaussian3D>& gaussians, const OrthoCamera& cam,
                                 const Vec3& background, bool record_contribs = false) {
    return render(project(gaussians, cam), cam.width, cam.height, background, record_contribs);
}

}  // namespace splatwild
