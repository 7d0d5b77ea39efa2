#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "splatwild/loss.hpp"
#include "splatwild/renderer.hpp"

namespace splatwild {

// Gradients of the masked L1 loss with respect to every Gaussian parameter.
struct SceneGrads {
    std::vector<Vec3> center;
    std::vector<Vec3> log_scale;
    std::vector<Vec4> rotation;
    std::vector<double> opacity_logit;
    std::vector<Vec3> color;

    explicit SceneGrads(size_t n = 0)
        : center(n, Vec3::Zero()),
          log_scale(n, Vec3::Zero()),
          rotation(n, Vec4::Zero()),
          opacity_logit(n, 0.0),
          color(n, Vec3::Zero()) {}

    size_t size() const { return center.size(); }

    void scale_gaussian(size_t i, double m) {
        center[i] *= m;
        log_scale[i] *= m;
        rotation[i] *= m;
        opacity_logit[i] *= m;
        color[i] *= m;
    }
};

// Screen-space gradients per splat, exposed for tests; backward_masked_l1
// chains them through the projection.
struct SplatGrads {
    std::vector<Vec2> center2;
    std::vector<Mat2> cov2;
    std::vector<double> opacity;
    std::vector<Vec3> color;

    explicit SplatGrads(size_t n = 0)
        : center2(n, Vec2::Zero()), cov2(n, Mat2::Zero()), opacity(n, 0.0), color(n, Vec3::Zero()) {}
};

// Walks each pixel's recorded contributions back to front, reconstructing the
// suffix color term so dC/dalpha_i comes out in closed form.
inline SplatGrads backward_to_splats(const std::vector<Splat2D>& splats, const RenderOutput& fwd,
                                     const Image3& gt, const Mask& keep, const Vec3& background) {
    if (fwd.contribs.size() != fwd.image.pixels())
        throw std::invalid_argument("backward_to_splats: forward pass was not recorded");

    const Image3& render = fwd.image;
    require_same_shape(render, gt, "backward_to_splats");

    size_t kept = keep.count();
    SplatGrads g(splats.size());
    if (kept == 0) return g;
    double inv_norm = 1.0 / (3.0 * static_cast<double>(kept));

    int width = render.width;
    for (int y = 0; y < render.height; ++y) {
        double py = y + 0.5;
        for (int x = 0; x < width; ++x) {
            if (!keep.at(y, x)) continue;
            size_t p = static_cast<size_t>(y) * width + x;
            Vec3 dL_dC;
            for (int c = 0; c < 3; ++c) {
                double diff = render.data[p * 3 + c] - gt.data[p * 3 + c];
                dL_dC[c] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) * inv_norm;
            }

            const auto& entries = fwd.contribs[p];
            // Suffix S starts as everything behind the last splat: background
            // through the final transmittance.
            Vec3 suffix = fwd.final_transmittance.data[p] * background;
            Vec2 pix(x + 0.5, py);
            for (size_t k = entries.size(); k-- > 0;) {
                const RenderContrib& e = entries[k];
                const Splat2D& sp = splats[e.splat];
                double alpha = e.alpha;
                double T = e.transmittance;

                g.color[e.splat] += dL_dC * (alpha * T);

                double dL_dalpha = dL_dC.dot(sp.color * T - suffix / (1.0 - alpha));
                suffix += sp.color * (alpha * T);

                if (alpha >= kAlphaClamp) continue;  // ceiling active: alpha is constant here
                double gauss = alpha / sp.opacity;
                g.opacity[e.splat] += dL_dalpha * gauss;

                Vec2 d = pix - sp.center2;
                Vec2 lam_d = sp.cov2_inv * d;
                double dL_dgauss = dL_dalpha * sp.opacity;
                g.center2[e.splat] += dL_dgauss * gauss * lam_d;
                g.cov2[e.splat] += (0.5 * dL_dgauss * gauss) * (lam_d * lam_d.transpose());
            }
        }
    }
    return g;
}

// Chains screen-space gradients through the orthographic projection and the
// covariance construction down to the raw Gaussian parameters. Depth only
// orders the sort and carries no gradient; the covariance eigenvalue floor is
// treated as inactive (it only binds for degenerate footprints).
inline SceneGrads backward_masked_l1(const std::vector<Gaussian3D>& gaussians, const OrthoCamera& cam,
                                     const std::vector<Splat2D>& splats, const RenderOutput& fwd,
                                     const Image3& gt, const Mask& keep, const Vec3& background) {
    SplatGrads sg = backward_to_splats(splats, fwd, gt, keep, background);
    SceneGrads out(gaussians.size());
    double s = cam.pixels_per_unit;

    for (size_t i = 0; i < splats.size(); ++i) {
        int gi = splats[i].parent;
        const Gaussian3D& g = gaussians[gi];

        out.color[gi] += sg.color[i];

        double op = g.opacity();
        out.opacity_logit[gi] += sg.opacity[i] * op * (1.0 - op);

        const Vec2& gc2 = sg.center2[i];
        out.center[gi] += cam.rotation.transpose() * Vec3(s * gc2.x(), s * gc2.y(), 0.0);

        Mat3 cam_cov_bar = Mat3::Zero();
        cam_cov_bar.topLeftCorner<2, 2>() = s * s * sg.cov2[i];
        Mat3 sigma_bar = cam.rotation.transpose() * cam_cov_bar * cam.rotation;

        Vec4 q = g.rotation / g.rotation.norm();
        Mat3 R = rotation_from_quat(q);
        Vec3 sc = g.scales();
        Mat3 A = R * sc.asDiagonal();
        Mat3 A_bar = 2.0 * sigma_bar * A;  // Sigma = A A^T with symmetric cotangent

        for (int k = 0; k < 3; ++k)
            out.log_scale[gi][k] += A_bar.col(k).dot(R.col(k)) * sc[k];

        Mat3 R_bar = A_bar * sc.asDiagonal();
        std::array<Mat3, 4> dR = rotation_quat_derivatives(q);
        Vec4 q_bar_unit;
        for (int m = 0; m < 4; ++m) q_bar_unit[m] = (R_bar.array() * dR[m].array()).sum();
        // Through the normalization q_hat = q / |q|.
        double qn = g.rotation.norm();
        out.rotation[gi] += (q_bar_unit - q * q.dot(q_bar_unit)) / qn;
    }
    return out;
}

}  // namespace splatwild
