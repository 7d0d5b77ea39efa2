#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "splatwild/math.hpp"

namespace splatwild {

// One anisotropic Gaussian primitive. Scales live in log space and opacity as a
// logit so optimizer steps are unconstrained; decode via scales()/opacity().
struct Gaussian3D {
    Vec3 center = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1, 0, 0, 0);  // quaternion (w, x, y, z), kept unit-norm
    double opacity_logit = 0.0;
    Vec3 color = Vec3::Zero();         // per-channel in [0,1], no SH
    double confidence = 1.0;           // carried over from the source point
    double grad_accum = 0.0;           // running positional-gradient magnitude
    int64_t voxel_id = -1;             // linear guide-voxel index, -1 when unassigned
    bool unconstrained = false;        // set by the voxel guide

    Vec3 scales() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
};

// World-space covariance R * S * S^T * R^T from the stored rotation and
// log-scales. Always symmetric positive semi-definite by construction.
inline Mat3 build_covariance(const Gaussian3D& g) {
    if (!g.log_scale.allFinite() || !g.rotation.allFinite())
        throw std::invalid_argument("build_covariance: non-finite scale or rotation");
    Mat3 R = rotation_from_quat(g.rotation);
    Vec3 s = g.scales();
    Mat3 A = R * s.asDiagonal();  // A = R S, so Sigma = A A^T
    return A * A.transpose();
}

}  // namespace splatwild
