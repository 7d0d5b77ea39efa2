#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>

namespace splatwild {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double inverse_sigmoid(double y) {
    if (y <= 0.0 || y >= 1.0) throw std::invalid_argument("inverse_sigmoid: input must be in (0,1)");
    return std::log(y / (1.0 - y));
}

// Rotation matrix from a quaternion stored as (w, x, y, z). The input is
// normalized first, so callers may pass raw optimizer state.
inline Mat3 rotation_from_quat(const Vec4& q_raw) {
    double n = q_raw.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("rotation_from_quat: bad quaternion norm");
    Vec4 q = q_raw / n;
    double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

// Entry-wise derivatives dR/dq of the unit-quaternion rotation formula,
// evaluated at a unit quaternion (w, x, y, z). Combine with the normalization
// Jacobian (I - q q^T) / |q| to differentiate through raw parameters.
inline std::array<Mat3, 4> rotation_quat_derivatives(const Vec4& q_unit) {
    double w = q_unit[0], x = q_unit[1], y = q_unit[2], z = q_unit[3];
    std::array<Mat3, 4> d;
    d[0] <<  0, -2 * z,  2 * y,
             2 * z,  0, -2 * x,
            -2 * y,  2 * x,  0;
    d[1] <<  0,  2 * y,  2 * z,
             2 * y, -4 * x, -2 * w,
             2 * z,  2 * w, -4 * x;
    d[2] << -4 * y,  2 * x,  2 * w,
             2 * x,  0,  2 * z,
            -2 * w,  2 * z, -4 * y;
    d[3] << -4 * z, -2 * w,  2 * x,
             2 * w, -4 * z,  2 * y,
             2 * x,  2 * y,  0;
    return d;
}

// Eigenvalues of a symmetric 2x2 matrix, ascending.
inline Vec2 sym2x2_eigenvalues(const Mat2& m) {
    double a = m(0, 0), b = m(0, 1), c = m(1, 1);
    double mean = 0.5 * (a + c);
    double det = a * c - b * b;
    double disc = std::sqrt(std::max(0.0, mean * mean - det));
    return Vec2(mean - disc, mean + disc);
}

}  // namespace splatwild
