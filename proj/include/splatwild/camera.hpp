#pragma once

#include <stdexcept>

#include "splatwild/image.hpp"
#include "splatwild/math.hpp"

namespace splatwild {

// Orthographic camera: rotate/translate into camera space, scale x/y into
// pixels, read depth off z. Pixel (row, col) samples at (col + .5, row + .5);
// the optical axis lands at (width/2, height/2).
struct OrthoCamera {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double pixels_per_unit = 1.0;
    int width = 0;
    int height = 0;

    Vec3 to_camera(const Vec3& p_world) const { return rotation * p_world + translation; }

    Vec2 to_image(const Vec3& p_world) const {
        Vec3 pc = to_camera(p_world);
        return Vec2(pixels_per_unit * pc.x() + width / 2.0, pixels_per_unit * pc.y() + height / 2.0);
    }

    void validate() const {
        if (width <= 0 || height <= 0) throw std::invalid_argument("camera: non-positive image size");
        if (!(pixels_per_unit > 0.0)) throw std::invalid_argument("camera: pixels_per_unit must be positive");
        Mat3 should_be_identity = rotation * rotation.transpose();
        if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
            throw std::invalid_argument("camera: rotation is not orthonormal");
    }
};

// One observation: camera pose plus the captured image and, when a segmenter
// ran, per-pixel object IDs. The distractor mask is fixture ground truth and
// only present for synthetic scenes.
struct Frame {
    int index = 0;
    OrthoCamera camera;
    Image3 image;
    IdMap seg;              // empty when no segmentation is available
    Mask gt_distractor;     // empty outside synthetic fixtures
    Image3 clean;           // distractor-free render, synthetic fixtures only
};

}  // namespace splatwild
