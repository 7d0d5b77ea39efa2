#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "splatwild/gaussian.hpp"
#include "splatwild/kdtree.hpp"
#include "splatwild/math.hpp"
#include "splatwild/pointcloud.hpp"

namespace splatwild {

// 53-bit draw in [0, 1). Spelled out instead of uniform_real_distribution,
// whose output is unspecified and differs between standard libraries.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Seed gaussians scattered uniformly over a box. Scales start isotropic at
// roughly the expected nearest-neighbor spacing so the box is covered without
// one blob swallowing it.
inline std::vector<Gaussian3D> random_init(int count, const Vec3& box_min, const Vec3& box_max,
                                           uint64_t seed, double init_opacity = 0.1) {
    if (count <= 0) throw std::invalid_argument("random_init: count must be positive");
    if (!((box_max - box_min).array() > 0.0).all())
        throw std::invalid_argument("random_init: box must have positive extent");
    if (!(init_opacity > 0.0 && init_opacity < 1.0))
        throw std::invalid_argument("random_init: init_opacity must lie in (0, 1)");

    std::mt19937_64 rng(seed);
    const Vec3 extent = box_max - box_min;
    const double spacing = 0.5 * extent.maxCoeff() / std::cbrt(static_cast<double>(count));
    const double logit = inverse_sigmoid(init_opacity);

    std::vector<Gaussian3D> gs(count);
    for (Gaussian3D& g : gs) {
        for (int a = 0; a < 3; ++a) g.center[a] = box_min[a] + extent[a] * uniform01(rng);
        for (int a = 0; a < 3; ++a) g.color[a] = uniform01(rng);
        g.log_scale = Vec3::Constant(std::log(spacing));
        g.opacity_logit = logit;
    }
    return gs;
}

// Seed gaussians from a point cloud: one per point, isotropic scale set from
// the mean distance to the nearest neighbors so local density carries over.
inline std::vector<Gaussian3D> init_from_cloud(const PointCloud& cloud, double init_opacity = 0.1,
                                               double scale_multiplier = 1.0, int k = 3) {
    cloud.validate();
    if (cloud.positions.empty()) throw std::invalid_argument("init_from_cloud: empty cloud");
    if (!(init_opacity > 0.0 && init_opacity < 1.0))
        throw std::invalid_argument("init_from_cloud: init_opacity must lie in (0, 1)");
    if (!(scale_multiplier > 0.0))
        throw std::invalid_argument("init_from_cloud: scale_multiplier must be positive");
    if (k < 1) throw std::invalid_argument("init_from_cloud: k must be at least 1");

    const size_t n = cloud.positions.size();
    const bool with_colors = cloud.colors.size() == n;
    const double logit = inverse_sigmoid(init_opacity);
    KdTree3 tree(cloud.positions);

    std::vector<Gaussian3D> gs(n);
    for (size_t i = 0; i < n; ++i) {
        Gaussian3D& g = gs[i];
        g.center = cloud.positions[i];
        g.color = with_colors ? cloud.colors[i] : Vec3::Constant(0.5);
        g.confidence = cloud.confidence[i];
        g.opacity_logit = logit;

        double mean_dist = 1.0;  // lone point: no neighbor spacing to measure
        std::vector<int> near = tree.knn(cloud.positions[i], k + 1);
        double sum = 0.0;
        int used = 0;
        for (int j : near) {
            if (j == static_cast<int>(i)) continue;
            sum += (cloud.positions[j] - cloud.positions[i]).norm();
            ++used;
        }
        if (used > 0) mean_dist = sum / used;
        g.log_scale = Vec3::Constant(std::log(std::max(mean_dist * scale_multiplier, 1e-9)));
    }
    return gs;
}

}  // namespace splatwild
