#pragma once

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "splatwild/kdtree.hpp"
#include "splatwild/math.hpp"
#include "splatwild/ply.hpp"
#include "splatwild/threads.hpp"

namespace splatwild {

// ---------------------------------------------------------------------------
// Cloud container and PLY round-trip
// ---------------------------------------------------------------------------

struct PointCloud {
    std::vector<Vec3> positions;
    std::vector<double> confidence;     // per point, defaults to 1
    std::vector<Vec3> normals;          // empty or one per point
    std::vector<Vec3> colors;           // empty or one per point, channels in [0,1]
    std::vector<int> source_frames;     // empty or one per point (merged clouds)

    size_t size() const { return positions.size(); }

    void validate() const {
        if (confidence.size() != positions.size())
            throw std::invalid_argument("point cloud: confidence count mismatch");
        if (!normals.empty() && normals.size() != positions.size())
            throw std::invalid_argument("point cloud: normal count mismatch");
        if (!colors.empty() && colors.size() != positions.size())
            throw std::invalid_argument("point cloud: color count mismatch");
        if (!source_frames.empty() && source_frames.size() != positions.size())
            throw std::invalid_argument("point cloud: source frame count mismatch");
    }
};

inline PointCloud read_point_cloud(const std::string& path) {
    PlyFile ply = read_ply_file(path);
    const PlyElement* vertex = ply.find("vertex");
    if (!vertex) throw std::runtime_error(path + ": no vertex element");
    const PlyProperty* px = vertex->find("x");
    const PlyProperty* py = vertex->find("y");
    const PlyProperty* pz = vertex->find("z");
    if (!px || !py || !pz) throw std::runtime_error(path + ": vertex element lacks x/y/z");

    PointCloud cloud;
    cloud.positions.resize(vertex->count);
    for (size_t i = 0; i < vertex->count; ++i)
        cloud.positions[i] = Vec3(px->values[i], py->values[i], pz->values[i]);

    const PlyProperty* conf = vertex->find("confidence");
    cloud.confidence.assign(vertex->count, 1.0);
    if (conf)
        for (size_t i = 0; i < vertex->count; ++i) cloud.confidence[i] = conf->values[i];

    const PlyProperty* nx = vertex->find("nx");
    const PlyProperty* ny = vertex->find("ny");
    const PlyProperty* nz = vertex->find("nz");
    if (nx && ny && nz) {
        cloud.normals.resize(vertex->count);
        for (size_t i = 0; i < vertex->count; ++i)
            cloud.normals[i] = Vec3(nx->values[i], ny->values[i], nz->values[i]);
    }

    const PlyProperty* r = vertex->find("red");
    const PlyProperty* g = vertex->find("green");
    const PlyProperty* b = vertex->find("blue");
    if (r && g && b) {
        bool eight_bit = r->type == PlyType::UInt8;
        cloud.colors.resize(vertex->count);
        for (size_t i = 0; i < vertex->count; ++i) {
            Vec3 c(r->values[i], g->values[i], b->values[i]);
            cloud.colors[i] = eight_bit ? Vec3(c / 255.0) : c;
        }
    }

    const PlyProperty* sf = vertex->find("source_frame");
    if (sf) {
        cloud.source_frames.resize(vertex->count);
        for (size_t i = 0; i < vertex->count; ++i) cloud.source_frames[i] = static_cast<int>(sf->values[i]);
    }
    cloud.validate();
    return cloud;
}

inline void write_point_cloud(const std::string& path, const PointCloud& cloud, bool binary = true) {
    cloud.validate();
    PlyElement vertex;
    vertex.name = "vertex";
    vertex.count = cloud.size();
    auto column = [&](const char* name, PlyType type) {
        PlyProperty p;
        p.name = name;
        p.type = type;
        p.values.resize(cloud.size());
        vertex.properties.push_back(std::move(p));
        return &vertex.properties.back().values;
    };
    auto* xs = column("x", PlyType::Float64);
    auto* ys = column("y", PlyType::Float64);
    auto* zs = column("z", PlyType::Float64);
    for (size_t i = 0; i < cloud.size(); ++i) {
        (*xs)[i] = cloud.positions[i].x();
        (*ys)[i] = cloud.positions[i].y();
        (*zs)[i] = cloud.positions[i].z();
    }
    auto* cs = column("confidence", PlyType::Float64);
    for (size_t i = 0; i < cloud.size(); ++i) (*cs)[i] = cloud.confidence[i];
    if (!cloud.normals.empty()) {
        auto* nxs = column("nx", PlyType::Float64);
        auto* nys = column("ny", PlyType::Float64);
        auto* nzs = column("nz", PlyType::Float64);
        for (size_t i = 0; i < cloud.size(); ++i) {
            (*nxs)[i] = cloud.normals[i].x();
            (*nys)[i] = cloud.normals[i].y();
            (*nzs)[i] = cloud.normals[i].z();
        }
    }
    if (!cloud.colors.empty()) {
        auto* rs = column("red", PlyType::UInt8);
        auto* gs = column("green", PlyType::UInt8);
        auto* bs = column("blue", PlyType::UInt8);
        for (size_t i = 0; i < cloud.size(); ++i) {
            (*rs)[i] = std::lround(std::clamp(cloud.colors[i].x(), 0.0, 1.0) * 255.0);
            (*gs)[i] = std::lround(std::clamp(cloud.colors[i].y(), 0.0, 1.0) * 255.0);
            (*bs)[i] = std::lround(std::clamp(cloud.colors[i].z(), 0.0, 1.0) * 255.0);
        }
    }
    if (!cloud.source_frames.empty()) {
        auto* sfs = column("source_frame", PlyType::Int32);
        for (size_t i = 0; i < cloud.size(); ++i) (*sfs)[i] = cloud.source_frames[i];
    }
    PlyFile ply;
    ply.binary = binary;
    ply.elements.push_back(std::move(vertex));
    write_ply_file(path, ply);
}

// ---------------------------------------------------------------------------
// Normal estimation
// ---------------------------------------------------------------------------

// PCA normal over the K-nearest neighborhood, oriented deterministically:
// positive z, falling back to positive y then positive x for in-plane normals.
inline std::vector<Vec3> estimate_normals(const std::vector<Vec3>& positions, int k_neighbors) {
    if (positions.size() < 3) throw std::invalid_argument("estimate_normals: need at least 3 points");
    if (k_neighbors < 2) throw std::invalid_argument("estimate_normals: need at least 2 neighbors");
    KdTree3 tree(positions);
    std::vector<Vec3> normals(positions.size());
    parallel_chunks(static_cast<int>(positions.size()), [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            std::vector<int> nn = tree.knn(positions[i], k_neighbors + 1);
            Vec3 mean = Vec3::Zero();
            for (int j : nn) mean += positions[j];
            mean /= static_cast<double>(nn.size());
            Mat3 cov = Mat3::Zero();
            for (int j : nn) {
                Vec3 d = positions[j] - mean;
                cov += d * d.transpose();
            }
            Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
            Vec3 n = es.eigenvectors().col(0);  // smallest eigenvalue
            if (std::abs(n.z()) > 1e-12) {
                if (n.z() < 0) n = -n;
            } else if (std::abs(n.y()) > 1e-12) {
                if (n.y() < 0) n = -n;
            } else if (n.x() < 0) {
                n = -n;
            }
            normals[i] = n;
        }
    });
    return normals;
}

// ---------------------------------------------------------------------------
// Descriptors: 33-bin histograms of Darboux-frame angles
// ---------------------------------------------------------------------------

constexpr int kHistBins = 11;
using Descriptor = std::array<double, 3 * kHistBins>;  // blocks: alpha, phi, theta
constexpr double kDescriptorDistanceFloor = 1e-9;

struct PairFeatures {
    double alpha = 0, phi = 0, theta = 0, dist = 0;
};

// Canonical pair features. The source/target roles swap so that the source
// normal makes the smaller angle with the connecting line; pairs with a
// degenerate frame (coincident points, or the line parallel to the source
// normal) report false and are skipped by the histograms.
inline bool pair_features(const Vec3& p1, const Vec3& n1, const Vec3& p2, const Vec3& n2, PairFeatures* out) {
    Vec3 d = p2 - p1;
    double dist = d.norm();
    if (dist < 1e-12) return false;
    d /= dist;
    double angle1 = n1.dot(d);
    double angle2 = n2.dot(d);
    Vec3 u = n1, nt = n2;
    if (std::abs(angle1) < std::abs(angle2)) {
        u = n2;
        nt = n1;
        d = -d;
        out->phi = angle2;
    } else {
        out->phi = angle1;
    }
    Vec3 v = d.cross(u);
    double vn = v.norm();
    if (vn < 1e-12) return false;
    v /= vn;
    Vec3 w = u.cross(v);
    out->alpha = v.dot(nt);
    out->theta = std::atan2(w.dot(nt), u.dot(nt));
    out->dist = dist;
    return true;
}

inline int feature_bin(double value, double lo, double hi) {
    int bin = static_cast<int>(std::floor((value - lo) / (hi - lo) * kHistBins));
    return std::clamp(bin, 0, kHistBins - 1);
}

// Simplified histogram for one point over its neighborhood: one vote per valid
// pair, each 11-bin block normalized to unit sum.
inline Descriptor simplified_histogram(const std::vector<Vec3>& positions, const std::vector<Vec3>& normals,
                                       int idx, const std::vector<int>& neighbors) {
    Descriptor h{};
    int valid = 0;
    for (int j : neighbors) {
        if (j == idx) continue;
        PairFeatures f;
        if (!pair_features(positions[idx], normals[idx], positions[j], normals[j], &f)) continue;
        ++valid;
        h[feature_bin(f.alpha, -1.0, 1.0)] += 1.0;
        h[kHistBins + feature_bin(f.phi, -1.0, 1.0)] += 1.0;
        h[2 * kHistBins + feature_bin(f.theta, -M_PI, M_PI)] += 1.0;
    }
    if (valid > 0)
        for (double& v : h) v /= static_cast<double>(valid);
    return h;
}

// Neighborhood lists for every point: the K nearest, self excluded.
inline std::vector<std::vector<int>> neighbor_lists(const std::vector<Vec3>& positions, int k_neighbors) {
    KdTree3 tree(positions);
    std::vector<std::vector<int>> lists(positions.size());
    parallel_chunks(static_cast<int>(positions.size()), [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            std::vector<int> nn = tree.knn(positions[i], k_neighbors + 1);
            std::vector<int>& mine = lists[i];
            mine.reserve(k_neighbors);
            for (int j : nn) {
                if (j == i) continue;
                if (static_cast<int>(mine.size()) == k_neighbors) break;
                mine.push_back(j);
            }
        }
    });
    return lists;
}

// Full descriptor: own histogram plus the distance-weighted mean of the
// neighbors' histograms.
inline std::vector<Descriptor> fpfh_descriptors(const std::vector<Vec3>& positions,
                                                const std::vector<Vec3>& normals, int k_neighbors) {
    if (positions.size() != normals.size())
        throw std::invalid_argument("fpfh_descriptors: positions/normals size mismatch");
    if (positions.size() < 2) throw std::invalid_argument("fpfh_descriptors: need at least 2 points");

    std::vector<std::vector<int>> nbrs = neighbor_lists(positions, k_neighbors);
    std::vector<Descriptor> simple(positions.size());
    parallel_chunks(static_cast<int>(positions.size()), [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) simple[i] = simplified_histogram(positions, normals, i, nbrs[i]);
    });

    std::vector<Descriptor> out(positions.size());
    parallel_chunks(static_cast<int>(positions.size()), [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            Descriptor acc = simple[i];
            const std::vector<int>& mine = nbrs[i];
            if (!mine.empty()) {
                double inv_k = 1.0 / static_cast<double>(mine.size());
                for (int j : mine) {
                    double dist = std::max((positions[j] - positions[i]).norm(), kDescriptorDistanceFloor);
                    double w = inv_k / dist;
                    for (int b = 0; b < 3 * kHistBins; ++b) acc[b] += w * simple[j][b];
                }
            }
            out[i] = acc;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Point scoring
// ---------------------------------------------------------------------------

enum class DescriptorNormalization { UnitL1, MinMaxPerDim };

// Confidence times the L2 norm of the descriptor rescaled to unit L1 mass.
// A flat descriptor minimizes the norm (1/sqrt(33)), so geometrically busy
// neighborhoods outrank featureless ones at equal confidence.
inline double descriptor_score(const Descriptor& desc, double conf) {
    double l1 = 0.0;
    for (double v : desc) l1 += std::abs(v);
    if (l1 <= 0.0) return 0.0;
    double l2 = 0.0;
    for (double v : desc) l2 += (v / l1) * (v / l1);
    return conf * std::sqrt(l2);
}

inline std::vector<double> score_points(const std::vector<Descriptor>& descs, const std::vector<double>& conf,
                                        DescriptorNormalization mode = DescriptorNormalization::UnitL1) {
    if (descs.size() != conf.size()) throw std::invalid_argument("score_points: size mismatch");
    std::vector<double> scores(descs.size(), 0.0);
    if (mode == DescriptorNormalization::UnitL1) {
        for (size_t i = 0; i < descs.size(); ++i) scores[i] = descriptor_score(descs[i], conf[i]);
        return scores;
    }
    // Alternative normalization: min-max per dimension across the cloud.
    Descriptor lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const Descriptor& d : descs)
        for (int b = 0; b < 3 * kHistBins; ++b) {
            lo[b] = std::min(lo[b], d[b]);
            hi[b] = std::max(hi[b], d[b]);
        }
    for (size_t i = 0; i < descs.size(); ++i) {
        double l2 = 0.0;
        for (int b = 0; b < 3 * kHistBins; ++b) {
            double span = hi[b] - lo[b];
            double v = span > 0.0 ? (descs[i][b] - lo[b]) / span : 0.0;
            l2 += v * v;
        }
        scores[i] = conf[i] * std::sqrt(l2);
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Adaptive voxel grid and top-k sampling
// ---------------------------------------------------------------------------

struct SampleGrid {
    Vec3 aabb_min = Vec3::Zero();
    Vec3 aabb_max = Vec3::Zero();
    double voxel_length = 1.0;
    int nx = 1, ny = 1, nz = 1;

    int64_t voxel_count() const { return static_cast<int64_t>(nx) * ny * nz; }

    Eigen::Vector3i voxel_of(const Vec3& p) const {
        auto clampi = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };
        int ix = clampi(static_cast<int>(std::floor((p.x() - aabb_min.x()) / voxel_length)), nx);
        int iy = clampi(static_cast<int>(std::floor((p.y() - aabb_min.y()) / voxel_length)), ny);
        int iz = clampi(static_cast<int>(std::floor((p.z() - aabb_min.z()) / voxel_length)), nz);
        return {ix, iy, iz};
    }

    int64_t linear_index(const Eigen::Vector3i& v) const {
        return (static_cast<int64_t>(v.z()) * ny + v.y()) * nx + v.x();
    }

    Vec3 voxel_center(const Eigen::Vector3i& v) const {
        return aabb_min + voxel_length * (v.cast<double>() + Vec3(0.5, 0.5, 0.5));
    }
};

// Cubic voxels sized so the shortest AABB edge splits into n_short cells.
// Degenerate axes collapse to one cell; a single repeated point gets one unit
// voxel.
inline SampleGrid build_grid(const std::vector<Vec3>& positions, int n_short) {
    if (positions.empty()) throw std::invalid_argument("build_grid: empty cloud");
    if (n_short <= 0) throw std::invalid_argument("build_grid: voxel count must be positive");
    SampleGrid grid;
    grid.aabb_min = grid.aabb_max = positions[0];
    for (const Vec3& p : positions) {
        grid.aabb_min = grid.aabb_min.cwiseMin(p);
        grid.aabb_max = grid.aabb_max.cwiseMax(p);
    }
    Vec3 extent = grid.aabb_max - grid.aabb_min;
    double shortest = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a)
        if (extent[a] > 0.0) shortest = std::min(shortest, extent[a]);
    if (!std::isfinite(shortest)) {
        grid.voxel_length = 1.0;  // all points coincide
        return grid;
    }
    grid.voxel_length = shortest / n_short;
    int counts[3];
    for (int a = 0; a < 3; ++a) {
        if (extent[a] <= 0.0)
            counts[a] = 1;
        else if (extent[a] == shortest)
            counts[a] = n_short;
        else
            counts[a] = std::max(1, static_cast<int>(std::ceil(extent[a] / grid.voxel_length - 1e-9)));
    }
    grid.nx = counts[0];
    grid.ny = counts[1];
    grid.nz = counts[2];
    return grid;
}

// Keeps the k best-scoring points per occupied voxel (ties to the lower
// original index); returns kept indices in original order.
inline std::vector<int> sample_top_k(const std::vector<Vec3>& positions, const std::vector<double>& scores,
                                     const SampleGrid& grid, int k) {
    if (positions.size() != scores.size()) throw std::invalid_argument("sample_top_k: size mismatch");
    if (k <= 0) throw std::invalid_argument("sample_top_k: k must be positive");
    std::map<int64_t, std::vector<int>> buckets;
    for (size_t i = 0; i < positions.size(); ++i)
        buckets[grid.linear_index(grid.voxel_of(positions[i]))].push_back(static_cast<int>(i));

    std::vector<int> kept;
    kept.reserve(buckets.size() * k);
    for (auto& [voxel, members] : buckets) {
        if (static_cast<int>(members.size()) > k) {
            std::sort(members.begin(), members.end(), [&](int a, int b) {
                if (scores[a] != scores[b]) return scores[a] > scores[b];
                return a < b;
            });
            members.resize(k);
        }
        kept.insert(kept.end(), members.begin(), members.end());
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace splatwild
