#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "splatwild/backward.hpp"
#include "splatwild/gaussian.hpp"
#include "splatwild/pointcloud.hpp"

namespace splatwild {

// ---------------------------------------------------------------------------
// Voxel-guided optimization: keep each Gaussian near its home voxel, damp the
// gradients of runaways, densify toward empty voxels under sustained pull, and
// drop voxels that hold too few or too faint members.
// ---------------------------------------------------------------------------

struct GuideConfig {
    double tau = 3.5;                    // constraint radius in voxel lengths
    double beta = 1.0;                   // decay rate per voxel length beyond tau
    double densify_grad_threshold = 0.003;
    int min_voxel_members = 2;
    double min_voxel_opacity = 0.075;
    int densify_interval = 100;
    double clone_scale_fraction = 0.5;   // clone below this * length, split above
    double split_offset_sigmas = 0.8;
    double split_scale_divisor = 1.6;
    bool half_length_datum = false;      // measure center distance from a half-length offset

    void validate() const {
        if (tau <= 0 || beta < 0) throw std::invalid_argument("guide config: tau/beta out of range");
        if (densify_grad_threshold < 0) throw std::invalid_argument("guide config: negative grad threshold");
        if (min_voxel_members < 0 || min_voxel_opacity < 0)
            throw std::invalid_argument("guide config: negative prune threshold");
        if (densify_interval <= 0) throw std::invalid_argument("guide config: densify interval must be positive");
        if (split_scale_divisor <= 1.0) throw std::invalid_argument("guide config: split divisor must exceed 1");
    }
};

inline double guide_center_distance(const Vec3& center, const Vec3& voxel_center, double length,
                                    const GuideConfig& cfg) {
    double d = (center - voxel_center).norm();
    if (cfg.half_length_datum) d = std::max(0.0, d - 0.5 * length);
    return d;
}

// A Gaussian is unconstrained when its center strays beyond tau voxel lengths
// from its voxel center or any axis scale exceeds the same bound.
inline bool check_constraint(const Gaussian3D& g, const Vec3& voxel_center, double length,
                             const GuideConfig& cfg) {
    double limit = cfg.tau * length;
    if (guide_center_distance(g.center, voxel_center, length, cfg) > limit) return true;
    return g.scales().maxCoeff() > limit;
}

// Damping factor for a runaway's gradients. Continuous at the boundary
// (distance tau*length gives 1) and clamped so scale-flagged Gaussians sitting
// near their voxel center are never amplified.
inline double decay_multiplier(double center_distance, double length, const GuideConfig& cfg) {
    double over = std::max(0.0, center_distance - cfg.tau * length);
    return std::exp(-cfg.beta * over / length);
}

// Structural edits from a cadence step, to be mirrored onto any per-Gaussian
// state the caller owns (optimizer moments). Apply by first appending
// `appended` fresh rows, then erasing rows at `removed` (which index the
// pre-append array and arrive sorted ascending).
struct GuideEdits {
    std::vector<int> removed;
    int appended = 0;

    bool empty() const { return removed.empty() && appended == 0; }
};

template <typename T>
void apply_guide_edits(std::vector<T>& rows, const GuideEdits& edits, const T& fresh) {
    rows.resize(rows.size() + edits.appended, fresh);
    for (auto it = edits.removed.rbegin(); it != edits.removed.rend(); ++it)
        rows.erase(rows.begin() + *it);
}

class VoxelGuide {
public:
    struct VoxelRecord {
        Eigen::Vector3i index{0, 0, 0};
        std::vector<int> members;  // scene indices, kept sorted ascending

        bool alive() const { return !members.empty(); }
    };

    VoxelGuide(const SampleGrid& geometry, const GuideConfig& config) : geom_(geometry), cfg_(config) {
        cfg_.validate();
    }

    const SampleGrid& geometry() const { return geom_; }
    const GuideConfig& config() const { return cfg_; }
    const std::map<int64_t, VoxelRecord>& voxels() const { return voxels_; }
    int steps_since_cadence() const { return steps_; }

    Vec3 voxel_center(int64_t id) const {
        auto it = voxels_.find(id);
        if (it == voxels_.end()) throw std::invalid_argument("voxel_center: unknown voxel");
        return geom_.voxel_center(it->second.index);
    }

    // Assigns every Gaussian to the voxel containing its center (clamped onto
    // the grid for strays outside the AABB). Returns how many were clamped.
    int assign_initial(std::vector<Gaussian3D>& gs) {
        voxels_.clear();
        dir_accum_.assign(gs.size(), Vec3::Zero());
        steps_ = 0;
        int clamped = 0;
        for (size_t i = 0; i < gs.size(); ++i) {
            Eigen::Vector3i v = geom_.voxel_of(gs[i].center);
            if ((geom_.voxel_center(v) - gs[i].center).cwiseAbs().maxCoeff() > 0.5 * geom_.voxel_length + 1e-12)
                ++clamped;
            int64_t id = geom_.linear_index(v);
            gs[i].voxel_id = id;
            gs[i].grad_accum = 0.0;
            gs[i].unconstrained = false;
            touch(id, v).members.push_back(static_cast<int>(i));
        }
        return clamped;
    }

    // Per-iteration hook, called after the backward pass and before the
    // optimizer step: refresh constraint flags, damp runaway gradients, and
    // accumulate positional pull for the next cadence.
    void apply(std::vector<Gaussian3D>& gs, SceneGrads& grads) {
        if (gs.size() != grads.size() || gs.size() != dir_accum_.size())
            throw std::invalid_argument("guide apply: size mismatch");
        for (size_t i = 0; i < gs.size(); ++i) {
            Gaussian3D& g = gs[i];
            if (g.voxel_id < 0) throw std::logic_error("guide apply: unassigned Gaussian");
            Vec3 vc = geom_.voxel_center(voxels_.at(g.voxel_id).index);
            g.unconstrained = check_constraint(g, vc, geom_.voxel_length, cfg_);
            if (g.unconstrained) {
                double d = guide_center_distance(g.center, vc, geom_.voxel_length, cfg_);
                grads.scale_gaussian(i, decay_multiplier(d, geom_.voxel_length, cfg_));
            }
            g.grad_accum += grads.center[i].norm();
            dir_accum_[i] -= grads.center[i];  // accumulated descent direction
        }
        ++steps_;
    }

    // Cadence step: prune first so a voxel created by this call survives a
    // full interval before the member-count test can see it, then densify.
    // Compacts the scene in place and returns the edits for mirroring.
    GuideEdits run_cadence(std::vector<Gaussian3D>& gs) {
        GuideEdits edits;
        std::set<int> removed = prune_pass(gs);
        densify_pass(gs, removed, &edits.appended);
        edits.removed.assign(removed.begin(), removed.end());
        compact(gs, edits);
        for (Gaussian3D& g : gs) g.grad_accum = 0.0;
        dir_accum_.assign(gs.size(), Vec3::Zero());
        steps_ = 0;
        return edits;
    }

    // Consistency audit. Empty result means memberships, flags, and geometry
    // agree; each entry describes one violation.
    std::vector<std::string> violations(const std::vector<Gaussian3D>& gs) const {
        std::vector<std::string> out;
        std::map<int64_t, std::vector<int>> expected;
        for (size_t i = 0; i < gs.size(); ++i) {
            if (gs[i].voxel_id < 0) {
                out.push_back("gaussian " + std::to_string(i) + " unassigned");
                continue;
            }
            expected[gs[i].voxel_id].push_back(static_cast<int>(i));
        }
        for (const auto& [id, members] : expected) {
            auto it = voxels_.find(id);
            if (it == voxels_.end()) {
                out.push_back("voxel " + std::to_string(id) + " missing from the map");
                continue;
            }
            if (it->second.members != members)
                out.push_back("voxel " + std::to_string(id) + " member list mismatch");
        }
        for (const auto& [id, rec] : voxels_) {
            if (geom_.linear_index(rec.index) != id)
                out.push_back("voxel " + std::to_string(id) + " index/key mismatch");
            if (rec.alive() && !expected.count(id))
                out.push_back("voxel " + std::to_string(id) + " has members but no owning gaussians");
        }
        if (dir_accum_.size() != gs.size()) out.push_back("direction accumulator size mismatch");
        return out;
    }

    // Audit for the prune criteria: call immediately after a cadence to list
    // live voxels that should have been removed. Voxels whose membership the
    // densify half of the cadence changed (children landed, or a split parent
    // left) are exempt, since pruning ran before those edits by design.
    std::vector<std::string> prune_violations(const std::vector<Gaussian3D>& gs) const {
        std::vector<std::string> out;
        for (const auto& [id, rec] : voxels_) {
            if (!rec.alive() || densify_touched_.count(id)) continue;
            if (static_cast<int>(rec.members.size()) < cfg_.min_voxel_members) {
                out.push_back("voxel " + std::to_string(id) + " kept with " +
                              std::to_string(rec.members.size()) + " members");
                continue;
            }
            double mean = 0;
            for (int i : rec.members) mean += gs[i].opacity();
            mean /= static_cast<double>(rec.members.size());
            if (mean < cfg_.min_voxel_opacity) {
                std::ostringstream msg;
                msg << "voxel " << id << " kept with mean opacity " << mean;
                out.push_back(msg.str());
            }
        }
        return out;
    }

    // Count of Gaussians whose centers sit farther than tau voxel lengths from
    // their voxel centers (the floating-splat measure).
    int runaway_count(const std::vector<Gaussian3D>& gs) const {
        int n = 0;
        for (const Gaussian3D& g : gs) {
            if (g.voxel_id < 0) continue;
            Vec3 vc = geom_.voxel_center(voxels_.at(g.voxel_id).index);
            if (guide_center_distance(g.center, vc, geom_.voxel_length, cfg_) >
                cfg_.tau * geom_.voxel_length)
                ++n;
        }
        return n;
    }

    // One line per voxel that ever held members: index triple, member count,
    // mean opacity, alive flag.
    std::string snapshot(const std::vector<Gaussian3D>& gs) const {
        std::ostringstream out;
        out << "voxel_x voxel_y voxel_z members mean_opacity alive\n";
        for (const auto& [id, rec] : voxels_) {
            double mean = 0;
            for (int i : rec.members) mean += gs[i].opacity();
            if (!rec.members.empty()) mean /= static_cast<double>(rec.members.size());
            out << rec.index.x() << ' ' << rec.index.y() << ' ' << rec.index.z() << ' '
                << rec.members.size() << ' ' << mean << ' ' << (rec.alive() ? 1 : 0) << '\n';
        }
        return out.str();
    }

    // First voxel the ray from `origin` along `dir` enters after leaving the
    // voxel containing `origin`. Returns false when the ray leaves the grid or
    // the direction is degenerate. Exposed for tests.
    bool first_crossed_voxel(const Vec3& origin, const Vec3& dir, Eigen::Vector3i* out) const {
        double n = dir.norm();
        if (n < 1e-12) return false;
        Vec3 d = dir / n;
        Eigen::Vector3i cell;
        for (int a = 0; a < 3; ++a)
            cell[a] = static_cast<int>(std::floor((origin[a] - geom_.aabb_min[a]) / geom_.voxel_length));
        double best_t = std::numeric_limits<double>::infinity();
        int best_axis = -1, step = 0;
        for (int a = 0; a < 3; ++a) {
            if (std::abs(d[a]) < 1e-12) continue;
            int next = cell[a] + (d[a] > 0 ? 1 : 0);
            double boundary = geom_.aabb_min[a] + next * geom_.voxel_length;
            double t = (boundary - origin[a]) / d[a];
            if (t < 1e-12) t = 1e-12;  // origin on a boundary still crosses outward
            if (t < best_t) {
                best_t = t;
                best_axis = a;
                step = d[a] > 0 ? 1 : -1;
            }
        }
        if (best_axis < 0) return false;
        cell[best_axis] += step;
        int limits[3] = {geom_.nx, geom_.ny, geom_.nz};
        for (int a = 0; a < 3; ++a)
            if (cell[a] < 0 || cell[a] >= limits[a]) return false;
        *out = cell;
        return true;
    }

    bool voxel_empty(int64_t id) const {
        auto it = voxels_.find(id);
        return it == voxels_.end() || it->second.members.empty();
    }

private:
    VoxelRecord& touch(int64_t id, const Eigen::Vector3i& index) {
        VoxelRecord& rec = voxels_[id];
        rec.index = index;
        return rec;
    }

    std::set<int> prune_pass(const std::vector<Gaussian3D>& gs) {
        std::set<int> removed;
        densify_touched_.clear();
        for (auto& [id, rec] : voxels_) {
            if (rec.members.empty()) continue;
            double mean = 0;
            for (int i : rec.members) mean += gs[i].opacity();
            mean /= static_cast<double>(rec.members.size());
            if (static_cast<int>(rec.members.size()) < cfg_.min_voxel_members ||
                mean < cfg_.min_voxel_opacity) {
                removed.insert(rec.members.begin(), rec.members.end());
                rec.members.clear();
            }
        }
        return removed;
    }

    void densify_pass(std::vector<Gaussian3D>& gs, std::set<int>& removed, int* appended) {
        size_t base = gs.size();
        int steps = std::max(steps_, 1);
        std::vector<Gaussian3D> children;
        for (size_t i = 0; i < base; ++i) {
            if (removed.count(static_cast<int>(i))) continue;
            const Gaussian3D& g = gs[i];
            if (!g.unconstrained) continue;
            if (g.grad_accum / steps < cfg_.densify_grad_threshold) continue;
            Vec3 dir = dir_accum_[i];
            Eigen::Vector3i target;
            if (!first_crossed_voxel(g.center, dir, &target)) continue;
            if (!voxel_empty(geom_.linear_index(target))) continue;
            dir.normalize();
            if (g.scales().maxCoeff() < cfg_.clone_scale_fraction * geom_.voxel_length) {
                Gaussian3D child = g;
                child.center = g.center + geom_.voxel_length * dir;
                children.push_back(reset_child(child));
            } else {
                int axis;
                g.log_scale.maxCoeff(&axis);
                Vec3 principal = rotation_from_quat(g.rotation).col(axis);
                double sigma = g.scales()[axis];
                for (double sign : {1.0, -1.0}) {
                    Gaussian3D child = g;
                    child.center = g.center + sign * cfg_.split_offset_sigmas * sigma * principal;
                    child.log_scale = g.log_scale.array() - std::log(cfg_.split_scale_divisor);
                    children.push_back(reset_child(child));
                }
                removed.insert(static_cast<int>(i));
                densify_touched_.insert(g.voxel_id);
            }
        }
        *appended = static_cast<int>(children.size());
        for (Gaussian3D& child : children) {
            Eigen::Vector3i v = geom_.voxel_of(child.center);
            int64_t id = geom_.linear_index(v);
            child.voxel_id = id;
            densify_touched_.insert(id);
            touch(id, v).members.push_back(static_cast<int>(gs.size()));
            gs.push_back(child);
        }
    }

    static Gaussian3D reset_child(Gaussian3D child) {
        child.grad_accum = 0.0;
        child.unconstrained = false;
        child.voxel_id = -1;
        return child;
    }

    // Rewrites scene indices after appends and removals; member lists shift by
    // the number of removed rows below each index.
    void compact(std::vector<Gaussian3D>& gs, const GuideEdits& edits) {
        for (auto it = edits.removed.rbegin(); it != edits.removed.rend(); ++it)
            gs.erase(gs.begin() + *it);
        for (auto& [id, rec] : voxels_) {
            std::vector<int> kept;
            kept.reserve(rec.members.size());
            for (int m : rec.members) {
                auto lo = std::lower_bound(edits.removed.begin(), edits.removed.end(), m);
                if (lo != edits.removed.end() && *lo == m) continue;  // pruned or split parent
                kept.push_back(m - static_cast<int>(lo - edits.removed.begin()));
            }
            std::sort(kept.begin(), kept.end());
            rec.members = std::move(kept);
        }
        // Dead records stay in the map: they show up in snapshots as alive=0
        // and can be revived when a later densification lands a child there.
    }

    SampleGrid geom_;
    GuideConfig cfg_;
    std::map<int64_t, VoxelRecord> voxels_;
    std::set<int64_t> densify_touched_;  // membership edited by the latest cadence's densify pass
    std::vector<Vec3> dir_accum_;
    int steps_ = 0;
};

}  // namespace splatwild
