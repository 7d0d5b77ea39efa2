#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "splatwild/math.hpp"
#include "splatwild/pointcloud.hpp"

namespace splatwild {

// ---------------------------------------------------------------------------
// Progressive alignment over sliding windows. Pose prediction itself sits
// behind the PairwisePredictor interface; the scheduler owns window planning,
// pose fixing, and deduplicated merging so memory stays bounded by one window.
// ---------------------------------------------------------------------------

struct Pose {
    Vec4 rotation = Vec4(1, 0, 0, 0);  // unit quaternion (w, x, y, z)
    Vec3 translation = Vec3::Zero();

    bool operator==(const Pose& o) const {
        return rotation == o.rotation && translation == o.translation;
    }
};

struct AlignWindow {
    std::vector<int> frame_indices;  // consecutive, ascending
    int fixed_prefix = 0;            // leading frames whose poses come from prior windows

    int start() const { return frame_indices.empty() ? 0 : frame_indices.front(); }
    int size() const { return static_cast<int>(frame_indices.size()); }
};

// Sliding windows of `batch` frames at stride batch/2. The last window is
// anchored to end at the final frame, so its fixed prefix grows to whatever
// overlap that anchoring produces; every frame is new in exactly one window.
inline std::vector<AlignWindow> plan_windows(int total_frames, int batch) {
    if (batch < 2 || batch % 2 != 0) throw std::invalid_argument("plan_windows: batch must be even and >= 2");
    if (total_frames < 1) throw std::invalid_argument("plan_windows: need at least one frame");

    auto make = [](int start, int size, int fixed) {
        AlignWindow w;
        w.frame_indices.resize(size);
        for (int i = 0; i < size; ++i) w.frame_indices[i] = start + i;
        w.fixed_prefix = fixed;
        return w;
    };

    if (total_frames <= batch) return {make(0, total_frames, 0)};

    int half = batch / 2;
    std::vector<AlignWindow> windows;
    int start = 0;
    while (start + batch <= total_frames) {
        windows.push_back(make(start, batch, start == 0 ? 0 : half));
        start += half;
    }
    int covered = windows.back().start() + batch;
    if (covered < total_frames) {
        int anchor = total_frames - batch;
        windows.push_back(make(anchor, batch, covered - anchor));
    }
    return windows;
}

inline std::string window_table(const std::vector<AlignWindow>& windows) {
    std::ostringstream out;
    out << "window\tstart\tsize\tfixed_prefix\n";
    for (size_t i = 0; i < windows.size(); ++i)
        out << i << '\t' << windows[i].start() << '\t' << windows[i].size() << '\t'
            << windows[i].fixed_prefix << '\n';
    return out.str();
}

// One window's prediction: a pose per window frame and a fused cloud whose
// points carry source-frame tags and confidences.
struct PredictorResult {
    std::map<int, Pose> poses;
    PointCloud cloud;
};

// Contract: given a window and the already-fixed poses for its fixed prefix,
// return poses for every window frame, echoing the fixed ones bitwise.
using PairwisePredictor = std::function<PredictorResult(const AlignWindow&, const std::map<int, Pose>&)>;

struct AlignmentOutput {
    std::map<int, Pose> poses;
    PointCloud cloud;
};

// Runs the windows in order, feeding each one the poses its fixed prefix
// already earned, verifying the echo, and merging only each window's new
// frames (poses and points alike) so nothing lands twice.
inline AlignmentOutput run_alignment(int total_frames, int batch, const PairwisePredictor& predictor) {
    AlignmentOutput merged;
    std::vector<AlignWindow> windows = plan_windows(total_frames, batch);
    for (size_t wi = 0; wi < windows.size(); ++wi) {
        const AlignWindow& window = windows[wi];
        std::map<int, Pose> fixed;
        for (int i = 0; i < window.fixed_prefix; ++i) {
            int frame = window.frame_indices[i];
            auto it = merged.poses.find(frame);
            if (it == merged.poses.end())
                throw std::logic_error("alignment window " + std::to_string(wi) + ": frame " +
                                       std::to_string(frame) + " fixed before being aligned");
            fixed.emplace(frame, it->second);
        }

        PredictorResult result = predictor(window, fixed);

        for (int frame : window.frame_indices)
            if (!result.poses.count(frame))
                throw std::runtime_error("alignment window " + std::to_string(wi) +
                                         ": predictor returned no pose for frame " + std::to_string(frame));
        for (const auto& [frame, pose] : fixed)
            if (!(result.poses.at(frame) == pose))
                throw std::runtime_error("alignment window " + std::to_string(wi) +
                                         ": predictor altered the fixed pose of frame " +
                                         std::to_string(frame));

        std::set<int> fresh(window.frame_indices.begin() + window.fixed_prefix,
                            window.frame_indices.end());
        for (int frame : fresh) merged.poses.emplace(frame, result.poses.at(frame));

        result.cloud.validate();
        const PointCloud& c = result.cloud;
        if (c.source_frames.size() != c.size() && c.size() > 0)
            throw std::runtime_error("alignment window " + std::to_string(wi) +
                                     ": predictor cloud lacks source-frame tags");
        for (size_t p = 0; p < c.size(); ++p) {
            if (!fresh.count(c.source_frames[p])) continue;  // already merged from an earlier window
            merged.cloud.positions.push_back(c.positions[p]);
            merged.cloud.confidence.push_back(c.confidence[p]);
            merged.cloud.source_frames.push_back(c.source_frames[p]);
            if (!c.colors.empty()) merged.cloud.colors.push_back(c.colors[p]);
            if (!c.normals.empty()) merged.cloud.normals.push_back(c.normals[p]);
        }
    }
    return merged;
}

// Test double: answers every window from a known global scene, honoring the
// supplied fixed poses exactly (even if the caller perturbed them).
inline PairwisePredictor synthetic_predictor(const std::map<int, Pose>& true_poses,
                                             const PointCloud& true_cloud) {
    return [true_poses, true_cloud](const AlignWindow& window, const std::map<int, Pose>& fixed) {
        PredictorResult out;
        for (int frame : window.frame_indices) {
            auto pinned = fixed.find(frame);
            if (pinned != fixed.end()) {
                out.poses[frame] = pinned->second;
                continue;
            }
            auto truth = true_poses.find(frame);
            if (truth == true_poses.end())
                throw std::invalid_argument("synthetic predictor: no ground truth for frame " +
                                            std::to_string(frame));
            out.poses[frame] = truth->second;
        }
        std::set<int> wanted(window.frame_indices.begin(), window.frame_indices.end());
        for (size_t p = 0; p < true_cloud.size(); ++p) {
            if (!wanted.count(true_cloud.source_frames[p])) continue;
            out.cloud.positions.push_back(true_cloud.positions[p]);
            out.cloud.confidence.push_back(true_cloud.confidence[p]);
            out.cloud.source_frames.push_back(true_cloud.source_frames[p]);
        }
        return out;
    };
}

// Trajectory text format: one line per frame, "frame qw qx qy qz tx ty tz",
// full double precision.
inline void write_trajectory(const std::string& path, const std::map<int, Pose>& poses) {
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const auto& [frame, pose] : poses) {
        std::fprintf(f, "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", frame, pose.rotation[0],
                     pose.rotation[1], pose.rotation[2], pose.rotation[3], pose.translation[0],
                     pose.translation[1], pose.translation[2]);
    }
    std::fclose(f);
}

inline std::map<int, Pose> read_trajectory(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "r");
    if (!f) throw std::runtime_error("cannot read " + path);
    std::map<int, Pose> poses;
    int frame;
    double q[4], t[3];
    int got;
    while ((got = std::fscanf(f, "%d %lg %lg %lg %lg %lg %lg %lg", &frame, &q[0], &q[1], &q[2], &q[3],
                              &t[0], &t[1], &t[2])) == 8) {
        Pose p;
        p.rotation = Vec4(q[0], q[1], q[2], q[3]);
        p.translation = Vec3(t[0], t[1], t[2]);
        poses[frame] = p;
    }
    std::fclose(f);
    if (got != EOF) throw std::runtime_error(path + ": malformed trajectory line");
    return poses;
}

}  // namespace splatwild
