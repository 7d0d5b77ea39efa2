#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "splatwild/image.hpp"
#include "splatwild/png_io.hpp"
#include "splatwild/ssim.hpp"

namespace splatwild {

// ---------------------------------------------------------------------------
// Residual maps
// ---------------------------------------------------------------------------

enum class ResidualKind { L1, DSSIM, Combined };

struct ResidualMap {
    Image1 values;
    ResidualKind kind = ResidualKind::L1;
    bool normalized = false;
};

inline ResidualMap l1_residual(const Image3& render, const Image3& gt) {
    require_same_shape(render, gt, "l1_residual");
    ResidualMap out;
    out.kind = ResidualKind::L1;
    out.values = Image1(render.height, render.width);
    for (size_t p = 0; p < render.pixels(); ++p) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += std::abs(render.data[p * 3 + c] - gt.data[p * 3 + c]);
        out.values.data[p] = s / 3.0;
    }
    return out;
}

inline ResidualMap dssim_residual(const Image3& render, const Image3& gt) {
    ResidualMap out;
    out.kind = ResidualKind::DSSIM;
    out.values = dssim_map(render, gt);
    return out;
}

// Min-max normalization to [0,1]; a constant map has nothing to separate and
// normalizes to all zeros.
inline ResidualMap normalize_residual(const ResidualMap& in) {
    if (in.values.empty()) throw std::invalid_argument("normalize_residual: empty map");
    double lo = in.values.data[0], hi = in.values.data[0];
    for (double v : in.values.data) {
        if (!std::isfinite(v)) throw std::invalid_argument("normalize_residual: non-finite residual");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    ResidualMap out = in;
    out.normalized = true;
    if (hi - lo <= 0.0) {
        std::fill(out.values.data.begin(), out.values.data.end(), 0.0);
        return out;
    }
    for (double& v : out.values.data) v = (v - lo) / (hi - lo);
    return out;
}

// Convex blend of the two normalized residual kinds.
inline ResidualMap combine_residuals(const ResidualMap& l1, const ResidualMap& dssim, double lambda) {
    if (!l1.normalized || !dssim.normalized)
        throw std::invalid_argument("combine_residuals: inputs must be normalized first");
    if (l1.values.height != dssim.values.height || l1.values.width != dssim.values.width)
        throw std::invalid_argument("combine_residuals: shapes differ");
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("combine_residuals: lambda outside [0,1]");
    ResidualMap out;
    out.kind = ResidualKind::Combined;
    out.normalized = true;
    out.values = Image1(l1.values.height, l1.values.width);
    for (size_t p = 0; p < out.values.data.size(); ++p)
        out.values.data[p] = (1.0 - lambda) * l1.values.data[p] + lambda * dssim.values.data[p];
    return out;
}

// ---------------------------------------------------------------------------
// Object-wise residuals and population statistics
// ---------------------------------------------------------------------------

struct ObjectResidual {
    uint32_t id = 0;
    double mean = 0.0;
    size_t area = 0;
};

// Mean residual per segmentation ID, ascending by ID. Background (0) is a
// regular row; the thresholds treat it like any other object.
inline std::vector<ObjectResidual> object_average(const ResidualMap& residual, const IdMap& seg) {
    if (residual.values.height != seg.height || residual.values.width != seg.width)
        throw std::invalid_argument("object_average: residual and segmentation shapes differ");
    std::map<uint32_t, ObjectResidual> acc;
    for (size_t p = 0; p < residual.values.data.size(); ++p) {
        ObjectResidual& row = acc[seg.data[p]];
        row.id = seg.data[p];
        row.mean += residual.values.data[p];
        row.area += 1;
    }
    std::vector<ObjectResidual> out;
    out.reserve(acc.size());
    for (auto& [id, row] : acc) {
        row.mean /= static_cast<double>(row.area);
        out.push_back(row);
    }
    return out;
}

struct ResidualStats {
    double expectation = 0.0;
    double variance = 0.0;  // population variance (uniform pixel weights)
};

inline ResidualStats residual_stats(const ResidualMap& residual) {
    if (residual.values.empty()) throw std::invalid_argument("residual_stats: empty map");
    double mean = 0.0;
    for (double v : residual.values.data) mean += v;
    mean /= static_cast<double>(residual.values.data.size());
    double var = 0.0;
    for (double v : residual.values.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(residual.values.data.size());
    return {mean, var};
}

// Variant: statistics over the object means instead of raw pixels.
inline ResidualStats table_stats(const std::vector<ObjectResidual>& table) {
    if (table.empty()) throw std::invalid_argument("table_stats: empty table");
    double mean = 0.0;
    for (const ObjectResidual& row : table) mean += row.mean;
    mean /= static_cast<double>(table.size());
    double var = 0.0;
    for (const ObjectResidual& row : table) var += (row.mean - mean) * (row.mean - mean);
    var /= static_cast<double>(table.size());
    return {mean, var};
}

// ---------------------------------------------------------------------------
// Thresholds
// ---------------------------------------------------------------------------

enum class SpreadMode { Variance, StdDev };

inline double spread_value(const ResidualStats& stats, SpreadMode mode) {
    return mode == SpreadMode::Variance ? stats.variance : std::sqrt(stats.variance);
}

// Local threshold with linear relaxation: starts at E + spread * (1 + lambda_l)
// and tightens to E + spread by the final iteration.
inline double local_threshold(const ResidualStats& stats, int t, int t_max, double lambda_l,
                              SpreadMode mode = SpreadMode::Variance) {
    if (t_max <= 0) throw std::invalid_argument("local_threshold: t_max must be positive");
    if (t < 0 || t > t_max) throw std::invalid_argument("local_threshold: iteration outside [0, t_max]");
    double relax = lambda_l * static_cast<double>(t_max - t) / static_cast<double>(t_max);
    return stats.expectation + spread_value(stats, mode) * (1.0 + relax);
}

inline double global_threshold(const ResidualStats& stats, double lambda_l, double lambda_g,
                               SpreadMode mode = SpreadMode::Variance) {
    if (!(lambda_g > 1.0 + lambda_l))
        throw std::invalid_argument("global_threshold: requires lambda_g > 1 + lambda_l");
    return stats.expectation + lambda_g * spread_value(stats, mode);
}

// Objects whose mean residual strictly exceeds the threshold.
inline std::vector<uint32_t> select_objects(const std::vector<ObjectResidual>& table, double threshold) {
    std::vector<uint32_t> ids;
    for (const ObjectResidual& row : table)
        if (row.mean > threshold) ids.push_back(row.id);
    return ids;
}

// ---------------------------------------------------------------------------
// Prompt extraction (exported for driving an external segmenter)
// ---------------------------------------------------------------------------

struct PromptPoint {
    int x = 0;  // column
    int y = 0;  // row
    bool operator==(const PromptPoint&) const = default;
};

// Centroid snapped to the nearest mask pixel plus the four extreme pixels.
// Extremes pick the pixel nearest the centroid along the free axis so a solid
// square yields its edge midpoints. Duplicates collapse; order is centroid,
// left, right, top, bottom.
inline std::vector<PromptPoint> prompts_from_mask(const Mask& mask) {
    std::vector<PromptPoint> pixels;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x)) pixels.push_back({x, y});
    if (pixels.empty()) throw std::invalid_argument("prompts_from_mask: empty mask");

    double cx = 0.0, cy = 0.0;
    for (const PromptPoint& p : pixels) {
        cx += p.x;
        cy += p.y;
    }
    cx /= pixels.size();
    cy /= pixels.size();

    auto best = [&](auto&& better) {
        PromptPoint b = pixels[0];
        for (const PromptPoint& p : pixels)
            if (better(p, b)) b = p;
        return b;
    };
    auto near_axis = [](double want, int a, int b) { return std::abs(a - want) < std::abs(b - want); };

    PromptPoint centroid = best([&](const PromptPoint& p, const PromptPoint& b) {
        double dp = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
        double db = (b.x - cx) * (b.x - cx) + (b.y - cy) * (b.y - cy);
        if (dp != db) return dp < db;
        return std::pair(p.y, p.x) < std::pair(b.y, b.x);
    });
    PromptPoint left = best([&](const PromptPoint& p, const PromptPoint& b) {
        if (p.x != b.x) return p.x < b.x;
        if (p.y != b.y) return near_axis(cy, p.y, b.y);
        return false;
    });
    PromptPoint right = best([&](const PromptPoint& p, const PromptPoint& b) {
        if (p.x != b.x) return p.x > b.x;
        if (p.y != b.y) return near_axis(cy, p.y, b.y);
        return false;
    });
    PromptPoint top = best([&](const PromptPoint& p, const PromptPoint& b) {
        if (p.y != b.y) return p.y < b.y;
        if (p.x != b.x) return near_axis(cx, p.x, b.x);
        return false;
    });
    PromptPoint bottom = best([&](const PromptPoint& p, const PromptPoint& b) {
        if (p.y != b.y) return p.y > b.y;
        if (p.x != b.x) return near_axis(cx, p.x, b.x);
        return false;
    });

    std::vector<PromptPoint> out;
    for (const PromptPoint& p : {centroid, left, right, top, bottom})
        if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// Track store: per-track, per-frame masks produced by an external tracker
// ---------------------------------------------------------------------------

struct TrackStore {
    // track id -> frame index -> binary mask
    std::map<int, std::map<int, Mask>> tracks;
};

inline void save_track_store(const std::string& dir, const TrackStore& store) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write " + dir + "/manifest.txt");
    for (const auto& [track_id, frames] : store.tracks) {
        manifest << track_id;
        fs::create_directories(dir + "/track_" + std::to_string(track_id));
        for (const auto& [frame, mask] : frames) {
            manifest << ' ' << frame;
            char name[64];
            std::snprintf(name, sizeof(name), "/track_%d/frame_%04d.png", track_id, frame);
            write_png_mask(dir + name, mask);
        }
        manifest << '\n';
    }
}

inline TrackStore load_track_store(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.txt");
    if (!manifest) throw std::runtime_error("cannot read " + dir + "/manifest.txt");
    TrackStore store;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        int track_id;
        if (!(ss >> track_id)) throw std::runtime_error(dir + ": malformed manifest line '" + line + "'");
        int frame;
        while (ss >> frame) {
            char name[64];
            std::snprintf(name, sizeof(name), "/track_%d/frame_%04d.png", track_id, frame);
            store.tracks[track_id][frame] = read_png_mask(dir + name);
        }
        store.tracks.try_emplace(track_id);
    }
    return store;
}

// ---------------------------------------------------------------------------
// Mask state and the local/global update rules
// ---------------------------------------------------------------------------

struct MaskState {
    int height = 0, width = 0;
    std::map<int, std::vector<uint32_t>> local_sets;  // frame -> IDs from its last visit
    std::vector<Mask> global_masks;                   // per frame, union-only growth
    std::set<int> ingested_tracks;

    MaskState() = default;
    MaskState(int n_frames, int h, int w) : height(h), width(w), global_masks(n_frames, Mask(h, w, 0)) {}
};

enum class GlobalUpdate { Ingested, AlreadyIngested, NoMatch };

// A high-residual object in frame k nominates a track: the track whose frame-k
// mask overlaps it best (IoU >= threshold). The whole track then joins every
// frame's global mask. Tracks ingest at most once.
inline GlobalUpdate update_global(MaskState& state, int frame_k, uint32_t candidate_id, const IdMap& seg_k,
                                  const TrackStore& store, double iou_threshold = 0.5) {
    if (frame_k < 0 || frame_k >= static_cast<int>(state.global_masks.size()))
        throw std::invalid_argument("update_global: frame index out of range");
    Mask candidate(state.height, state.width, 0);
    for (size_t p = 0; p < candidate.data.size(); ++p) candidate.data[p] = seg_k.data[p] == candidate_id;

    int best_track = -1;
    double best_iou = 0.0;
    for (const auto& [track_id, frames] : store.tracks) {
        auto it = frames.find(frame_k);
        if (it == frames.end()) continue;
        double iou = mask_iou(candidate, it->second);
        if (iou > best_iou) {
            best_iou = iou;
            best_track = track_id;
        }
    }
    if (best_track < 0 || best_iou < iou_threshold) return GlobalUpdate::NoMatch;
    if (state.ingested_tracks.count(best_track)) return GlobalUpdate::AlreadyIngested;

    state.ingested_tracks.insert(best_track);
    for (const auto& [frame, mask] : store.tracks.at(best_track)) {
        if (frame < 0 || frame >= static_cast<int>(state.global_masks.size())) continue;
        Mask& global = state.global_masks[frame];
        for (size_t p = 0; p < global.data.size(); ++p) global.data[p] |= mask.data[p] ? 1 : 0;
    }
    return GlobalUpdate::Ingested;
}

// Final distractor mask: local object pixels union the accumulated global set.
inline Mask final_mask(const MaskState& state, int frame, const IdMap& seg) {
    if (frame < 0 || frame >= static_cast<int>(state.global_masks.size()))
        throw std::invalid_argument("final_mask: frame index out of range");
    Mask out = state.global_masks[frame];
    auto it = state.local_sets.find(frame);
    if (it != state.local_sets.end() && !it->second.empty()) {
        std::set<uint32_t> ids(it->second.begin(), it->second.end());
        for (size_t p = 0; p < out.data.size(); ++p)
            if (ids.count(seg.data[p])) out.data[p] = 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Residual map file format: "RMAP", u32 width, u32 height, f32 row-major LE
// ---------------------------------------------------------------------------

inline void write_rmap(const std::string& path, const Image1& map) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write("RMAP", 4);
    auto put_u32 = [&](uint32_t v) {
        uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v >> 16),
                        static_cast<uint8_t>(v >> 24)};
        f.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(static_cast<uint32_t>(map.width));
    put_u32(static_cast<uint32_t>(map.height));
    for (double v : map.data) {
        float fv = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &fv, 4);
        put_u32(bits);
    }
}

inline Image1 read_rmap(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "RMAP", 4) != 0) throw std::runtime_error(path + ": missing RMAP magic");
    auto get_u32 = [&]() {
        uint8_t b[4];
        f.read(reinterpret_cast<char*>(b), 4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    };
    uint32_t w = get_u32(), h = get_u32();
    if (!f) throw std::runtime_error(path + ": truncated RMAP header");
    Image1 map(static_cast<int>(h), static_cast<int>(w));
    for (size_t p = 0; p < map.data.size(); ++p) {
        uint32_t bits = get_u32();
        if (!f)
            throw std::runtime_error(path + ": truncated RMAP payload, expected " +
                                     std::to_string(static_cast<size_t>(w) * h) + " samples");
        float fv;
        std::memcpy(&fv, &bits, 4);
        map.data[p] = fv;
    }
    return map;
}

// ---------------------------------------------------------------------------
// Masking configuration and the per-iteration driver
// ---------------------------------------------------------------------------

struct MaskingConfig {
    double combine_lambda = 0.2;  // DSSIM share of the combined residual
    double lambda_local = 0.4;
    double lambda_global = 2.8;
    int t_max = 7000;
    int activation_iter = 500;
    SpreadMode spread = SpreadMode::Variance;
    bool stats_over_objects = false;
    double track_match_iou = 0.5;

    void validate() const {
        if (t_max <= 0) throw std::invalid_argument("masking config: t_max must be positive");
        if (activation_iter < 0) throw std::invalid_argument("masking config: negative activation iteration");
        if (combine_lambda < 0.0 || combine_lambda > 1.0)
            throw std::invalid_argument("masking config: combine_lambda outside [0,1]");
        if (!(lambda_global > 1.0 + lambda_local))
            throw std::invalid_argument("masking config: requires lambda_global > 1 + lambda_local");
    }
};

struct MaskDebugRecord {
    bool active = false;
    ResidualStats stats;
    double t_local = 0.0, t_global = 0.0;
    std::vector<ObjectResidual> table;
    std::vector<uint32_t> local_ids;
    std::vector<uint32_t> candidate_ids;
    std::vector<uint32_t> unmatched_candidates;  // tracker disagreement warnings
    Image1 combined_residual;
    Mask distractor;
    double masked_fraction = 0.0;
};

// Runs the full residual -> threshold -> mask pipeline for one training view
// and maintains the cross-iteration state.
class AdaptiveMasker {
  public:
    AdaptiveMasker(const MaskingConfig& config, TrackStore store, int n_frames, int height, int width)
        : config_(config), store_(std::move(store)), state_(n_frames, height, width) {
        config_.validate();
    }

    // Returns keep weights: 1 supervises the pixel, 0 excludes it.
    Mask step(int iter, int frame, const Image3& render, const Image3& gt, const IdMap& seg,
              MaskDebugRecord* dbg = nullptr) {
        if (iter < config_.activation_iter) {
            if (dbg) *dbg = MaskDebugRecord{};
            return Mask(render.height, render.width, 1);
        }
        ResidualMap l1 = normalize_residual(l1_residual(render, gt));
        ResidualMap ds = normalize_residual(dssim_residual(render, gt));
        ResidualMap combined = combine_residuals(l1, ds, config_.combine_lambda);

        std::vector<ObjectResidual> table = object_average(combined, seg);
        ResidualStats stats = config_.stats_over_objects ? table_stats(table) : residual_stats(combined);

        int t = std::min(iter, config_.t_max);
        double t_local = local_threshold(stats, t, config_.t_max, config_.lambda_local, config_.spread);
        double t_global = global_threshold(stats, config_.lambda_local, config_.lambda_global, config_.spread);

        state_.local_sets[frame] = select_objects(table, t_local);

        std::vector<uint32_t> candidates = select_objects(table, t_global);
        std::vector<uint32_t> unmatched;
        for (uint32_t id : candidates)
            if (update_global(state_, frame, id, seg, store_, config_.track_match_iou) == GlobalUpdate::NoMatch)
                unmatched.push_back(id);

        Mask distractor = final_mask(state_, frame, seg);
        Mask keep(render.height, render.width, 1);
        size_t masked = 0;
        for (size_t p = 0; p < keep.data.size(); ++p) {
            keep.data[p] = distractor.data[p] ? 0 : 1;
            masked += distractor.data[p] != 0;
        }
        if (dbg) {
            dbg->active = true;
            dbg->stats = stats;
            dbg->t_local = t_local;
            dbg->t_global = t_global;
            dbg->table = std::move(table);
            dbg->local_ids = state_.local_sets[frame];
            dbg->candidate_ids = std::move(candidates);
            dbg->unmatched_candidates = std::move(unmatched);
            dbg->combined_residual = combined.values;
            dbg->distractor = distractor;
            dbg->masked_fraction = static_cast<double>(masked) / static_cast<double>(keep.data.size());
        }
        return keep;
    }

    const MaskState& state() const { return state_; }
    const MaskingConfig& config() const { return config_; }

  private:
    MaskingConfig config_;
    TrackStore store_;
    MaskState state_;
};

}  // namespace splatwild
