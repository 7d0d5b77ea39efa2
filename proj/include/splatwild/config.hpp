#pragma once

#include <cctype>
#include <climits>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "splatwild/masking.hpp"
#include "splatwild/math.hpp"
#include "splatwild/scene.hpp"
#include "splatwild/trainer.hpp"
#include "splatwild/voxelguide.hpp"

namespace splatwild {

// Flat text configuration: `key = value` lines, `#` comments, optional
// `[section]` blocks. Values stay strings until a typed accessor asks for
// them, so error messages can name the offending key.

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace detail

struct ConfigSection {
    std::string name;  // empty for the leading, unsectioned block
    std::vector<std::pair<std::string, std::string>> entries;  // file order, duplicates kept

    std::string where() const { return name.empty() ? "config" : "config section [" + name + "]"; }

    const std::string* find(const std::string& key) const {
        const std::string* hit = nullptr;  // repeated keys: the last assignment wins
        for (const auto& [k, v] : entries)
            if (k == key) hit = &v;
        return hit;
    }
    bool has(const std::string& key) const { return find(key) != nullptr; }

    const std::string& require(const std::string& key) const {
        const std::string* v = find(key);
        if (!v) throw std::runtime_error(where() + ": missing key '" + key + "'");
        return *v;
    }

    std::string get_string(const std::string& key) const { return require(key); }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        const std::string* v = find(key);
        return v ? *v : fallback;
    }

    std::vector<double> get_doubles(const std::string& key) const {
        const std::string& raw = require(key);
        std::vector<double> out;
        const char* p = raw.c_str();
        while (*p) {
            while (std::isspace(static_cast<unsigned char>(*p))) ++p;
            if (!*p) break;
            char* end = nullptr;
            double v = std::strtod(p, &end);
            if (end == p)
                throw std::runtime_error(where() + ": key '" + key + "' is not numeric: '" + raw +
                                         "'");
            out.push_back(v);
            p = end;
        }
        if (out.empty())
            throw std::runtime_error(where() + ": key '" + key + "' has no value");
        return out;
    }

    double get_double(const std::string& key) const {
        std::vector<double> v = get_doubles(key);
        if (v.size() != 1)
            throw std::runtime_error(where() + ": key '" + key + "' expects one number, got " +
                                     std::to_string(v.size()));
        return v[0];
    }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    int get_int(const std::string& key) const {
        const std::string raw = detail::trim(require(key));
        char* end = nullptr;
        long long v = std::strtoll(raw.c_str(), &end, 10);
        if (end == raw.c_str() || *end != '\0' || v < INT_MIN || v > INT_MAX)
            throw std::runtime_error(where() + ": key '" + key + "' is not an integer: '" + raw +
                                     "'");
        return static_cast<int>(v);
    }
    int get_int(const std::string& key, int fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    uint64_t get_uint64(const std::string& key) const {
        const std::string raw = detail::trim(require(key));
        char* end = nullptr;
        if (raw.empty() || raw[0] == '-')
            throw std::runtime_error(where() + ": key '" + key +
                                     "' is not a non-negative integer: '" + raw + "'");
        unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
        if (end == raw.c_str() || *end != '\0')
            throw std::runtime_error(where() + ": key '" + key +
                                     "' is not a non-negative integer: '" + raw + "'");
        return static_cast<uint64_t>(v);
    }
    uint64_t get_uint64(const std::string& key, uint64_t fallback) const {
        return has(key) ? get_uint64(key) : fallback;
    }

    bool get_bool(const std::string& key) const {
        const std::string raw = detail::trim(require(key));
        if (raw == "true" || raw == "1") return true;
        if (raw == "false" || raw == "0") return false;
        throw std::runtime_error(where() + ": key '" + key + "' expects true/false/1/0, got '" +
                                 raw + "'");
    }
    bool get_bool(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }

    Vec3 get_vec3(const std::string& key) const {
        std::vector<double> v = get_doubles(key);
        if (v.size() != 3)
            throw std::runtime_error(where() + ": key '" + key + "' expects 3 numbers, got " +
                                     std::to_string(v.size()));
        return Vec3(v[0], v[1], v[2]);
    }
    Vec3 get_vec3(const std::string& key, const Vec3& fallback) const {
        return has(key) ? get_vec3(key) : fallback;
    }

    Vec4 get_vec4(const std::string& key) const {
        std::vector<double> v = get_doubles(key);
        if (v.size() != 4)
            throw std::runtime_error(where() + ": key '" + key + "' expects 4 numbers, got " +
                                     std::to_string(v.size()));
        return Vec4(v[0], v[1], v[2], v[3]);
    }
    Vec4 get_vec4(const std::string& key, const Vec4& fallback) const {
        return has(key) ? get_vec4(key) : fallback;
    }

    // Rejects typos: every present key must appear in `allowed`.
    void expect_keys(std::initializer_list<const char*> allowed) const {
        for (const auto& [k, v] : entries) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || k == a;
            if (!ok) throw std::runtime_error(where() + ": unknown key '" + k + "'");
        }
    }
};

struct ConfigFile {
    ConfigSection global;
    std::vector<ConfigSection> sections;

    std::vector<const ConfigSection*> sections_named(const std::string& name) const {
        std::vector<const ConfigSection*> out;
        for (const ConfigSection& s : sections)
            if (s.name == name) out.push_back(&s);
        return out;
    }
};

inline ConfigFile parse_config(const std::string& text, const std::string& origin = "config") {
    ConfigFile cf;
    ConfigSection* current = &cf.global;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                         ": malformed section header '" + line + "'");
            ConfigSection s;
            s.name = detail::trim(line.substr(1, line.size() - 2));
            if (s.name.empty())
                throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                         ": empty section name");
            cf.sections.push_back(std::move(s));
            current = &cf.sections.back();
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                     ": expected 'key = value' or '[section]', got '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": empty key");
        current->entries.emplace_back(std::move(key), std::move(value));
    }
    return cf;
}

inline ConfigFile parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open config file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

// Every knob of a reconstruction run in one place, initialized to the
// defaults the pipeline was tuned with. A config file overrides keys of the
// same name; everything else keeps its default.
struct RunConfig {
    int iterations = 7000;
    int t_max = 7000;
    int activation_iter = 500;
    double lambda_local = 0.4;
    double lambda_global = 2.8;
    double lambda_dssim = 0.2;
    double track_match_iou = 0.5;

    int sample_n = 80;
    int sample_k = 3;
    int neighbors = 10;

    double tau = 3.5;
    double beta = 1.0;
    double densify_grad_threshold = 0.003;
    int min_voxel_members = 2;
    double min_voxel_opacity = 0.075;
    int densify_interval = 100;
    int guide_n_short = 16;

    double lr_center = 2e-3;
    double lr_log_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_opacity = 5e-2;
    double lr_color = 1e-2;
    Vec3 background = Vec3::Zero();

    uint64_t seed = 1;
    double init_opacity = 0.1;
    double init_scale_multiplier = 1.0;
    int init_neighbors = 3;
    int random_count = 1000;
    Vec3 random_box_min = Vec3::Zero();
    Vec3 random_box_max = Vec3::Ones();

    static RunConfig from_config(const ConfigFile& cf) {
        if (!cf.sections.empty())
            throw std::runtime_error("config: unexpected section [" + cf.sections.front().name +
                                     "] in a run config");
        const ConfigSection& g = cf.global;
        g.expect_keys({"iterations",       "t_max",
                       "activation_iter",  "lambda_local",
                       "lambda_global",    "lambda_dssim",
                       "track_match_iou",  "sample_n",
                       "sample_k",         "neighbors",
                       "tau",              "beta",
                       "densify_grad_threshold", "min_voxel_members",
                       "min_voxel_opacity", "densify_interval",
                       "guide_n_short",    "lr_center",
                       "lr_log_scale",     "lr_rotation",
                       "lr_opacity",       "lr_color",
                       "background",       "seed",
                       "init_opacity",     "init_scale_multiplier",
                       "init_neighbors",   "random_count",
                       "random_box_min",   "random_box_max"});
        RunConfig rc;
        rc.iterations = g.get_int("iterations", rc.iterations);
        rc.t_max = g.get_int("t_max", rc.t_max);
        rc.activation_iter = g.get_int("activation_iter", rc.activation_iter);
        rc.lambda_local = g.get_double("lambda_local", rc.lambda_local);
        rc.lambda_global = g.get_double("lambda_global", rc.lambda_global);
        rc.lambda_dssim = g.get_double("lambda_dssim", rc.lambda_dssim);
        rc.track_match_iou = g.get_double("track_match_iou", rc.track_match_iou);
        rc.sample_n = g.get_int("sample_n", rc.sample_n);
        rc.sample_k = g.get_int("sample_k", rc.sample_k);
        rc.neighbors = g.get_int("neighbors", rc.neighbors);
        rc.tau = g.get_double("tau", rc.tau);
        rc.beta = g.get_double("beta", rc.beta);
        rc.densify_grad_threshold = g.get_double("densify_grad_threshold", rc.densify_grad_threshold);
        rc.min_voxel_members = g.get_int("min_voxel_members", rc.min_voxel_members);
        rc.min_voxel_opacity = g.get_double("min_voxel_opacity", rc.min_voxel_opacity);
        rc.densify_interval = g.get_int("densify_interval", rc.densify_interval);
        rc.guide_n_short = g.get_int("guide_n_short", rc.guide_n_short);
        rc.lr_center = g.get_double("lr_center", rc.lr_center);
        rc.lr_log_scale = g.get_double("lr_log_scale", rc.lr_log_scale);
        rc.lr_rotation = g.get_double("lr_rotation", rc.lr_rotation);
        rc.lr_opacity = g.get_double("lr_opacity", rc.lr_opacity);
        rc.lr_color = g.get_double("lr_color", rc.lr_color);
        rc.background = g.get_vec3("background", rc.background);
        rc.seed = g.get_uint64("seed", rc.seed);
        rc.init_opacity = g.get_double("init_opacity", rc.init_opacity);
        rc.init_scale_multiplier = g.get_double("init_scale_multiplier", rc.init_scale_multiplier);
        rc.init_neighbors = g.get_int("init_neighbors", rc.init_neighbors);
        rc.random_count = g.get_int("random_count", rc.random_count);
        rc.random_box_min = g.get_vec3("random_box_min", rc.random_box_min);
        rc.random_box_max = g.get_vec3("random_box_max", rc.random_box_max);
        rc.validate();
        return rc;
    }

    MaskingConfig masking_config() const {
        MaskingConfig m;
        m.combine_lambda = lambda_dssim;
        m.lambda_local = lambda_local;
        m.lambda_global = lambda_global;
        m.t_max = t_max;
        m.activation_iter = activation_iter;
        m.track_match_iou = track_match_iou;
        return m;
    }

    GuideConfig guide_config() const {
        GuideConfig g;
        g.tau = tau;
        g.beta = beta;
        g.densify_grad_threshold = densify_grad_threshold;
        g.min_voxel_members = min_voxel_members;
        g.min_voxel_opacity = min_voxel_opacity;
        g.densify_interval = densify_interval;
        return g;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.iterations = iterations;
        t.lr_center = lr_center;
        t.lr_log_scale = lr_log_scale;
        t.lr_rotation = lr_rotation;
        t.lr_opacity = lr_opacity;
        t.lr_color = lr_color;
        t.loss_lambda = lambda_dssim;
        t.background = background;
        return t;
    }

    void validate() const {
        masking_config().validate();
        guide_config().validate();
        train_config().validate();
        auto bad = [](const std::string& what) {
            throw std::invalid_argument("RunConfig: " + what);
        };
        if (track_match_iou < 0.0 || track_match_iou > 1.0)
            bad("track_match_iou must lie in [0, 1]");
        if (sample_n <= 0) bad("sample_n must be positive");
        if (sample_k <= 0) bad("sample_k must be positive");
        if (neighbors < 3) bad("neighbors must be at least 3");
        if (guide_n_short < 1) bad("guide_n_short must be at least 1");
        if (!(init_opacity > 0.0 && init_opacity < 1.0)) bad("init_opacity must lie in (0, 1)");
        if (!(init_scale_multiplier > 0.0)) bad("init_scale_multiplier must be positive");
        if (init_neighbors < 1) bad("init_neighbors must be at least 1");
        if (random_count <= 0) bad("random_count must be positive");
        if (!((random_box_max - random_box_min).array() > 0.0).all())
            bad("random_box must have positive extent");
    }

    std::string describe() const {
        std::ostringstream out;
        auto num = [&](const char* key, double v) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%g", v);
            out << key << " = " << buf << "\n";
        };
        auto vec = [&](const char* key, const Vec3& v) {
            char buf[192];
            std::snprintf(buf, sizeof buf, "%g %g %g", v.x(), v.y(), v.z());
            out << key << " = " << buf << "\n";
        };
        out << "iterations = " << iterations << "\n";
        out << "t_max = " << t_max << "\n";
        out << "activation_iter = " << activation_iter << "\n";
        num("lambda_local", lambda_local);
        num("lambda_global", lambda_global);
        num("lambda_dssim", lambda_dssim);
        num("track_match_iou", track_match_iou);
        out << "sample_n = " << sample_n << "\n";
        out << "sample_k = " << sample_k << "\n";
        out << "neighbors = " << neighbors << "\n";
        num("tau", tau);
        num("beta", beta);
        num("densify_grad_threshold", densify_grad_threshold);
        out << "min_voxel_members = " << min_voxel_members << "\n";
        num("min_voxel_opacity", min_voxel_opacity);
        out << "densify_interval = " << densify_interval << "\n";
        out << "guide_n_short = " << guide_n_short << "\n";
        num("lr_center", lr_center);
        num("lr_log_scale", lr_log_scale);
        num("lr_rotation", lr_rotation);
        num("lr_opacity", lr_opacity);
        num("lr_color", lr_color);
        vec("background", background);
        out << "seed = " << seed << "\n";
        num("init_opacity", init_opacity);
        num("init_scale_multiplier", init_scale_multiplier);
        out << "init_neighbors = " << init_neighbors << "\n";
        out << "random_count = " << random_count << "\n";
        vec("random_box_min", random_box_min);
        vec("random_box_max", random_box_max);
        return out.str();
    }
};

namespace detail {

inline Gaussian3D gaussian_from_section(const ConfigSection& s, bool allow_motion_keys) {
    if (allow_motion_keys)
        // No 'center' here: a distractor's position comes from its trajectory.
        s.expect_keys({"log_scale", "rotation", "opacity", "opacity_logit", "color", "waypoints",
                       "start", "end", "hold_from"});
    else
        s.expect_keys({"center", "log_scale", "rotation", "opacity", "opacity_logit", "color"});

    Gaussian3D g;
    if (!allow_motion_keys) g.center = s.get_vec3("center");
    if (s.has("log_scale")) {
        std::vector<double> v = s.get_doubles("log_scale");
        if (v.size() == 1)
            g.log_scale = Vec3::Constant(v[0]);
        else if (v.size() == 3)
            g.log_scale = Vec3(v[0], v[1], v[2]);
        else
            throw std::runtime_error(s.where() + ": key 'log_scale' expects 1 or 3 numbers, got " +
                                     std::to_string(v.size()));
    }
    Vec4 q = s.get_vec4("rotation", Vec4(1, 0, 0, 0));
    double n = q.norm();
    if (!(n > 1e-12))
        throw std::runtime_error(s.where() + ": key 'rotation' is a degenerate quaternion");
    g.rotation = q / n;
    if (s.has("opacity") && s.has("opacity_logit"))
        throw std::runtime_error(s.where() + ": give either 'opacity' or 'opacity_logit', not both");
    if (s.has("opacity")) {
        double a = s.get_double("opacity");
        if (!(a > 0.0 && a < 1.0))
            throw std::runtime_error(s.where() + ": key 'opacity' must lie in (0, 1)");
        g.opacity_logit = inverse_sigmoid(a);
    } else if (s.has("opacity_logit")) {
        g.opacity_logit = s.get_double("opacity_logit");
    }
    g.color = s.get_vec3("color", Vec3::Constant(0.5));
    return g;
}

inline std::vector<Vec3> waypoints_from_section(const ConfigSection& s, int n_frames) {
    const bool explicit_path = s.has("waypoints");
    const bool endpoints = s.has("start") || s.has("end");
    if (explicit_path && endpoints)
        throw std::runtime_error(s.where() + ": give either 'waypoints' or 'start'/'end', not both");
    if (!explicit_path && !endpoints)
        throw std::runtime_error(s.where() + ": needs 'waypoints' or 'start' and 'end'");

    std::vector<Vec3> path;
    path.reserve(n_frames);
    if (explicit_path) {
        std::vector<double> v = s.get_doubles("waypoints");
        if (static_cast<int>(v.size()) != 3 * n_frames)
            throw std::runtime_error(s.where() + ": key 'waypoints' expects " +
                                     std::to_string(3 * n_frames) + " numbers for " +
                                     std::to_string(n_frames) + " frames, got " +
                                     std::to_string(v.size()));
        for (int i = 0; i < n_frames; ++i)
            path.emplace_back(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
        return path;
    }

    Vec3 start = s.get_vec3("start");
    Vec3 end = s.get_vec3("end");
    // The trajectory reaches `end` at frame `hold_from` and parks there for the
    // remaining frames; by default motion spans the whole clip.
    int hold = s.get_int("hold_from", n_frames - 1);
    if (n_frames > 1 && hold < 1)
        throw std::runtime_error(s.where() + ": key 'hold_from' must be at least 1");
    for (int i = 0; i < n_frames; ++i) {
        double t = n_frames == 1 ? 0.0
                                 : static_cast<double>(std::min(i, hold)) / std::max(hold, 1);
        path.push_back(start + (end - start) * t);
    }
    return path;
}

}  // namespace detail

// Builds a synthetic scene description from a config file: camera keys in the
// global block, one [static] section per fixed blob, one [distractor] section
// per moving blob.
inline SyntheticSceneSpec scene_spec_from_config(const ConfigFile& cf) {
    const ConfigSection& g = cf.global;
    g.expect_keys({"n_frames", "image_size", "pixels_per_unit", "background", "seed",
                   "camera_translation", "camera_drift", "camera_quat"});
    SyntheticSceneSpec spec;
    spec.n_frames = g.get_int("n_frames");
    int image_size = g.get_int("image_size", 64);
    double ppu = g.get_double("pixels_per_unit", 8.0);
    spec.background = g.get_vec3("background", Vec3::Zero());
    spec.rng_seed = g.get_uint64("seed", 1);
    Vec3 cam_t = g.get_vec3("camera_translation", Vec3(0, 0, 5));
    Vec3 drift = g.get_vec3("camera_drift", Vec3::Zero());
    Vec4 quat = g.get_vec4("camera_quat", Vec4(1, 0, 0, 0));
    double qn = quat.norm();
    if (!(qn > 1e-12)) throw std::runtime_error("config: 'camera_quat' is a degenerate quaternion");
    quat /= qn;

    if (spec.n_frames <= 0) throw std::runtime_error("config: 'n_frames' must be positive");
    spec.cameras.reserve(spec.n_frames);
    for (int i = 0; i < spec.n_frames; ++i) {
        OrthoCamera cam;
        cam.rotation = rotation_from_quat(quat);
        cam.translation = cam_t + i * drift;
        cam.pixels_per_unit = ppu;
        cam.width = image_size;
        cam.height = image_size;
        spec.cameras.push_back(cam);
    }

    for (const ConfigSection& s : cf.sections) {
        if (s.name == "static") {
            spec.statics.push_back(detail::gaussian_from_section(s, false));
        } else if (s.name == "distractor") {
            DistractorScript d;
            d.shape = detail::gaussian_from_section(s, true);
            d.waypoints = detail::waypoints_from_section(s, spec.n_frames);
            d.shape.center = d.waypoints.front();
            spec.distractors.push_back(std::move(d));
        } else {
            throw std::runtime_error("config: unknown section [" + s.name + "]");
        }
    }
    spec.validate();
    return spec;
}

}  // namespace splatwild
