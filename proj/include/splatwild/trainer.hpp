#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "splatwild/backward.hpp"
#include "splatwild/camera.hpp"
#include "splatwild/loss.hpp"
#include "splatwild/renderer.hpp"
#include "splatwild/voxelguide.hpp"

namespace splatwild {

struct TrainConfig {
    int iterations = 2000;
    double lr_center = 2e-3;
    double lr_log_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_opacity = 5e-2;
    double lr_color = 1e-2;
    double loss_lambda = kDefaultLossLambda;  // DSSIM share of the reported loss
    Vec3 background = Vec3::Zero();

    void validate() const {
        if (iterations < 0) throw std::invalid_argument("train config: negative iteration count");
        for (double lr : {lr_center, lr_log_scale, lr_rotation, lr_opacity, lr_color})
            if (!(lr >= 0.0)) throw std::invalid_argument("train config: step sizes must be nonnegative");
        if (loss_lambda < 0.0 || loss_lambda > 1.0)
            throw std::invalid_argument("train config: loss_lambda outside [0,1]");
        if (!background.allFinite()) throw std::invalid_argument("train config: non-finite background");
    }
};

// Adaptive-moment optimizer over the five parameter groups. Updates are plain
// scalar arithmetic, slot by slot, so a reference loop reproduces them
// bitwise; at this scene scale that costs nothing.
struct Adam {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-15;

    SceneGrads m, v;
    int t = 0;

    explicit Adam(size_t n = 0) : m(n), v(n) {}

    // Keeps the moment rows aligned with the scene after a guide cadence:
    // fresh Gaussians start with zero moments, removed rows disappear.
    void mirror_edits(const GuideEdits& edits) {
        const Vec3 zero3 = Vec3::Zero();
        const Vec4 zero4 = Vec4::Zero();
        for (SceneGrads* s : {&m, &v}) {
            apply_guide_edits(s->center, edits, zero3);
            apply_guide_edits(s->log_scale, edits, zero3);
            apply_guide_edits(s->rotation, edits, zero4);
            apply_guide_edits(s->opacity_logit, edits, 0.0);
            apply_guide_edits(s->color, edits, zero3);
        }
    }

    void step(std::vector<Gaussian3D>& gs, const SceneGrads& grads, const TrainConfig& cfg) {
        if (gs.size() != grads.size() || gs.size() != m.size())
            throw std::invalid_argument("adam: parameter, gradient, and moment sizes disagree");
        ++t;
        double c1 = 1.0 - std::pow(kBeta1, t);
        double c2 = 1.0 - std::pow(kBeta2, t);
        auto update = [&](double& theta, double& mi, double& vi, double g, double lr) {
            mi = kBeta1 * mi + (1.0 - kBeta1) * g;
            vi = kBeta2 * vi + (1.0 - kBeta2) * g * g;
            theta -= lr * (mi / c1) / (std::sqrt(vi / c2) + kEpsilon);
        };
        for (size_t i = 0; i < gs.size(); ++i) {
            Gaussian3D& g = gs[i];
            for (int k = 0; k < 3; ++k) {
                update(g.center[k], m.center[i][k], v.center[i][k], grads.center[i][k], cfg.lr_center);
                update(g.log_scale[k], m.log_scale[i][k], v.log_scale[i][k], grads.log_scale[i][k],
                       cfg.lr_log_scale);
                update(g.color[k], m.color[i][k], v.color[i][k], grads.color[i][k], cfg.lr_color);
            }
            for (int k = 0; k < 4; ++k)
                update(g.rotation[k], m.rotation[i][k], v.rotation[i][k], grads.rotation[i][k],
                       cfg.lr_rotation);
            update(g.opacity_logit, m.opacity_logit[i], v.opacity_logit[i], grads.opacity_logit[i],
                   cfg.lr_opacity);
        }
    }
};

// Post-step projection back onto the parameter manifold: rotations stay unit
// quaternions, colors stay displayable.
inline void clamp_parameters(std::vector<Gaussian3D>& gs) {
    for (Gaussian3D& g : gs) {
        double n = g.rotation.norm();
        if (!(n > 0.0) || !std::isfinite(n)) throw std::runtime_error("train: degenerate quaternion");
        g.rotation /= n;
        for (int k = 0; k < 3; ++k) g.color[k] = std::clamp(g.color[k], 0.0, 1.0);
    }
}

struct TrainLogRow {
    int iteration = 0;
    double l1 = 0.0;
    double dssim = 0.0;
    int n_gaussians = 0;       // count after any cadence edit this iteration
    double masked_fraction = 0.0;  // share of pixels excluded from the loss
};

inline void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log) {
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "iteration,l1,dssim,n_gaussians,masked_fraction\n");
    for (const TrainLogRow& r : log)
        std::fprintf(f, "%d,%.17g,%.17g,%d,%.17g\n", r.iteration, r.l1, r.dssim, r.n_gaussians,
                     r.masked_fraction);
    std::fclose(f);
}

// Supplies the keep mask for one training view; 1 supervises a pixel, 0
// excludes it. frame_pos is the frame's position in the training list (what
// per-frame state should key on), frame.index its external id.
using MaskProvider = std::function<Mask(int iter, int frame_pos, const Frame& frame, const Image3& render)>;

struct TrainResult {
    std::vector<Gaussian3D> gaussians;
    std::vector<TrainLogRow> log;
    std::vector<Mask> last_masks;  // most recent keep mask per frame position
};

// Optimizes the scene against the frames, round-robin. The guide, when
// present, damps runaway gradients each iteration and restructures the scene
// every densify_interval iterations; the optimizer moments mirror those edits.
inline TrainResult train(std::vector<Gaussian3D> init, const std::vector<Frame>& frames,
                         const TrainConfig& cfg, MaskProvider mask_provider = nullptr,
                         VoxelGuide* guide = nullptr) {
    cfg.validate();
    if (frames.empty()) throw std::invalid_argument("train: need at least one frame");
    for (const Frame& f : frames) {
        f.camera.validate();
        if (f.image.height != f.camera.height || f.image.width != f.camera.width)
            throw std::invalid_argument("train: frame image does not match its camera size");
    }

    TrainResult out;
    out.gaussians = std::move(init);
    out.last_masks.resize(frames.size());
    Adam opt(out.gaussians.size());

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        int pos = iter % static_cast<int>(frames.size());
        const Frame& frame = frames[pos];

        std::vector<Splat2D> splats = project(out.gaussians, frame.camera);
        RenderOutput fwd = render(splats, frame.camera.width, frame.camera.height, cfg.background, true);

        Mask keep = mask_provider ? mask_provider(iter, pos, frame, fwd.image)
                                  : Mask(frame.camera.height, frame.camera.width, 1);

        LossBreakdown loss;
        try {
            loss = masked_loss(fwd.image, frame.image, keep, cfg.loss_lambda);
        } catch (const std::exception& e) {
            throw std::runtime_error("train: aborted at iteration " + std::to_string(iter) + " on frame " +
                                     std::to_string(frame.index) + ": " + e.what());
        }

        SceneGrads grads =
            backward_masked_l1(out.gaussians, frame.camera, splats, fwd, frame.image, keep, cfg.background);
        if (guide) guide->apply(out.gaussians, grads);
        opt.step(out.gaussians, grads, cfg);
        clamp_parameters(out.gaussians);

        TrainLogRow row;
        row.iteration = iter;
        row.l1 = loss.l1;
        row.dssim = loss.dssim;
        size_t excluded = 0;
        for (uint8_t k : keep.data) excluded += k ? 0 : 1;
        row.masked_fraction = static_cast<double>(excluded) / static_cast<double>(keep.data.size());
        out.last_masks[pos] = std::move(keep);

        if (guide && (iter + 1) % guide->config().densify_interval == 0)
            opt.mirror_edits(guide->run_cadence(out.gaussians));

        row.n_gaussians = static_cast<int>(out.gaussians.size());
        out.log.push_back(row);
    }
    return out;
}

}  // namespace splatwild
