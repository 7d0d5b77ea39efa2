#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "splatwild/voxelguide.hpp"

using namespace splatwild;

namespace {

// 4x4x4 unit-length grid over [0,4]^3.
SampleGrid unit_grid() {
    return build_grid({Vec3(0, 0, 0), Vec3(4, 4, 4)}, 4);
}

Gaussian3D at(const Vec3& center, double opacity = 0.5, double scale = 0.1) {
    Gaussian3D g;
    g.center = center;
    g.log_scale = Vec3::Constant(std::log(scale));
    g.opacity_logit = inverse_sigmoid(opacity);
    g.color = Vec3(0.5, 0.5, 0.5);
    return g;
}

}  // namespace

TEST_CASE("constraint check: center and scale clauses") {
    GuideConfig cfg;
    Vec3 vc(0.5, 0.5, 0.5);
    double L = 1.0;

    Gaussian3D g = at(vc);
    REQUIRE_FALSE(check_constraint(g, vc, L, cfg));  // at home, small

    g.center = vc + Vec3(3.51, 0, 0);  // just over tau = 3.5
    REQUIRE(check_constraint(g, vc, L, cfg));
    g.center = vc + Vec3(3.49, 0, 0);
    REQUIRE_FALSE(check_constraint(g, vc, L, cfg));

    g = at(vc);
    g.log_scale = Vec3(std::log(3.6), std::log(0.1), std::log(0.1));  // one axis over
    REQUIRE(check_constraint(g, vc, L, cfg));

    // Half-length datum variant relaxes the center clause by L/2.
    GuideConfig half = cfg;
    half.half_length_datum = true;
    g = at(vc);
    g.center = vc + Vec3(3.9, 0, 0);  // 3.9 - 0.5 = 3.4 < 3.5
    REQUIRE(check_constraint(g, vc, L, cfg));
    REQUIRE_FALSE(check_constraint(g, vc, L, half));
}

TEST_CASE("gradient decay multiplier") {
    GuideConfig cfg;
    double L = 2.0;
    REQUIRE(decay_multiplier(cfg.tau * L, L, cfg) == 1.0);                      // boundary
    REQUIRE(decay_multiplier((cfg.tau + 1.0) * L, L, cfg) ==
            Catch::Approx(std::exp(-1.0)).margin(1e-15));                       // one length beyond
    REQUIRE(decay_multiplier(0.0, L, cfg) == 1.0);                              // inside: clamped
    double prev = 1.0;
    for (double d = cfg.tau * L + 0.1; d < cfg.tau * L + 5.0; d += 0.1) {
        double m = decay_multiplier(d, L, cfg);
        REQUIRE(m < prev);
        REQUIRE(m > 0.0);
        prev = m;
    }
}

TEST_CASE("initial assignment: membership matches containment, strays clamp") {
    VoxelGuide guide(unit_grid(), GuideConfig{});
    std::vector<Gaussian3D> gs = {
        at(Vec3(0.2, 0.3, 0.4)),   // voxel (0,0,0)
        at(Vec3(0.6, 0.2, 0.1)),   // voxel (0,0,0)
        at(Vec3(2.5, 3.5, 1.5)),   // voxel (2,3,1)
        at(Vec3(9.0, -1.0, 2.0)),  // outside: clamps to (3,0,2)
    };
    REQUIRE(guide.assign_initial(gs) == 1);
    REQUIRE(gs[0].voxel_id == gs[1].voxel_id);
    REQUIRE(guide.voxels().at(gs[0].voxel_id).members == std::vector<int>{0, 1});
    REQUIRE(guide.voxels().at(gs[2].voxel_id).index == Eigen::Vector3i(2, 3, 1));
    REQUIRE(guide.voxels().at(gs[3].voxel_id).index == Eigen::Vector3i(3, 0, 2));
    REQUIRE(guide.violations(gs).empty());
}

TEST_CASE("apply: constrained gradients pass through bitwise, runaways decay") {
    VoxelGuide guide(unit_grid(), GuideConfig{});
    std::vector<Gaussian3D> gs = {at(Vec3(0.5, 0.5, 0.5)), at(Vec3(1.5, 0.5, 0.5))};
    guide.assign_initial(gs);
    gs[1].center = Vec3(1.5 + 4.0, 0.5, 0.5);  // drifted 4 lengths from home

    SceneGrads grads(2);
    grads.center = {Vec3(0.125, -0.25, 0.0625), Vec3(0.5, 0.0, 0.0)};
    grads.log_scale = {Vec3(0.03125, 0, 0), Vec3(1.0, 2.0, 3.0)};
    grads.opacity_logit = {0.375, -0.75};
    grads.color = {Vec3(0.1, 0.2, 0.3), Vec3(0.4, 0.5, 0.6)};
    SceneGrads before = grads;

    guide.apply(gs, grads);
    REQUIRE_FALSE(gs[0].unconstrained);
    REQUIRE(gs[1].unconstrained);

    REQUIRE(grads.center[0] == before.center[0]);
    REQUIRE(grads.log_scale[0] == before.log_scale[0]);
    REQUIRE(grads.opacity_logit[0] == before.opacity_logit[0]);
    REQUIRE(grads.color[0] == before.color[0]);

    double mult = std::exp(-0.5);  // distance 4, tau 3.5, beta 1, L 1
    REQUIRE(grads.center[1] == Vec3(before.center[1] * mult));
    REQUIRE(grads.opacity_logit[1] == before.opacity_logit[1] * mult);
    REQUIRE(grads.center[1].norm() <= before.center[1].norm());

    // Accumulators hold post-decay values.
    REQUIRE(gs[0].grad_accum == before.center[0].norm());
    REQUIRE(gs[1].grad_accum == Catch::Approx(0.5 * mult).margin(1e-15));
    REQUIRE(guide.steps_since_cadence() == 1);
}

TEST_CASE("first crossed voxel along a ray") {
    VoxelGuide guide(unit_grid(), GuideConfig{});
    Eigen::Vector3i hit;

    REQUIRE(guide.first_crossed_voxel(Vec3(0.5, 0.5, 0.5), Vec3(1, 0, 0), &hit));
    REQUIRE(hit == Eigen::Vector3i(1, 0, 0));

    REQUIRE(guide.first_crossed_voxel(Vec3(0.5, 0.5, 0.5), Vec3(0, -0.2, 0.9), &hit));
    REQUIRE(hit == Eigen::Vector3i(0, 0, 1));  // z boundary reached first

    // Leaving the grid or a degenerate direction yields nothing.
    REQUIRE_FALSE(guide.first_crossed_voxel(Vec3(0.5, 0.5, 0.5), Vec3(-1, 0, 0), &hit));
    REQUIRE_FALSE(guide.first_crossed_voxel(Vec3(0.5, 0.5, 0.5), Vec3::Zero(), &hit));

    // From outside the box the entry voxel counts as the first crossing.
    REQUIRE(guide.first_crossed_voxel(Vec3(4.2, 0.5, 0.5), Vec3(-1, 0, 0), &hit));
    REQUIRE(hit == Eigen::Vector3i(3, 0, 0));
}

TEST_CASE("densify: runaway clone lands in the empty neighbor") {
    GuideConfig cfg;
    VoxelGuide guide(unit_grid(), cfg);
    std::vector<Gaussian3D> gs = {at(Vec3(0.6, 0.5, 0.5)), at(Vec3(0.4, 0.5, 0.5))};
    guide.assign_initial(gs);
    int64_t home = gs[0].voxel_id;

    // Gaussian 0 drifts far along +x; the optimizer keeps pulling it back
    // toward -x (positive x-gradient means descent along -x).
    gs[0].center = Vec3(4.2, 0.5, 0.5);
    SceneGrads grads(2);
    grads.center[0] = Vec3(0.005, 0, 0);
    guide.apply(gs, grads);
    double mean = gs[0].grad_accum;  // one step, so the mean equals the accumulator
    REQUIRE(mean >= cfg.densify_grad_threshold);

    GuideEdits edits = guide.run_cadence(gs);
    REQUIRE(edits.removed.empty());  // clone keeps the parent
    REQUIRE(edits.appended == 1);
    REQUIRE(gs.size() == 3);

    // The child sits one voxel length along the pull direction, inside the
    // previously empty voxel (3,0,0), which is now alive.
    REQUIRE((gs[2].center - Vec3(3.2, 0.5, 0.5)).norm() < 1e-12);
    const auto& target = guide.voxels().at(gs[2].voxel_id);
    REQUIRE(target.index == Eigen::Vector3i(3, 0, 0));
    REQUIRE(target.alive());
    REQUIRE(target.members == std::vector<int>{2});
    REQUIRE(gs[2].grad_accum == 0.0);
    REQUIRE(gs[0].grad_accum == 0.0);  // cadence resets accumulators
    REQUIRE(gs[0].voxel_id == home);   // membership is sticky
    REQUIRE(guide.violations(gs).empty());
    REQUIRE(guide.prune_violations(gs).empty());  // fresh singleton is exempt

    // With no further pull, the next cadence prunes the singleton voxel.
    GuideEdits second = guide.run_cadence(gs);
    REQUIRE(second.removed == std::vector<int>{2});
    REQUIRE(gs.size() == 2);
    REQUIRE_FALSE(guide.voxels().at(guide.geometry().linear_index({3, 0, 0})).alive());
    REQUIRE(guide.violations(gs).empty());
}

TEST_CASE("densify: below threshold or into an occupied voxel does nothing") {
    GuideConfig cfg;
    VoxelGuide guide(unit_grid(), cfg);
    std::vector<Gaussian3D> gs = {at(Vec3(0.6, 0.5, 0.5)), at(Vec3(0.4, 0.5, 0.5)),
                                  at(Vec3(3.4, 0.5, 0.5)), at(Vec3(3.6, 0.5, 0.5))};
    guide.assign_initial(gs);

    SECTION("weak accumulated gradient") {
        gs[0].center = Vec3(4.2, 0.5, 0.5);
        SceneGrads grads(4);
        grads.center[0] = Vec3(0.002, 0, 0);  // below 0.003 even before decay
        guide.apply(gs, grads);
        GuideEdits edits = guide.run_cadence(gs);
        REQUIRE(edits.empty());
        REQUIRE(gs.size() == 4);
    }

    SECTION("pull direction enters an occupied voxel") {
        gs[0].center = Vec3(4.2, 0.5, 0.5);
        SceneGrads grads(4);
        grads.center[0] = Vec3(0.05, 0, 0);  // strong pull toward -x, but (3,0,0) is occupied
        guide.apply(gs, grads);
        GuideEdits edits = guide.run_cadence(gs);
        REQUIRE(edits.empty());
        REQUIRE(gs.size() == 4);
    }

    SECTION("constrained gaussians never densify") {
        SceneGrads grads(4);
        grads.center[1] = Vec3(0.5, 0, 0);
        guide.apply(gs, grads);
        REQUIRE_FALSE(gs[1].unconstrained);
        GuideEdits edits = guide.run_cadence(gs);
        REQUIRE(edits.empty());
    }
}

TEST_CASE("densify: oversized runaway splits along its principal axis") {
    GuideConfig cfg;
    VoxelGuide guide(unit_grid(), cfg);
    std::vector<Gaussian3D> gs = {at(Vec3(1.5, 1.5, 1.5)), at(Vec3(1.6, 1.5, 1.5))};
    guide.assign_initial(gs);
    int64_t home = gs[0].voxel_id;

    // Scale clause flags it (4 > tau = 3.5) while the center stays home.
    gs[0].log_scale = Vec3(std::log(4.0), std::log(0.1), std::log(0.1));
    SceneGrads grads(2);
    grads.center[0] = Vec3(0.01, 0, 0);  // pull toward -x; (0,1,1) is empty
    guide.apply(gs, grads);

    GuideEdits edits = guide.run_cadence(gs);
    REQUIRE(edits.removed == std::vector<int>{0});  // split removes the parent
    REQUIRE(edits.appended == 2);
    REQUIRE(gs.size() == 3);  // companion + two children

    // Children at +-0.8 sigma along x with all scales divided by 1.6.
    std::vector<double> xs = {gs[1].center.x(), gs[2].center.x()};
    std::sort(xs.begin(), xs.end());
    REQUIRE(xs[0] == Catch::Approx(1.5 - 3.2).margin(1e-12));
    REQUIRE(xs[1] == Catch::Approx(1.5 + 3.2).margin(1e-12));
    for (int i : {1, 2}) {
        REQUIRE(gs[i].log_scale.x() == Catch::Approx(std::log(4.0 / 1.6)).margin(1e-12));
        REQUIRE(gs[i].log_scale.y() == Catch::Approx(std::log(0.1 / 1.6)).margin(1e-12));
    }
    // The -x child lands outside the AABB and clamps into (0,1,1), the target.
    REQUIRE(guide.voxels().at(guide.geometry().linear_index({0, 1, 1})).alive());
    REQUIRE(guide.violations(gs).empty());
    // The companion keeps the home voxel alive even though the parent left.
    REQUIRE(guide.voxels().at(home).members == std::vector<int>{0});
}

TEST_CASE("prune: small or faint voxels are emptied") {
    GuideConfig cfg;
    VoxelGuide guide(unit_grid(), cfg);
    std::vector<Gaussian3D> gs = {
        at(Vec3(0.5, 0.5, 0.5)),                  // singleton voxel: pruned (1 < gamma2 = 2)
        at(Vec3(1.5, 0.5, 0.5), 0.05),            // faint pair: mean 0.05 < 0.075
        at(Vec3(1.6, 0.5, 0.5), 0.05),
        at(Vec3(2.5, 0.5, 0.5), 0.5),             // healthy trio: kept
        at(Vec3(2.6, 0.5, 0.5), 0.5),
        at(Vec3(2.4, 0.5, 0.5), 0.5),
    };
    guide.assign_initial(gs);
    int64_t healthy = gs[3].voxel_id;

    GuideEdits edits = guide.run_cadence(gs);
    REQUIRE(edits.removed == std::vector<int>{0, 1, 2});
    REQUIRE(edits.appended == 0);
    REQUIRE(gs.size() == 3);
    REQUIRE(guide.voxels().at(healthy).members == std::vector<int>{0, 1, 2});
    REQUIRE(guide.violations(gs).empty());
    REQUIRE(guide.prune_violations(gs).empty());

    // Pruning is monotone: rerunning removes nothing further here.
    REQUIRE(guide.run_cadence(gs).empty());
    REQUIRE(gs.size() == 3);

    // Mean opacity at the threshold survives (strict <), as does a member
    // count equal to gamma2. The nudge keeps the logit round-trip above it.
    std::vector<Gaussian3D> edge = {at(Vec3(0.5, 0.5, 0.5), cfg.min_voxel_opacity + 1e-9),
                                    at(Vec3(0.6, 0.5, 0.5), cfg.min_voxel_opacity + 1e-9)};
    VoxelGuide guide2(unit_grid(), cfg);
    guide2.assign_initial(edge);
    REQUIRE(edge[0].opacity() >= cfg.min_voxel_opacity);
    REQUIRE(guide2.run_cadence(edge).empty());
}

TEST_CASE("edit mirroring keeps a parallel array in lockstep") {
    GuideConfig cfg;
    VoxelGuide guide(unit_grid(), cfg);
    std::vector<Gaussian3D> gs = {at(Vec3(1.5, 1.5, 1.5)), at(Vec3(1.6, 1.5, 1.5)),
                                  at(Vec3(0.5, 0.5, 0.5))};
    guide.assign_initial(gs);
    // Index 2 is a prune victim (singleton voxel); index 0 splits.
    gs[0].log_scale = Vec3(std::log(4.0), std::log(0.1), std::log(0.1));
    SceneGrads grads(3);
    grads.center[0] = Vec3(0.01, 0, 0);
    guide.apply(gs, grads);

    std::vector<std::string> tags = {"split-parent", "companion", "prune-victim"};
    GuideEdits edits = guide.run_cadence(gs);
    apply_guide_edits(tags, edits, std::string("child"));

    REQUIRE(gs.size() == tags.size());
    REQUIRE(tags == std::vector<std::string>{"companion", "child", "child"});
    REQUIRE(guide.violations(gs).empty());
}

TEST_CASE("membership and flags stay consistent under random churn") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> pos(0.0, 4.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    GuideConfig cfg;
    VoxelGuide guide(unit_grid(), cfg);

    std::vector<Gaussian3D> gs;
    for (int i = 0; i < 60; ++i) gs.push_back(at(Vec3(pos(rng), pos(rng), pos(rng))));
    guide.assign_initial(gs);
    REQUIRE(guide.violations(gs).empty());

    for (int cadence = 0; cadence < 8; ++cadence) {
        for (int step = 0; step < 5; ++step) {
            SceneGrads grads(gs.size());
            for (size_t i = 0; i < gs.size(); ++i) {
                grads.center[i] = 0.01 * Vec3(unit(rng), unit(rng), unit(rng));
                gs[i].center += 0.3 * Vec3(unit(rng), unit(rng), unit(rng));
            }
            guide.apply(gs, grads);
            REQUIRE(guide.violations(gs).empty());
        }
        size_t before = gs.size();
        GuideEdits edits = guide.run_cadence(gs);
        REQUIRE(gs.size() == before + edits.appended - edits.removed.size());
        REQUIRE(guide.violations(gs).empty());
        REQUIRE(guide.prune_violations(gs).empty());
        REQUIRE(std::is_sorted(edits.removed.begin(), edits.removed.end()));
        if (gs.empty()) break;
    }
}
