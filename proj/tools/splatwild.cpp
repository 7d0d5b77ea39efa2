#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "splatwild/alignsched.hpp"
#include "splatwild/config.hpp"
#include "splatwild/gaussian_io.hpp"
#include "splatwild/init.hpp"
#include "splatwild/masking.hpp"
#include "splatwild/metrics.hpp"
#include "splatwild/png_io.hpp"
#include "splatwild/pointcloud.hpp"
#include "splatwild/renderer.hpp"
#include "splatwild/scene.hpp"
#include "splatwild/trainer.hpp"
#include "splatwild/voxelguide.hpp"

namespace fs = std::filesystem;
using namespace splatwild;

namespace {

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return RunConfig::from_config(parse_config_file(path));
}

void print_resolved(const RunConfig& rc) {
    std::cout << "resolved configuration:\n" << rc.describe() << std::flush;
}

std::string frame_png(const std::string& stem, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%04d.png", index);
    return stem + buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << text;
    if (!out) throw std::runtime_error(path + ": write failed");
}

void run_synth(const std::string& config_path, const std::string& out_dir) {
    SyntheticSceneSpec spec = scene_spec_from_config(parse_config_file(config_path));
    std::cout << "scene: " << spec.n_frames << " frames, " << spec.statics.size()
              << " static blobs, " << spec.distractors.size() << " distractors\n"
              << "seed = " << spec.rng_seed << "\n";
    SyntheticSequence seq = generate_synthetic_sequence(spec);
    fs::create_directories(out_dir);
    write_scene_dir(out_dir, seq);
    std::cout << "wrote scene to " << out_dir << "\n";
}

void run_sample_points(const std::string& input, const std::string& output, int n, int k,
                       int neighbors) {
    std::cout << "sample-points: n = " << n << ", k = " << k << ", neighbors = " << neighbors
              << "\n";
    PointCloud cloud = read_point_cloud(input);
    if (cloud.positions.size() < 2)
        throw std::runtime_error(input + ": need at least 2 points to sample");

    std::vector<Vec3> normals = cloud.normals.size() == cloud.positions.size()
                                    ? cloud.normals
                                    : estimate_normals(cloud.positions, neighbors);
    std::vector<Descriptor> descs = fpfh_descriptors(cloud.positions, normals, neighbors);
    std::vector<double> scores = score_points(descs, cloud.confidence);
    SampleGrid grid = build_grid(cloud.positions, n);
    std::vector<int> kept = sample_top_k(cloud.positions, scores, grid, k);

    PointCloud out;
    out.positions.reserve(kept.size());
    out.confidence.reserve(kept.size());
    for (int i : kept) {
        out.positions.push_back(cloud.positions[i]);
        out.confidence.push_back(cloud.confidence[i]);
        if (!cloud.colors.empty()) out.colors.push_back(cloud.colors[i]);
        if (!cloud.normals.empty()) out.normals.push_back(cloud.normals[i]);
        if (!cloud.source_frames.empty()) out.source_frames.push_back(cloud.source_frames[i]);
    }
    write_point_cloud(output, out);
    std::cout << "kept " << kept.size() << " of " << cloud.positions.size() << " points -> "
              << output << "\n";
}

void run_train(const std::string& config_path, const std::string& scene_dir,
               const std::string& out_dir, const std::string& init_ply, bool no_mask,
               bool no_guide, bool dump_guide) {
    RunConfig rc = load_run_config(config_path);
    print_resolved(rc);

    SyntheticSequence seq = load_scene_dir(scene_dir);
    if (seq.frames.empty()) throw std::runtime_error(scene_dir + ": no frames");
    const OrthoCamera& cam0 = seq.frames.front().camera;
    std::cout << "scene: " << seq.frames.size() << " frames, " << cam0.width << "x" << cam0.height
              << "\n";

    std::vector<Gaussian3D> gaussians =
        init_ply.empty()
            ? random_init(rc.random_count, rc.random_box_min, rc.random_box_max, rc.seed,
                          rc.init_opacity)
            : read_gaussians_ply(init_ply);
    if (gaussians.empty()) throw std::runtime_error(init_ply + ": no gaussians");
    std::cout << "initialized " << gaussians.size() << " gaussians"
              << (init_ply.empty() ? " (random)" : " from " + init_ply) << "\n";

    std::optional<VoxelGuide> guide;
    if (!no_guide) {
        std::vector<Vec3> centers;
        centers.reserve(gaussians.size());
        for (const Gaussian3D& g : gaussians) centers.push_back(g.center);
        guide.emplace(build_grid(centers, rc.guide_n_short), rc.guide_config());
        int clamped = guide->assign_initial(gaussians);
        if (clamped > 0) std::cout << "guide: clamped " << clamped << " seeds into the grid\n";
    }

    std::optional<AdaptiveMasker> masker;
    MaskProvider provider;
    if (!no_mask) {
        for (const Frame& f : seq.frames)
            if (f.seg.height != cam0.height || f.seg.width != cam0.width)
                throw std::runtime_error(scene_dir + ": frame " + std::to_string(f.index) +
                                         " has no segmentation; rerun with --no-mask");
        masker.emplace(rc.masking_config(), seq.tracks, static_cast<int>(seq.frames.size()),
                       cam0.height, cam0.width);
        provider = [&](int iter, int frame_pos, const Frame& frame, const Image3& render) {
            return masker->step(iter, frame_pos, render, frame.image, frame.seg);
        };
    }

    TrainResult result = train(std::move(gaussians), seq.frames, rc.train_config(), provider,
                               guide ? &*guide : nullptr);

    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "masks");
    write_train_log((fs::path(out_dir) / "log.csv").string(), result.log);
    write_gaussians_ply((fs::path(out_dir) / "final.ply").string(), result.gaussians);
    for (size_t p = 0; p < result.last_masks.size(); ++p) {
        const Mask& m = result.last_masks[p];
        if (m.height == 0) continue;  // frame never visited
        write_png_mask(
            (fs::path(out_dir) / "masks" / frame_png("mask", seq.frames[p].index)).string(), m);
    }
    if (dump_guide) {
        if (!guide) throw std::runtime_error("--dump-guide needs the guide; drop --no-guide");
        write_text_file((fs::path(out_dir) / "guide.txt").string(),
                        guide->snapshot(result.gaussians));
    }

    if (!result.log.empty()) {
        const TrainLogRow& last = result.log.back();
        std::cout << "final: iteration " << last.iteration << ", l1 " << last.l1 << ", "
                  << last.n_gaussians << " gaussians\n";
    }
    std::cout << "wrote " << out_dir << "/log.csv, final.ply, masks/\n";
}

void run_mask_debug(const std::string& config_path, const std::string& scene_dir,
                    const std::string& ply_path, int iter_flag, const std::string& out_dir) {
    RunConfig rc = load_run_config(config_path);
    print_resolved(rc);
    int iter = iter_flag >= 0 ? iter_flag : rc.activation_iter;
    std::cout << "probing masks as of iteration " << iter << "\n";

    SyntheticSequence seq = load_scene_dir(scene_dir);
    if (seq.frames.empty()) throw std::runtime_error(scene_dir + ": no frames");
    std::vector<Gaussian3D> gaussians = read_gaussians_ply(ply_path);
    const OrthoCamera& cam0 = seq.frames.front().camera;
    for (const Frame& f : seq.frames)
        if (f.seg.height != cam0.height || f.seg.width != cam0.width)
            throw std::runtime_error(scene_dir + ": frame " + std::to_string(f.index) +
                                     " has no segmentation");

    AdaptiveMasker masker(rc.masking_config(), seq.tracks, static_cast<int>(seq.frames.size()),
                          cam0.height, cam0.width);
    fs::create_directories(out_dir);
    for (size_t p = 0; p < seq.frames.size(); ++p) {
        const Frame& f = seq.frames[p];
        RenderOutput ro = render_scene(gaussians, f.camera, rc.background);
        MaskDebugRecord dbg;
        masker.step(iter, static_cast<int>(p), ro.image, f.image, f.seg, &dbg);

        std::ostringstream report;
        report << "frame " << f.index << "\n";
        report << "iteration " << iter << "\n";
        report << "active " << (dbg.active ? 1 : 0) << "\n";
        report << "expectation " << dbg.stats.expectation << "\n";
        report << "variance " << dbg.stats.variance << "\n";
        report << "t_local " << dbg.t_local << "\n";
        report << "t_global " << dbg.t_global << "\n";
        report << "masked_fraction " << dbg.masked_fraction << "\n";
        for (const ObjectResidual& row : dbg.table)
            report << "object id=" << row.id << " mean=" << row.mean << " area=" << row.area
                   << "\n";
        auto id_line = [&](const char* label, const std::vector<uint32_t>& ids) {
            report << label;
            for (uint32_t id : ids) report << ' ' << id;
            report << "\n";
        };
        id_line("local_ids", dbg.local_ids);
        id_line("candidate_ids", dbg.candidate_ids);
        id_line("unmatched_candidates", dbg.unmatched_candidates);

        write_text_file((fs::path(out_dir) / (frame_png("frame", f.index) + ".txt")).string()
                            .substr(0),
                        report.str());
        if (dbg.distractor.height > 0)
            write_png_mask((fs::path(out_dir) / frame_png("mask", f.index)).string(),
                           dbg.distractor);
    }
    std::cout << "wrote per-frame reports to " << out_dir << "\n";
}

void run_align_plan(int frames, int batch) {
    std::cout << window_table(plan_windows(frames, batch));
}

void run_align_run(int frames, int batch, uint64_t seed, const std::string& out_path) {
    std::cout << "align-run: frames = " << frames << ", batch = " << batch << "\n"
              << "seed = " << seed << "\n";
    std::mt19937_64 rng(seed);
    std::map<int, Pose> truth;
    PointCloud cloud;
    for (int f = 0; f < frames; ++f) {
        Pose p;
        p.rotation = Vec4(1.0 + uniform01(rng), uniform01(rng) - 0.5, uniform01(rng) - 0.5,
                          uniform01(rng) - 0.5)
                         .normalized();
        p.translation = Vec3(uniform01(rng), uniform01(rng), uniform01(rng)) * 10.0;
        truth[f] = p;
        cloud.positions.push_back(p.translation + Vec3(uniform01(rng), uniform01(rng), uniform01(rng)));
        cloud.confidence.push_back(0.5 + 0.5 * uniform01(rng));
        cloud.source_frames.push_back(f);
    }

    AlignmentOutput merged = run_alignment(frames, batch, synthetic_predictor(truth, cloud));
    for (const auto& [f, pose] : truth)
        if (!(merged.poses.count(f) && merged.poses.at(f) == pose))
            throw std::runtime_error("alignment diverged from the oracle at frame " +
                                     std::to_string(f));
    write_trajectory(out_path, merged.poses);
    std::cout << "merged " << merged.poses.size() << " poses (all match the oracle) -> "
              << out_path << "\n";
}

void run_metrics(const std::string& pred_dir, const std::string& gt_dir,
                 const std::string& out_path) {
    if (!fs::is_directory(pred_dir)) throw std::runtime_error(pred_dir + ": not a directory");
    if (!fs::is_directory(gt_dir)) throw std::runtime_error(gt_dir + ": not a directory");
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(pred_dir))
        if (entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw std::runtime_error(pred_dir + ": no PNG files");

    std::ostringstream csv;
    csv << "frame,psnr,ssim\n";
    double psnr_sum = 0.0, ssim_sum = 0.0;
    char buf[96];
    for (const std::string& name : names) {
        fs::path gt_path = fs::path(gt_dir) / name;
        if (!fs::exists(gt_path))
            throw std::runtime_error(gt_path.string() + ": missing ground-truth image");
        Image3 pred = read_png_rgb8((fs::path(pred_dir) / name).string());
        Image3 gt = read_png_rgb8(gt_path.string());
        MetricReport r = evaluate_pair(pred, gt);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.psnr, r.ssim);
        csv << fs::path(name).stem().string() << ',' << buf << '\n';
        psnr_sum += r.psnr;
        ssim_sum += r.ssim;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", psnr_sum / names.size(),
                  ssim_sum / names.size());
    csv << "mean," << buf << '\n';

    if (out_path.empty()) {
        std::cout << csv.str();
    } else {
        write_text_file(out_path, csv.str());
        std::cout << "evaluated " << names.size() << " frames -> " << out_path << "\n";
    }
}

void run_render(const std::string& config_path, const std::string& scene_dir,
                const std::string& ply_path, const std::string& out_dir) {
    RunConfig rc = load_run_config(config_path);
    SyntheticSequence seq = load_scene_dir(scene_dir);
    if (seq.frames.empty()) throw std::runtime_error(scene_dir + ": no frames");
    std::vector<Gaussian3D> gaussians = read_gaussians_ply(ply_path);
    fs::create_directories(out_dir);
    for (const Frame& f : seq.frames) {
        RenderOutput ro = render_scene(gaussians, f.camera, rc.background);
        write_png_rgb8((fs::path(out_dir) / frame_png("render", f.index)).string(), ro.image);
    }
    std::cout << "rendered " << seq.frames.size() << " frames with " << gaussians.size()
              << " gaussians -> " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "splatwild: gaussian-splat reconstruction robust to moving distractors.\n"
        "Set SPLATWILD_THREADS to cap worker threads."};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene directory from a config");
    std::string synth_config, synth_out;
    synth->add_option("--config", synth_config, "scene description file")->required();
    synth->add_option("--out", synth_out, "output scene directory")->required();
    synth->callback([&] { run_synth(synth_config, synth_out); });

    auto* sample = app.add_subcommand("sample-points", "Downsample a point cloud by descriptor score");
    std::string sample_in, sample_out;
    int sample_n = 80, sample_k = 3, sample_neighbors = 10;
    sample->add_option("--input", sample_in, "input PLY cloud")->required();
    sample->add_option("--output", sample_out, "output PLY cloud")->required();
    sample->add_option("--n", sample_n, "voxels along the shortest extent")->capture_default_str();
    sample->add_option("--k", sample_k, "points kept per voxel")->capture_default_str();
    sample->add_option("--neighbors", sample_neighbors, "neighborhood size for descriptors")
        ->capture_default_str();
    sample->callback(
        [&] { run_sample_points(sample_in, sample_out, sample_n, sample_k, sample_neighbors); });

    auto* train_cmd = app.add_subcommand("train", "Optimize gaussians against a scene directory");
    std::string train_config, train_scene, train_out, train_init;
    bool train_no_mask = false, train_no_guide = false, train_dump_guide = false;
    train_cmd->add_option("--config", train_config, "run configuration file");
    train_cmd->add_option("--scene", train_scene, "scene directory")->required();
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--init", train_init, "initial gaussians PLY (default: random seed box)");
    train_cmd->add_flag("--no-mask", train_no_mask, "supervise every pixel");
    train_cmd->add_flag("--no-guide", train_no_guide, "disable the voxel guide");
    train_cmd->add_flag("--dump-guide", train_dump_guide, "write the final guide state table");
    train_cmd->callback([&] {
        run_train(train_config, train_scene, train_out, train_init, train_no_mask, train_no_guide,
                  train_dump_guide);
    });

    auto* maskdbg = app.add_subcommand("mask-debug", "Dump masking thresholds, tables, and masks");
    std::string mdbg_config, mdbg_scene, mdbg_ply, mdbg_out;
    int mdbg_iter = -1;
    maskdbg->add_option("--config", mdbg_config, "run configuration file");
    maskdbg->add_option("--scene", mdbg_scene, "scene directory")->required();
    maskdbg->add_option("--ply", mdbg_ply, "gaussians to render")->required();
    maskdbg->add_option("--iter", mdbg_iter, "iteration to probe (default: activation)");
    maskdbg->add_option("--out", mdbg_out, "output directory")->required();
    maskdbg->callback([&] { run_mask_debug(mdbg_config, mdbg_scene, mdbg_ply, mdbg_iter, mdbg_out); });

    auto* plan = app.add_subcommand("align-plan", "Print the alignment window table as TSV");
    int plan_frames = 0, plan_batch = 0;
    plan->add_option("--frames", plan_frames, "total frame count")->required();
    plan->add_option("--batch", plan_batch, "window size")->required();
    plan->callback([&] { run_align_plan(plan_frames, plan_batch); });

    auto* arun = app.add_subcommand("align-run", "Run windowed alignment against the synthetic oracle");
    int arun_frames = 0, arun_batch = 0;
    uint64_t arun_seed = 1;
    std::string arun_out;
    arun->add_option("--frames", arun_frames, "total frame count")->required();
    arun->add_option("--batch", arun_batch, "window size")->required();
    arun->add_option("--seed", arun_seed, "oracle seed")->capture_default_str();
    arun->add_option("--out", arun_out, "trajectory output file")->required();
    arun->callback([&] { run_align_run(arun_frames, arun_batch, arun_seed, arun_out); });

    auto* metrics_cmd = app.add_subcommand("metrics", "Compare rendered frames against ground truth");
    std::string met_pred, met_gt, met_out;
    metrics_cmd->add_option("--pred", met_pred, "directory of rendered PNGs")->required();
    metrics_cmd->add_option("--gt", met_gt, "directory of reference PNGs")->required();
    metrics_cmd->add_option("--out", met_out, "CSV output path (default: stdout)");
    metrics_cmd->callback([&] { run_metrics(met_pred, met_gt, met_out); });

    auto* render_cmd = app.add_subcommand("render", "Render a gaussians PLY with a scene's cameras");
    std::string ren_config, ren_scene, ren_ply, ren_out;
    render_cmd->add_option("--config", ren_config, "run configuration file (background color)");
    render_cmd->add_option("--scene", ren_scene, "scene directory supplying cameras")->required();
    render_cmd->add_option("--ply", ren_ply, "gaussians to render")->required();
    render_cmd->add_option("--out", ren_out, "output directory")->required();
    render_cmd->callback([&] { run_render(ren_config, ren_scene, ren_ply, ren_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message, including any unexpected token
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
