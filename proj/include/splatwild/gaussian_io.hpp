#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "splatwild/gaussian.hpp"
#include "splatwild/ply.hpp"

namespace splatwild {

// Scene snapshots as PLY. Doubles carry the exact optimization state; a
// quantized red/green/blue triple rides along so stock point-cloud viewers
// have something to display.
inline void write_gaussians_ply(const std::string& path, const std::vector<Gaussian3D>& gs,
                                bool binary = true) {
    static const char* kDoubleProps[] = {"x",     "y",     "z",     "log_scale_x", "log_scale_y",
                                         "log_scale_z", "rot_w", "rot_x", "rot_y",       "rot_z",
                                         "opacity_logit", "color_r", "color_g", "color_b"};
    PlyFile ply;
    ply.binary = binary;
    PlyElement vertex;
    vertex.name = "vertex";
    vertex.count = gs.size();
    for (const char* name : kDoubleProps) {
        PlyProperty p;
        p.name = name;
        p.type = PlyType::Float64;
        p.values.reserve(gs.size());
        vertex.properties.push_back(std::move(p));
    }
    for (const char* name : {"red", "green", "blue"}) {
        PlyProperty p;
        p.name = name;
        p.type = PlyType::UInt8;
        p.values.reserve(gs.size());
        vertex.properties.push_back(std::move(p));
    }
    for (const Gaussian3D& g : gs) {
        double row[14] = {g.center.x(),    g.center.y(),    g.center.z(),    g.log_scale.x(),
                          g.log_scale.y(), g.log_scale.z(), g.rotation[0],   g.rotation[1],
                          g.rotation[2],   g.rotation[3],   g.opacity_logit, g.color.x(),
                          g.color.y(),     g.color.z()};
        for (int i = 0; i < 14; ++i) vertex.properties[i].values.push_back(row[i]);
        for (int c = 0; c < 3; ++c)
            vertex.properties[14 + c].values.push_back(
                std::lround(std::clamp(g.color[c], 0.0, 1.0) * 255.0));
    }
    ply.elements.push_back(std::move(vertex));
    write_ply_file(path, ply);
}

inline std::vector<Gaussian3D> read_gaussians_ply(const std::string& path) {
    PlyFile ply = read_ply_file(path);
    const PlyElement* vertex = ply.find("vertex");
    if (!vertex) throw std::runtime_error(path + ": no vertex element");
    auto need = [&](const char* name) {
        const PlyProperty* p = vertex->find(name);
        if (!p) throw std::runtime_error(path + ": missing property '" + name + "'");
        return p;
    };
    const PlyProperty* x = need("x");
    const PlyProperty* y = need("y");
    const PlyProperty* z = need("z");
    const PlyProperty* lsx = need("log_scale_x");
    const PlyProperty* lsy = need("log_scale_y");
    const PlyProperty* lsz = need("log_scale_z");
    const PlyProperty* rw = need("rot_w");
    const PlyProperty* rx = need("rot_x");
    const PlyProperty* ry = need("rot_y");
    const PlyProperty* rz = need("rot_z");
    const PlyProperty* op = need("opacity_logit");
    const PlyProperty* cr = need("color_r");
    const PlyProperty* cg = need("color_g");
    const PlyProperty* cb = need("color_b");

    std::vector<Gaussian3D> gs(vertex->count);
    for (size_t i = 0; i < vertex->count; ++i) {
        Gaussian3D& g = gs[i];
        g.center = Vec3(x->values[i], y->values[i], z->values[i]);
        g.log_scale = Vec3(lsx->values[i], lsy->values[i], lsz->values[i]);
        g.rotation = Vec4(rw->values[i], rx->values[i], ry->values[i], rz->values[i]);
        g.opacity_logit = op->values[i];
        g.color = Vec3(cr->values[i], cg->values[i], cb->values[i]);
    }
    return gs;
}

}  // namespace splatwild
