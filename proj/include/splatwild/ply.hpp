#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace splatwild {

// Minimal PLY codec: scalar properties only (no lists), ascii or binary
// little-endian. Values are held as doubles, which represents every supported
// scalar type exactly, so write-then-read round-trips bitwise.
enum class PlyType { Float32, Float64, UInt8, Int32 };

inline const char* ply_type_name(PlyType t) {
    switch (t) {
        case PlyType::Float32: return "float";
        case PlyType::Float64: return "double";
        case PlyType::UInt8: return "uchar";
        case PlyType::Int32: return "int";
    }
    return "?";
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::Float64;
    std::vector<double> values;  // one per element row
};

struct PlyElement {
    std::string name;
    size_t count = 0;
    std::vector<PlyProperty> properties;

    const PlyProperty* find(const std::string& prop) const {
        for (const PlyProperty& p : properties)
            if (p.name == prop) return &p;
        return nullptr;
    }
};

struct PlyFile {
    bool binary = true;
    std::vector<PlyElement> elements;

    const PlyElement* find(const std::string& name) const {
        for (const PlyElement& e : elements)
            if (e.name == name) return &e;
        return nullptr;
    }
};

namespace detail {

inline PlyType parse_ply_type(const std::string& s, const std::string& path) {
    if (s == "float" || s == "float32") return PlyType::Float32;
    if (s == "double" || s == "float64") return PlyType::Float64;
    if (s == "uchar" || s == "uint8") return PlyType::UInt8;
    if (s == "int" || s == "int32" || s == "uint" || s == "uint32" || s == "short" || s == "ushort")
        return PlyType::Int32;
    throw std::runtime_error(path + ": unsupported property type '" + s + "'");
}

inline size_t ply_type_size(const std::string& s) {
    if (s == "float" || s == "float32" || s == "int" || s == "int32" || s == "uint" || s == "uint32") return 4;
    if (s == "double" || s == "float64") return 8;
    if (s == "uchar" || s == "uint8") return 1;
    if (s == "short" || s == "ushort") return 2;
    return 0;
}

}  // namespace detail

inline PlyFile read_ply_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);

    std::string line;
    if (!std::getline(f, line) || line.substr(0, 3) != "ply") throw std::runtime_error(path + ": not a PLY file");

    PlyFile out;
    std::vector<std::vector<std::string>> raw_types;  // per element, per property, as declared
    bool format_seen = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "ascii")
                out.binary = false;
            else if (fmt == "binary_little_endian")
                out.binary = true;
            else
                throw std::runtime_error(path + ": unsupported format '" + fmt + "'");
            format_seen = true;
        } else if (tok == "element") {
            PlyElement e;
            ss >> e.name >> e.count;
            if (ss.fail()) throw std::runtime_error(path + ": malformed element line");
            out.elements.push_back(e);
            raw_types.emplace_back();
        } else if (tok == "property") {
            if (out.elements.empty()) throw std::runtime_error(path + ": property before any element");
            std::string type, name;
            ss >> type;
            if (type == "list") throw std::runtime_error(path + ": list properties are not supported");
            ss >> name;
            PlyProperty p;
            p.name = name;
            p.type = detail::parse_ply_type(type, path);
            out.elements.back().properties.push_back(std::move(p));
            raw_types.back().push_back(type);
        } else if (tok == "end_header") {
            break;
        } else {
            throw std::runtime_error(path + ": unexpected header token '" + tok + "'");
        }
    }
    if (!format_seen) throw std::runtime_error(path + ": missing format line");

    for (size_t ei = 0; ei < out.elements.size(); ++ei) {
        PlyElement& e = out.elements[ei];
        for (PlyProperty& p : e.properties) p.values.reserve(e.count);
        if (!out.binary) {
            for (size_t row = 0; row < e.count; ++row) {
                if (!std::getline(f, line))
                    throw std::runtime_error(path + ": truncated ascii payload in element " + e.name);
                std::istringstream ss(line);
                for (PlyProperty& p : e.properties) {
                    double v;
                    if (!(ss >> v)) throw std::runtime_error(path + ": malformed row in element " + e.name);
                    p.values.push_back(v);
                }
            }
        } else {
            for (size_t row = 0; row < e.count; ++row) {
                for (size_t pi = 0; pi < e.properties.size(); ++pi) {
                    const std::string& t = raw_types[ei][pi];
                    size_t sz = detail::ply_type_size(t);
                    uint8_t buf[8];
                    f.read(reinterpret_cast<char*>(buf), sz);
                    if (!f) throw std::runtime_error(path + ": truncated binary payload in element " + e.name);
                    double v = 0;
                    if (t == "float" || t == "float32") {
                        float fv;
                        std::memcpy(&fv, buf, 4);
                        v = fv;
                    } else if (t == "double" || t == "float64") {
                        std::memcpy(&v, buf, 8);
                    } else if (t == "uchar" || t == "uint8") {
                        v = buf[0];
                    } else if (t == "short") {
                        int16_t iv;
                        std::memcpy(&iv, buf, 2);
                        v = iv;
                    } else if (t == "ushort") {
                        uint16_t iv;
                        std::memcpy(&iv, buf, 2);
                        v = iv;
                    } else if (t == "uint" || t == "uint32") {
                        uint32_t iv;
                        std::memcpy(&iv, buf, 4);
                        v = iv;
                    } else {
                        int32_t iv;
                        std::memcpy(&iv, buf, 4);
                        v = iv;
                    }
                    e.properties[pi].values.push_back(v);
                }
            }
        }
    }
    return out;
}

inline void write_ply_file(const std::string& path, const PlyFile& ply) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "ply\nformat " << (ply.binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    for (const PlyElement& e : ply.elements) {
        f << "element " << e.name << ' ' << e.count << '\n';
        for (const PlyProperty& p : e.properties) {
            if (p.values.size() != e.count)
                throw std::invalid_argument(path + ": property " + p.name + " row count mismatch");
            f << "property " << ply_type_name(p.type) << ' ' << p.name << '\n';
        }
    }
    f << "end_header\n";
    for (const PlyElement& e : ply.elements) {
        for (size_t row = 0; row < e.count; ++row) {
            if (!ply.binary) {
                for (size_t pi = 0; pi < e.properties.size(); ++pi) {
                    const PlyProperty& p = e.properties[pi];
                    char buf[40];
                    if (p.type == PlyType::Float64)
                        std::snprintf(buf, sizeof(buf), "%.17g", p.values[row]);
                    else if (p.type == PlyType::Float32)
                        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<float>(p.values[row]));
                    else
                        std::snprintf(buf, sizeof(buf), "%ld", std::lround(p.values[row]));
                    f << buf << (pi + 1 == e.properties.size() ? '\n' : ' ');
                }
            } else {
                for (const PlyProperty& p : e.properties) {
                    double v = p.values[row];
                    if (p.type == PlyType::Float64) {
                        f.write(reinterpret_cast<const char*>(&v), 8);
                    } else if (p.type == PlyType::Float32) {
                        float fv = static_cast<float>(v);
                        f.write(reinterpret_cast<const char*>(&fv), 4);
                    } else if (p.type == PlyType::UInt8) {
                        uint8_t b = static_cast<uint8_t>(std::lround(v));
                        f.write(reinterpret_cast<const char*>(&b), 1);
                    } else {
                        int32_t iv = static_cast<int32_t>(std::lround(v));
                        f.write(reinterpret_cast<const char*>(&iv), 4);
                    }
                }
            }
        }
    }
}

}  // namespace splatwild
