#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace splatwild {

// Row-major RGB image, channels in [0,1] for anything user-facing.
struct Image3 {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // height * width * 3

    Image3() = default;
    Image3(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

    double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    bool empty() const { return data.empty(); }
    size_t pixels() const { return static_cast<size_t>(height) * width; }
};

// Single-channel double image (residuals, luminance, loss weights).
struct Image1 {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image1() = default;
    Image1(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    bool empty() const { return data.empty(); }
    size_t pixels() const { return static_cast<size_t>(height) * width; }
};

// Binary pixel set; semantics (keep vs distractor) depend on the call site.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;

    Mask() = default;
    Mask(int h, int w, uint8_t fill = 0) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    bool empty() const { return data.empty(); }

    size_t count() const {
        size_t n = 0;
        for (uint8_t v : data) n += (v != 0);
        return n;
    }
};

// Per-pixel object IDs; 0 is background.
struct IdMap {
    int height = 0;
    int width = 0;
    std::vector<uint32_t> data;

    IdMap() = default;
    IdMap(int h, int w, uint32_t fill = 0) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    uint32_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    uint32_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    bool empty() const { return data.empty(); }
};

inline void require_same_shape(const Image3& a, const Image3& b, const char* what) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

// Intersection over union of two binary masks; two empty masks count as a
// perfect match.
inline double mask_iou(const Mask& a, const Mask& b) {
    if (a.height != b.height || a.width != b.width) throw std::invalid_argument("mask_iou: shapes differ");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        bool av = a.data[i] != 0, bv = b.data[i] != 0;
        inter += (av && bv);
        uni += (av || bv);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline Image1 luminance(const Image3& img) {
    Image1 out(img.height, img.width);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (img.data[i * 3] + img.data[i * 3 + 1] + img.data[i * 3 + 2]) / 3.0;
    return out;
}

}  // namespace splatwild
