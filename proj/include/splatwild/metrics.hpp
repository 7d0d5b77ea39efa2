#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "splatwild/image.hpp"
#include "splatwild/ssim.hpp"

namespace splatwild {

// Peak signal-to-noise ratio over [0,1] images, all pixels and channels.
// Identical images return +infinity.
inline double psnr(const Image3& a, const Image3& b) {
    require_same_shape(a, b, "metrics");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

// PSNR restricted to pixels where keep = 1 (all channels of a kept pixel
// count). Useful for judging reconstruction quality away from masked regions.
inline double psnr_masked(const Image3& a, const Image3& b, const Mask& keep) {
    require_same_shape(a, b, "metrics");
    if (keep.width != a.width || keep.height != a.height)
        throw std::invalid_argument("psnr_masked: mask shape mismatch");
    double mse = 0.0;
    size_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!keep.at(y, x)) continue;
            for (int c = 0; c < 3; ++c) {
                double d = a.at(y, x, c) - b.at(y, x, c);
                mse += d * d;
            }
            n += 3;
        }
    if (n == 0) throw std::invalid_argument("psnr_masked: empty mask");
    mse /= static_cast<double>(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

// Mean structural similarity over the shared 11x11 Gaussian window.
inline double ssim_mean(const Image3& a, const Image3& b) {
    Image1 map = ssim_map(a, b);
    double sum = 0.0;
    for (double v : map.data) sum += v;
    return sum / static_cast<double>(map.data.size());
}

struct MetricReport {
    double psnr = 0.0;  // +infinity when images coincide
    double ssim = 0.0;
    std::optional<double> mask_iou;
};

inline MetricReport evaluate_pair(const Image3& pred, const Image3& gt) {
    MetricReport r;
    r.psnr = psnr(pred, gt);
    r.ssim = ssim_mean(pred, gt);
    return r;
}

}  // namespace splatwild
