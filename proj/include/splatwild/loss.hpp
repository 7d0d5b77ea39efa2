#pragma once

#include <cmath>
#include <stdexcept>

#include "splatwild/image.hpp"
#include "splatwild/ssim.hpp"

namespace splatwild {

constexpr double kDefaultLossLambda = 0.2;  // D-SSIM share of the photometric loss

struct LossBreakdown {
    double l1 = 0.0;
    double dssim = 0.0;
    double total = 0.0;
    size_t kept_pixels = 0;
};

// Mean absolute channel error over kept pixels; empty mask -> 0.
inline double masked_l1(const Image3& render, const Image3& gt, const Mask& keep) {
    require_same_shape(render, gt, "masked_l1");
    if (keep.height != render.height || keep.width != render.width)
        throw std::invalid_argument("masked_l1: mask shape differs");
    double sum = 0.0;
    size_t kept = 0;
    for (size_t p = 0; p < render.pixels(); ++p) {
        if (!keep.data[p]) continue;
        ++kept;
        for (int c = 0; c < 3; ++c) sum += std::abs(render.data[p * 3 + c] - gt.data[p * 3 + c]);
    }
    return kept ? sum / (3.0 * kept) : 0.0;
}

// Photometric training loss: (1 - lambda) * masked L1 + lambda * masked DSSIM.
// Only the L1 term is differentiated by the trainer; the DSSIM term is tracked
// for masking and reporting.
inline LossBreakdown masked_loss(const Image3& render, const Image3& gt, const Mask& keep,
                                 double lambda = kDefaultLossLambda) {
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("masked_loss: lambda outside [0,1]");
    LossBreakdown out;
    out.kept_pixels = keep.count();
    out.l1 = masked_l1(render, gt, keep);
    if (out.kept_pixels > 0) {
        Image1 dssim = dssim_map(render, gt);
        double sum = 0.0;
        for (size_t p = 0; p < dssim.data.size(); ++p)
            if (keep.data[p]) sum += dssim.data[p];
        out.dssim = sum / static_cast<double>(out.kept_pixels);
    }
    out.total = (1.0 - lambda) * out.l1 + lambda * out.dssim;
    if (!std::isfinite(out.total)) throw std::runtime_error("masked_loss: non-finite loss");
    return out;
}

}  // namespace splatwild
