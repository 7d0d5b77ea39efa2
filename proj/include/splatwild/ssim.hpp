#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "splatwild/image.hpp"

namespace splatwild {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::array<double, kSsimWindow>& ssim_kernel() {
    static const std::array<double, kSsimWindow> k = [] {
        std::array<double, kSsimWindow> w{};
        double sum = 0.0;
        int half = kSsimWindow / 2;
        for (int i = 0; i < kSsimWindow; ++i) {
            double d = i - half;
            w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
            sum += w[i];
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return k;
}

namespace detail {

// Separable Gaussian blur. Near borders the window is renormalized over its
// in-image support, which keeps the output well defined at every pixel.
inline Image1 blur_axis(const Image1& src, bool horizontal) {
    const auto& k = ssim_kernel();
    int half = kSsimWindow / 2;
    Image1 dst(src.height, src.width);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int t = -half; t <= half; ++t) {
                int yy = horizontal ? y : y + t;
                int xx = horizontal ? x + t : x;
                if (yy < 0 || yy >= src.height || xx < 0 || xx >= src.width) continue;
                double w = k[t + half];
                acc += w * src.at(yy, xx);
                wsum += w;
            }
            dst.at(y, x) = acc / wsum;
        }
    }
    return dst;
}

inline Image1 blur(const Image1& src) { return blur_axis(blur_axis(src, true), false); }

}  // namespace detail

// Per-pixel structural similarity on luminance images, 11x11 Gaussian window.
inline Image1 ssim_map(const Image1& x, const Image1& y) {
    if (x.height != y.height || x.width != y.width) throw std::invalid_argument("ssim_map: shapes differ");
    if (x.height < kSsimWindow || x.width < kSsimWindow)
        throw std::invalid_argument("ssim_map: image smaller than the 11x11 window");

    Image1 xx(x.height, x.width), yy(x.height, x.width), xy(x.height, x.width);
    for (size_t i = 0; i < x.data.size(); ++i) {
        xx.data[i] = x.data[i] * x.data[i];
        yy.data[i] = y.data[i] * y.data[i];
        xy.data[i] = x.data[i] * y.data[i];
    }
    Image1 mu_x = detail::blur(x);
    Image1 mu_y = detail::blur(y);
    Image1 e_xx = detail::blur(xx);
    Image1 e_yy = detail::blur(yy);
    Image1 e_xy = detail::blur(xy);

    Image1 out(x.height, x.width);
    for (size_t i = 0; i < out.data.size(); ++i) {
        double mx = mu_x.data[i], my = mu_y.data[i];
        double var_x = std::max(0.0, e_xx.data[i] - mx * mx);
        double var_y = std::max(0.0, e_yy.data[i] - my * my);
        double cov = e_xy.data[i] - mx * my;
        out.data[i] = ((2.0 * mx * my + kSsimC1) * (2.0 * cov + kSsimC2)) /
                      ((mx * mx + my * my + kSsimC1) * (var_x + var_y + kSsimC2));
    }
    return out;
}

inline Image1 ssim_map(const Image3& x, const Image3& y) { return ssim_map(luminance(x), luminance(y)); }

// DSSIM residual (1 - SSIM) / 2, clamped into [0,1] as a numerical guard
// (SSIM is already in [-1,1] analytically).
inline Image1 dssim_map(const Image3& render, const Image3& gt) {
    Image1 s = ssim_map(render, gt);
    for (double& v : s.data) v = std::clamp((1.0 - v) / 2.0, 0.0, 1.0);
    return s;
}

}  // namespace splatwild
