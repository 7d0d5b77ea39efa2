#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "splatwild/image.hpp"

namespace splatwild {
namespace detail {

struct FileHandle {
    std::FILE* f = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {
        if (!f) throw std::runtime_error("cannot open " + path);
    }
    ~FileHandle() {
        if (f) std::fclose(f);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

inline uint8_t quantize8(double v) {
    double s = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<uint8_t>(s);
}

// One code path for every flavor we write: 8-bit RGB, 8-bit gray, 16-bit gray.
inline void write_png(const std::string& path, int width, int height, int color_type, int bit_depth,
                      const std::vector<std::vector<uint8_t>>& rows) {
    FileHandle fh(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng write error for " + path);
    }
    png_init_io(png, fh.f);
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (const auto& row : rows) png_write_row(png, const_cast<png_bytep>(row.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct DecodedPng {
    int width = 0;
    int height = 0;
    int color_type = 0;
    int bit_depth = 0;
    std::vector<std::vector<uint8_t>> rows;
};

inline DecodedPng read_png(const std::string& path) {
    FileHandle fh(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng read error for " + path);
    }
    png_init_io(png, fh.f);
    png_read_info(png, info);

    DecodedPng out;
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.color_type = png_get_color_type(png, info);
    out.bit_depth = png_get_bit_depth(png, info);

    // Normalize palettes and sub-byte depths; strip alpha so callers only see
    // the three layouts this codebase writes.
    if (out.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (out.color_type == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (out.color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    out.color_type = png_get_color_type(png, info);
    out.bit_depth = png_get_bit_depth(png, info);

    size_t rowbytes = png_get_rowbytes(png, info);
    out.rows.assign(out.height, std::vector<uint8_t>(rowbytes));
    for (int y = 0; y < out.height; ++y) png_read_row(png, out.rows[y].data(), nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace detail

inline void write_png_rgb8(const std::string& path, const Image3& img) {
    std::vector<std::vector<uint8_t>> rows(img.height, std::vector<uint8_t>(static_cast<size_t>(img.width) * 3));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) rows[y][x * 3 + c] = detail::quantize8(img.at(y, x, c));
    detail::write_png(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, rows);
}

inline Image3 read_png_rgb8(const std::string& path) {
    detail::DecodedPng png = detail::read_png(path);
    if (png.bit_depth != 8) throw std::runtime_error(path + ": expected 8-bit image");
    Image3 img(png.height, png.width);
    bool gray = png.color_type == PNG_COLOR_TYPE_GRAY;
    for (int y = 0; y < png.height; ++y)
        for (int x = 0; x < png.width; ++x)
            for (int c = 0; c < 3; ++c) {
                uint8_t v = gray ? png.rows[y][x] : png.rows[y][x * 3 + c];
                img.at(y, x, c) = v / 255.0;
            }
    return img;
}

inline void write_png_mask(const std::string& path, const Mask& mask) {
    std::vector<std::vector<uint8_t>> rows(mask.height, std::vector<uint8_t>(mask.width));
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) rows[y][x] = mask.at(y, x) ? 255 : 0;
    detail::write_png(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 8, rows);
}

inline Mask read_png_mask(const std::string& path) {
    detail::DecodedPng png = detail::read_png(path);
    if (png.color_type != PNG_COLOR_TYPE_GRAY || png.bit_depth != 8)
        throw std::runtime_error(path + ": expected 8-bit grayscale mask");
    Mask mask(png.height, png.width);
    for (int y = 0; y < png.height; ++y)
        for (int x = 0; x < png.width; ++x) mask.at(y, x) = png.rows[y][x] > 127 ? 1 : 0;
    return mask;
}

// Segmentation IDs as 16-bit grayscale; PNG stores samples big-endian.
inline void write_png_ids(const std::string& path, const IdMap& ids) {
    std::vector<std::vector<uint8_t>> rows(ids.height, std::vector<uint8_t>(static_cast<size_t>(ids.width) * 2));
    for (int y = 0; y < ids.height; ++y)
        for (int x = 0; x < ids.width; ++x) {
            uint32_t v = ids.at(y, x);
            if (v > 0xFFFF) throw std::runtime_error(path + ": object ID exceeds 16-bit range");
            rows[y][x * 2] = static_cast<uint8_t>(v >> 8);
            rows[y][x * 2 + 1] = static_cast<uint8_t>(v & 0xFF);
        }
    detail::write_png(path, ids.width, ids.height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

inline IdMap read_png_ids(const std::string& path) {
    detail::DecodedPng png = detail::read_png(path);
    if (png.color_type != PNG_COLOR_TYPE_GRAY || png.bit_depth != 16)
        throw std::runtime_error(path + ": expected 16-bit grayscale ID map");
    IdMap ids(png.height, png.width);
    for (int y = 0; y < png.height; ++y)
        for (int x = 0; x < png.width; ++x)
            ids.at(y, x) = (static_cast<uint32_t>(png.rows[y][x * 2]) << 8) | png.rows[y][x * 2 + 1];
    return ids;
}

}  // namespace splatwild
