#pragma once

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "hspi/tensor.hpp"

namespace hspi {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline unsigned char to_byte(float v) {
    float s = v <= 0.f ? 0.f : (v >= 1.f ? 1.f : v);
    return static_cast<unsigned char>(s * 255.0f + 0.5f);
}

}  // namespace detail

// Write H x W x 3 values in [0,1] as 8-bit RGB.
inline void write_png_rgb(const std::string& path, const Tensor& image) {
    if (image.shape.size() != 3 || image.dim(2) != 3)
        throw ShapeError("write_png_rgb: need HxWx3 tensor");
    int h = image.dim(0), w = image.dim(1);
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for write: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[std::size_t(x) * 3 + c] = detail::to_byte(image(y, x, c));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Write H x W values in [0,1] as 8-bit grayscale.
inline void write_png_gray(const std::string& path, const Tensor& map) {
    if (map.shape.size() != 2) throw ShapeError("write_png_gray: need HxW tensor");
    int h = map.dim(0), w = map.dim(1);
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for write: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) row[std::size_t(x)] = detail::to_byte(map(y, x));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace detail {

inline std::vector<std::vector<unsigned char>> read_png_rows(const std::string& path,
                                                             int& h, int& w, bool gray) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open image: " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw IoError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    // Normalize to 8-bit; gray requests a single channel, otherwise RGB.
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (gray) {
        if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    } else {
        if (!(color & PNG_COLOR_MASK_COLOR)) png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);

    h = int(png_get_image_height(png, info));
    w = int(png_get_image_width(png, info));
    std::size_t stride = png_get_rowbytes(png, info);
    std::vector<std::vector<unsigned char>> rows(static_cast<std::size_t>(h), std::vector<unsigned char>(stride));
    std::vector<png_bytep> ptrs(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) ptrs[std::size_t(y)] = rows[std::size_t(y)].data();
    png_read_image(png, ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return rows;
}

}  // namespace detail

// Read a PNG as H x W x 3 floats in [0,1].
inline Tensor read_png_rgb(const std::string& path) {
    int h = 0, w = 0;
    auto rows = detail::read_png_rows(path, h, w, false);
    Tensor out({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out(y, x, c) = float(rows[std::size_t(y)][std::size_t(x) * 3 + c]) / 255.0f;
    return out;
}

// Read a PNG as H x W floats in [0,1] (single channel).
inline Tensor read_png_gray(const std::string& path) {
    int h = 0, w = 0;
    auto rows = detail::read_png_rows(path, h, w, true);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out(y, x) = float(rows[std::size_t(y)][std::size_t(x)]) / 255.0f;
    return out;
}

// Read a 0/255 mask PNG as a binary 0/1 map.
inline Tensor read_png_binary(const std::string& path) {
    Tensor g = read_png_gray(path);
    for (float& v : g.data) v = v >= 0.5f ? 1.0f : 0.0f;
    return g;
}

}  // namespace hspi
