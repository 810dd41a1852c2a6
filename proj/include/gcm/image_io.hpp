#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "gcm/errors.hpp"
#include "gcm/image.hpp"

namespace gcm {

/// Decode an 8-bit gray or RGB PNG into [0,1] planes (1 or 3). Palette,
/// 16-bit, low-bit-depth and alpha variants are normalized on the fly.
inline std::vector<ImageGrid> read_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw LoadError("read_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw LoadError("read_png: out of memory");
    }
    std::vector<unsigned char> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw LoadError("read_png: failed to decode " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_uint_32 width = png_get_image_width(png, info);
    png_uint_32 height = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (depth == 16) png_set_strip_16(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    png_read_update_info(png, info);
    int channels = png_get_channels(png, info);
    std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * height);
    rows.resize(height);
    for (png_uint_32 i = 0; i < height; ++i) rows[i] = buffer.data() + i * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    if (channels != 1 && channels != 3)
        throw LoadError("read_png: unsupported channel count in " + path);
    std::vector<ImageGrid> planes(channels, ImageGrid(int(height), int(width)));
    for (png_uint_32 i = 0; i < height; ++i)
        for (png_uint_32 j = 0; j < width; ++j)
            for (int c = 0; c < channels; ++c)
                planes[c](int(i), int(j)) = buffer[i * rowbytes + j * channels + c] / 255.0;
    return planes;
}

/// Write planes (1 = gray, 3 = RGB) as an 8-bit PNG with pinned encoder
/// settings so identical pixel data always produces identical bytes.
inline void write_png(const std::string& path, const std::vector<ImageGrid>& planes) {
    if (planes.size() != 1 && planes.size() != 3)
        throw ParameterError("write_png: expected 1 or 3 planes");
    for (const ImageGrid& p : planes) require_same_shape(p, planes[0], "write_png");
    const int h = planes[0].height(), w = planes[0].width();
    const int channels = int(planes.size());
    std::vector<unsigned char> buffer(std::size_t(h) * w * channels);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < channels; ++c) {
                double v = std::clamp(planes[c](i, j), 0.0, 1.0);
                buffer[(std::size_t(i) * w + j) * channels + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw LoadError("write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw LoadError("write_png: out of memory");
    }
    std::vector<png_bytep> rows(h);
    for (int i = 0; i < h; ++i) rows[i] = buffer.data() + std::size_t(i) * w * channels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw LoadError("write_png: failed to encode " + path);
    }
    png_init_io(png, fp);
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

/// Single-channel view of an image file: gray plane as-is, RGB reduced
/// to Rec.601 luminance.
inline ImageGrid read_png_gray(const std::string& path) {
    std::vector<ImageGrid> planes = read_png(path);
    if (planes.size() == 1) return std::move(planes[0]);
    return luminance(planes[0], planes[1], planes[2]);
}

/// Kernel text format: first line "h w", then h rows of w decimal floats.
inline void write_kernel_text(const std::string& path, const BlurKernel& k) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw LoadError("write_kernel_text: cannot open " + path);
    os << k.size() << " " << k.size() << "\n";
    char buf[32];
    for (int i = 0; i < k.size(); ++i) {
        for (int j = 0; j < k.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", k(i, j));
            os << (j ? " " : "") << buf;
        }
        os << "\n";
    }
    if (!os) throw LoadError("write_kernel_text: write failed for " + path);
}

inline BlurKernel read_kernel_text(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw LoadError("read_kernel_text: cannot open " + path);
    int h = 0, w = 0;
    if (!(is >> h >> w)) throw LoadError("read_kernel_text: bad header in " + path);
    if (h != w || h <= 0 || h % 2 == 0)
        throw LoadError("read_kernel_text: kernel must be square with odd size");
    std::vector<double> weights(std::size_t(h) * w);
    for (double& v : weights)
        if (!(is >> v)) throw LoadError("read_kernel_text: truncated data in " + path);
    return BlurKernel(h, std::move(weights));
}

}  // namespace gcm
