#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "darswin/image.hpp"

namespace darswin {

/// 8-bit PNG, RGB or grayscale depending on channel count. Values are
/// clamped from [0, 1] to [0, 255].
inline void write_png(const std::string& path, const Image& img) {
    if (img.c != 1 && img.c != 3)
        throw std::invalid_argument("image_io: png writer supports 1 or 3 channels, got " +
                                    std::to_string(img.c));
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("image_io: cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw std::runtime_error("image_io: libpng failure writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.w, img.h, 8,
                 img.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.w) * img.c);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) {
                const double v = std::clamp(img.at(y, x, ch), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * img.c + ch] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

/// 16-bit grayscale PNG storing depth in millimeters (0 = invalid).
inline void write_png16_depth(const std::string& path, const Image& depth) {
    if (depth.c != 1)
        throw std::invalid_argument("image_io: 16-bit depth png needs 1 channel");
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("image_io: cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw std::runtime_error("image_io: libpng failure writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, depth.w, depth.h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(depth.w) * 2);
    for (int y = 0; y < depth.h; ++y) {
        for (int x = 0; x < depth.w; ++x) {
            const double mm = std::clamp(depth.at(y, x) * 1000.0, 0.0, 65535.0);
            const std::uint16_t v = static_cast<std::uint16_t>(std::lround(mm));
            row[2 * x] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
            row[2 * x + 1] = static_cast<png_byte>(v & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline Image read_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("image_io: cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw std::runtime_error("image_io: libpng failure reading " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);
    const bool wide = png_get_bit_depth(png, info) == 16;
    Image img(h, w, channels);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < channels; ++ch) {
                if (wide) {
                    const std::uint16_t v = static_cast<std::uint16_t>(
                        (row[(static_cast<std::size_t>(x) * channels + ch) * 2] << 8) |
                        row[(static_cast<std::size_t>(x) * channels + ch) * 2 + 1]);
                    img.at(y, x, ch) = v / 1000.0;  // millimeters back to meters
                } else {
                    img.at(y, x, ch) = row[static_cast<std::size_t>(x) * channels + ch] / 255.0;
                }
            }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

/// Little-endian PFM, single channel ("Pf").
inline void write_pfm(const std::string& path, const Image& img) {
    if (img.c != 1) throw std::invalid_argument("image_io: pfm writer needs 1 channel");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("image_io: cannot open for writing: " + path);
    out << "Pf\n" << img.w << " " << img.h << "\n-1.0\n";
    // PFM stores rows bottom-up.
    std::vector<float> row(img.w);
    for (int y = img.h - 1; y >= 0; --y) {
        for (int x = 0; x < img.w; ++x) row[x] = static_cast<float>(img.at(y, x));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("image_io: pfm write failed: " + path);
}

inline Image read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("image_io: cannot open: " + path);
    std::string tag;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> tag >> w >> h >> scale;
    if (tag != "Pf" || w < 1 || h < 1)
        throw std::runtime_error("image_io: not a single-channel PFM: " + path);
    if (scale > 0.0) throw std::runtime_error("image_io: big-endian PFM unsupported: " + path);
    in.get();  // newline after the scale
    Image img(h, w, 1);
    std::vector<float> row(w);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        for (int x = 0; x < w; ++x) img.at(y, x) = row[x];
    }
    if (!in) throw std::runtime_error("image_io: truncated PFM: " + path);
    return img;
}

}  // namespace darswin
