#include "moblur/io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace moblur {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw IoError(path + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": PNG decode error");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int ctype = png_get_color_type(png, info);
    if (depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": 16-bit PNG not supported");
    }
    if (ctype == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (ctype == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    std::vector<png_byte> row(png_get_rowbytes(png, info));

    Image out;
    const int nplanes = (channels >= 3) ? 3 : 1;
    for (int c = 0; c < nplanes; ++c) out.planes.emplace_back(h, w);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < nplanes; ++c)
                out.planes[c](y, x) = row[x * channels + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png(const std::string& path, const Image& img) {
    require(img.channels() == 1 || img.channels() == 3, "write_png: 1 or 3 channels");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": PNG encode error");
    }
    png_init_io(png, fp.get());
    const int h = static_cast<int>(img.height()), w = static_cast<int>(img.width());
    png_set_IHDR(png, info, w, h, 8,
                 img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(w) * img.channels());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels(); ++c) {
                const double v = std::clamp(img.plane(c)(y, x), 0.0, 1.0);
                row[x * img.channels() + c] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_png(const std::string& path, const Planed& gray) {
    write_png(path, Image(gray));
}

void write_pfm(const std::string& path, const Image& img) {
    require(img.channels() == 1 || img.channels() == 3, "write_pfm: 1 or 3 channels");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << (img.channels() == 3 ? "PF" : "Pf") << "\n"
      << img.width() << " " << img.height() << "\n-1.0\n";
    // rows bottom-to-top per the format
    for (Eigen::Index y = img.height() - 1; y >= 0; --y)
        for (Eigen::Index x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) {
                const float v = static_cast<float>(img.plane(c)(y, x));
                f.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
}

Image read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string magic;
    long w = 0, h = 0;
    double scale = 0;
    f >> magic >> w >> h >> scale;
    f.get();  // single whitespace after the header
    if ((magic != "Pf" && magic != "PF") || w <= 0 || h <= 0)
        throw IoError(path + ": bad PFM header");
    if (scale > 0) throw IoError(path + ": big-endian PFM not supported");
    const int nplanes = magic == "PF" ? 3 : 1;
    Image out;
    for (int c = 0; c < nplanes; ++c) out.planes.emplace_back(h, w);
    for (long y = h - 1; y >= 0; --y)
        for (long x = 0; x < w; ++x)
            for (int c = 0; c < nplanes; ++c) {
                float v;
                f.read(reinterpret_cast<char*>(&v), sizeof v);
                out.planes[c](y, x) = v;
            }
    if (!f) throw IoError(path + ": truncated PFM");
    return out;
}

}  // namespace moblur
