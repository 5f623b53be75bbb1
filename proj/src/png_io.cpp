#include "meibo/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "meibo/error.hpp"

namespace meibo::png {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void on_png_error(png_structp, png_const_charp message) {
    throw Error("malformed_png", std::string("PNG error: ") + message);
}
void on_png_warning(png_structp, png_const_charp) {}

struct GrayPng {
    int width = 0;
    int height = 0;
    int bit_depth = 0;
    std::vector<std::uint16_t> values;
};

GrayPng read_gray(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw Error("missing_file", "cannot open " + path.string());

    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw Error("malformed_png", "not a PNG file: " + path.string());
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("malformed_png", "libpng initialisation failed");
    }
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    GrayPng out;
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY) {
        throw Error("malformed_png", "expected single-channel grayscale PNG: " + path.string());
    }
    if (out.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (out.bit_depth == 16) png_set_swap(png);  // native little-endian rows
    png_read_update_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);

    std::vector<png_byte> buffer(rowbytes * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + rowbytes * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    out.values.resize(static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            std::uint16_t v;
            if (depth == 16) {
                const png_byte* p = rows[y] + 2 * x;
                v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
            } else {
                v = rows[y][x];
            }
            out.values[static_cast<std::size_t>(y) * out.width + x] = v;
        }
    }
    out.bit_depth = depth;
    return out;
}

void write_gray(const std::filesystem::path& path, int width, int height, int bit_depth,
                const std::vector<png_byte>& bytes) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw Error("io_error", "cannot write " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("io_error", "libpng initialisation failed");
    }
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};

    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t rowbytes = static_cast<std::size_t>(width) * (bit_depth / 8);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(bytes.data() + rowbytes * static_cast<std::size_t>(y)));
    }
    png_write_end(png, nullptr);
}

}  // namespace

LabelImage read_gray16(const std::filesystem::path& path) {
    GrayPng g = read_gray(path);
    LabelImage out(g.height, g.width);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out(y, x) = g.values[static_cast<std::size_t>(y) * g.width + x];
    return out;
}

IntensityImage read_gray8(const std::filesystem::path& path) {
    GrayPng g = read_gray(path);
    if (g.bit_depth != 8) throw Error("malformed_png", "expected 8-bit grayscale PNG: " + path.string());
    IntensityImage out(g.height, g.width);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            out(y, x) = static_cast<std::uint8_t>(g.values[static_cast<std::size_t>(y) * g.width + x]);
    return out;
}

void write_gray16(const std::filesystem::path& path, const LabelImage& image) {
    std::vector<png_byte> bytes(static_cast<std::size_t>(image.size()) * 2);
    std::size_t k = 0;
    for (Eigen::Index y = 0; y < image.rows(); ++y) {
        for (Eigen::Index x = 0; x < image.cols(); ++x) {
            const std::uint16_t v = image(y, x);
            bytes[k++] = static_cast<png_byte>(v >> 8);  // PNG stores big-endian
            bytes[k++] = static_cast<png_byte>(v & 0xFF);
        }
    }
    write_gray(path, static_cast<int>(image.cols()), static_cast<int>(image.rows()), 16, bytes);
}

void write_gray8(const std::filesystem::path& path, const IntensityImage& image) {
    std::vector<png_byte> bytes(image.data(), image.data() + image.size());
    write_gray(path, static_cast<int>(image.cols()), static_cast<int>(image.rows()), 8, bytes);
}

}  // namespace meibo::png
