#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "octpredict/image.hpp"

namespace oct {

void ImageBuffer::validate() const {
    if (height <= 0 || width <= 0) throw std::invalid_argument("image has zero-sized dimension");
    if (channels != 1 && channels != 3) throw std::invalid_argument("image must have 1 or 3 channels");
    if (data.size() != static_cast<std::size_t>(height) * width * channels)
        throw std::invalid_argument("image data length does not match height x width x channels");
}

namespace {

struct ErrorSink {
    std::string message;
};

void error_fn(png_structp png, png_const_charp msg) {
    auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
    if (sink && sink->message.empty()) sink->message = msg ? msg : "libpng error";
    png_longjmp(png, 1);
}

void warning_fn(png_structp, png_const_charp) {}

struct MemReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

void mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->size) png_error(png, "truncated PNG stream");
    std::memcpy(out, r->data + r->pos, n);
    r->pos += n;
}

}  // namespace

ImageBuffer decode_png_bytes(const std::uint8_t* bytes, std::size_t size) {
    if (size < 8 || png_sig_cmp(bytes, 0, 8) != 0) throw std::runtime_error("not a PNG file (bad signature)");

    ErrorSink sink;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, error_fn, warning_fn);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }

    MemReader reader{bytes, size, 0};
    ImageBuffer img;
    std::vector<png_bytep> rows;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("PNG decode failed: " + (sink.message.empty() ? "libpng error" : sink.message));
    }

    png_set_read_fn(png, &reader, mem_read);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("PNG decode failed: unsupported bit depth " + std::to_string(bit_depth) +
                                 " (only 8-bit supported)");
    }
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("PNG decode failed: unsupported color type (only 8-bit grayscale or RGB supported)");
    }

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = (color_type == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);

    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.data.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    img.validate();
    return img;
}

ImageBuffer decode_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image file " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_png_bytes(bytes.data(), bytes.size());
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void encode_png(const std::string& path, const ImageBuffer& image) {
    image.validate();
    const std::string tmp = path + ".tmp";
    std::FILE* fp = std::fopen(tmp.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open " + tmp + " for writing");

    ErrorSink sink;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, error_fn, warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw std::runtime_error("libpng writer initialization failed");
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        std::remove(tmp.c_str());
        throw std::runtime_error("PNG encode failed: " + (sink.message.empty() ? "libpng error" : sink.message));
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, image.width, image.height, 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y)
        png_write_row(png, const_cast<png_bytep>(image.data.data() + static_cast<std::size_t>(y) * image.width * image.channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

}  // namespace oct
