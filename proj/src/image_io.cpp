#include "lesionmap/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <string_view>

#include "lesionmap/file_util.hpp"

namespace lesionmap {

const char* to_string(ImageIoErrorKind kind) {
    switch (kind) {
        case ImageIoErrorKind::unsupported_format: return "unsupported format";
        case ImageIoErrorKind::truncated: return "truncated file";
        case ImageIoErrorKind::malformed: return "malformed file";
        case ImageIoErrorKind::io_failure: return "i/o failure";
    }
    return "unknown";
}

namespace {

constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

[[noreturn]] void fail(ImageIoErrorKind kind, const std::string& message) { throw ImageIoError(kind, message); }

// ---- PNG (libpng) ------------------------------------------------------------

struct PngReadState {
    const std::uint8_t* data = nullptr;
    std::size_t size = 0;
    std::size_t pos = 0;
    bool truncated = false;
    char message[256] = {};
};

void png_read_bytes(png_structp png, png_bytep out, png_size_t length) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (length > st->size - st->pos) {
        st->truncated = true;
        png_error(png, "unexpected end of PNG data");
    }
    std::memcpy(out, st->data + st->pos, length);
    st->pos += length;
}

void png_on_error(png_structp png, png_const_charp message) {
    auto* st = static_cast<PngReadState*>(png_get_error_ptr(png));
    std::snprintf(st->message, sizeof st->message, "%s", message);
    png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

// Runs the libpng read sequence. Every local in this frame is trivially
// destructible, so the longjmp taken on a decode error leaks nothing.
bool png_decode_into(PngReadState& st, Image& img) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st, png_on_error, png_on_warning);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_set_read_fn(png, &st, png_read_bytes);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    const int passes = png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) png_error(png, "unexpected channel count after conversion");
    img = Image(static_cast<int>(height), static_cast<int>(width), channels);
    const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
    for (int pass = 0; pass < passes; ++pass) {
        for (std::size_t y = 0; y < height; ++y) png_read_row(png, img.pixels.data() + y * stride, nullptr);
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
    PngReadState st;
    st.data = bytes.data();
    st.size = bytes.size();
    Image img;
    if (!png_decode_into(st, img)) {
        if (st.truncated) fail(ImageIoErrorKind::truncated, "PNG data ends early");
        fail(ImageIoErrorKind::malformed, std::string("PNG: ") + (st.message[0] ? st.message : "decoder failure"));
    }
    return img;
}

struct PngWriteState {
    std::vector<std::uint8_t>* out = nullptr;
    char message[256] = {};
};

void png_write_bytes(png_structp png, png_bytep data, png_size_t length) {
    auto* st = static_cast<PngWriteState*>(png_get_io_ptr(png));
    st->out->insert(st->out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

void png_on_write_error(png_structp png, png_const_charp message) {
    auto* st = static_cast<PngWriteState*>(png_get_error_ptr(png));
    std::snprintf(st->message, sizeof st->message, "%s", message);
    png_longjmp(png, 1);
}

bool png_encode_into(PngWriteState& st, const Image& img, std::vector<png_bytep>& rows) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &st, png_on_write_error, png_on_warning);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_set_write_fn(png, &st, png_write_bytes, png_flush_noop);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

// ---- PNM ------------------------------------------------------------------

struct PnmCursor {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 2;

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    }

    unsigned long number(const char* what) {
        skip_space_and_comments();
        if (pos >= bytes.size()) fail(ImageIoErrorKind::truncated, std::string("PNM header ends before ") + what);
        if (!std::isdigit(bytes[pos])) fail(ImageIoErrorKind::malformed, std::string("PNM header: bad ") + what);
        unsigned long value = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + static_cast<unsigned long>(bytes[pos] - '0');
            if (value > (1ul << 24)) fail(ImageIoErrorKind::malformed, std::string("PNM header: ") + what + " too large");
            ++pos;
        }
        return value;
    }
};

Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
    const int channels = bytes[1] == '6' ? 3 : 1;
    PnmCursor cur{bytes};
    const auto width = cur.number("width");
    const auto height = cur.number("height");
    const auto maxval = cur.number("maxval");
    if (width == 0 || height == 0) fail(ImageIoErrorKind::malformed, "PNM has zero dimension");
    if (maxval != 255) fail(ImageIoErrorKind::unsupported_format, "PNM maxval " + std::to_string(maxval));
    if (cur.pos >= bytes.size()) fail(ImageIoErrorKind::truncated, "PNM header ends before pixel data");
    if (!std::isspace(bytes[cur.pos])) fail(ImageIoErrorKind::malformed, "PNM header not followed by whitespace");
    ++cur.pos;
    Image img(static_cast<int>(height), static_cast<int>(width), channels);
    if (bytes.size() - cur.pos < img.pixels.size()) fail(ImageIoErrorKind::truncated, "PNM pixel data ends early");
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos), img.pixels.size(), img.pixels.begin());
    return img;
}

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

}  // namespace

Image decode_image(const std::vector<std::uint8_t>& bytes) {
    if (bytes.empty()) fail(ImageIoErrorKind::truncated, "empty file");
    if (bytes[0] == kPngSignature[0]) {
        if (bytes.size() < kPngSignature.size()) fail(ImageIoErrorKind::truncated, "PNG signature cut short");
        if (!std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin())) {
            fail(ImageIoErrorKind::unsupported_format, "unrecognised file signature");
        }
        return decode_png(bytes);
    }
    if (bytes[0] == 'P') {
        if (bytes.size() < 2) fail(ImageIoErrorKind::truncated, "PNM magic cut short");
        if (bytes[1] == '5' || bytes[1] == '6') return decode_pnm(bytes);
    }
    fail(ImageIoErrorKind::unsupported_format, "unrecognised file signature");
}

Image read_image(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError& e) {
        fail(ImageIoErrorKind::io_failure, e.what());
    }
    try {
        Image img = decode_image(bytes);
        img.source = path.string();
        return img;
    } catch (const ImageIoError& e) {
        throw ImageIoError(e.kind(), path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    img.validate();
    const std::size_t stride = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
    Image copy = img;  // libpng takes non-const row pointers
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = copy.pixels.data() + y * stride;
    std::vector<std::uint8_t> out;
    PngWriteState st;
    st.out = &out;
    if (!png_encode_into(st, copy, rows)) fail(ImageIoErrorKind::io_failure, std::string("PNG encoder: ") + st.message);
    return out;
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
    img.validate();
    const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) +
                               " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

void write_image(const std::filesystem::path& path, const Image& img) {
    const std::string ext = lower_extension(path);
    std::vector<std::uint8_t> bytes;
    if (ext == ".png") {
        bytes = encode_png(img);
    } else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
        bytes = encode_pnm(img);
    } else {
        fail(ImageIoErrorKind::unsupported_format, "cannot write '" + ext + "' images (use .png, .ppm or .pgm)");
    }
    try {
        write_file_atomic(path, bytes);
    } catch (const IoError& e) {
        fail(ImageIoErrorKind::io_failure, e.what());
    }
}

}  // namespace lesionmap
