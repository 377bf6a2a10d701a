#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lesionmap/image.hpp"

namespace lesionmap {

enum class ImageIoErrorKind {
    unsupported_format,  // unknown signature, or a PNG/PNM variant we do not decode
    truncated,           // data ends before the format says it should
    malformed,           // structurally invalid (bad CRC, bad header values)
    io_failure,          // the OS refused to open/read/write
};

const char* to_string(ImageIoErrorKind kind);

class ImageIoError : public std::runtime_error {
public:
    ImageIoError(ImageIoErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}
    ImageIoErrorKind kind() const noexcept { return kind_; }

private:
    ImageIoErrorKind kind_;
};

/// Decodes PNG (8-bit gray/RGB; palette and alpha variants are flattened
/// to RGB/gray), binary PGM (P5) or PPM (P6). Format is detected from the
/// file signature.
Image read_image(const std::filesystem::path& path);
Image decode_image(const std::vector<std::uint8_t>& bytes);

/// Format follows the extension: .png, or .ppm/.pgm/.pnm for binary PNM
/// (P5 for gray, P6 for RGB). Written atomically.
void write_image(const std::filesystem::path& path, const Image& img);

std::vector<std::uint8_t> encode_png(const Image& img);
std::vector<std::uint8_t> encode_pnm(const Image& img);

}  // namespace lesionmap
