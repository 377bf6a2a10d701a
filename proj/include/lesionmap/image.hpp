#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lesionmap/tensor.hpp"

namespace lesionmap {

/// 8-bit raster, row-major with interleaved channels (1 = gray, 3 = RGB).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
    std::string source;  // provenance: file it was read from, or empty

    Image() = default;
    Image(int h, int w, int c, std::uint8_t fill = 0);

    std::size_t index(int y, int x, int c = 0) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    std::uint8_t& at(int y, int x, int c = 0) { return pixels[index(y, x, c)]; }
    std::uint8_t at(int y, int x, int c = 0) const { return pixels[index(y, x, c)]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }

    /// Throws std::invalid_argument if dimensions or buffer length are inconsistent.
    void validate() const;

    bool same_pixels(const Image& other) const {
        return height == other.height && width == other.width && channels == other.channels &&
               pixels == other.pixels;
    }
};

struct Histogram {
    std::array<std::uint64_t, 256> bins{};
    std::uint64_t total = 0;
};

enum class FlipAxis { horizontal, vertical };

struct TileGrid {
    int rows = 8;
    int cols = 8;
};

/// Y' = 0.299 R + 0.587 G + 0.114 B rounded to the nearest level.
std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);
Image luma_image(const Image& img);

/// Contrast-limited adaptive histogram equalization on the luma channel.
///
/// Color images are split into luma and chroma (BT.601 YCbCr); only luma is
/// equalized, chroma is carried over. Each tile histogram is clipped at
/// ceil(clip_factor * N_tile / 256), the clipped excess is spread evenly over
/// all bins (remainder to the lowest bins) and the scaled CDF becomes the
/// tile mapping. Pixels blend the four nearest tile-center mappings
/// bilinearly. Images not divisible by the grid are reflect-padded for the
/// histograms so every tile has the same pixel count.
Image clahe(const Image& img, TileGrid tiles = {}, double clip_factor = 2.0);

/// The 256-entry mapping for one tile histogram, exposed for testing.
std::array<std::uint8_t, 256> clahe_tile_mapping(const std::array<std::uint64_t, 256>& histogram,
                                                 std::uint64_t tile_pixels, double clip_factor);

/// Half-pixel-center bilinear resize, rounded half away from zero.
Image resize_bilinear(const Image& img, int out_h, int out_w);

Image flip(const Image& img, FlipAxis axis);

/// (pixel / 255 - mean_c) / std_c in channel-planar [C,H,W] layout.
Tensor normalize(const Image& img, const std::vector<double>& mean, const std::vector<double>& stddev);

/// 256-bin histogram over luma (color) or the sole channel (gray).
Histogram intensity_histogram(const Image& img);

/// Pearson chi-square distance of a histogram to the flat histogram with the same mass.
double chi_square_to_uniform(const Histogram& hist);

/// Expands gray to RGB; RGB images are returned unchanged.
Image to_rgb(const Image& img);

}  // namespace lesionmap
