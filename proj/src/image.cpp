#include "lesionmap/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lesionmap {

Image::Image(int h, int w, int c, std::uint8_t fill) : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("image dimensions must be positive");
    if (c != 1 && c != 3) throw std::invalid_argument("image must have 1 or 3 channels");
    pixels.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill);
}

void Image::validate() const {
    if (height <= 0 || width <= 0) throw std::invalid_argument("image dimensions must be positive");
    if (channels != 1 && channels != 3) throw std::invalid_argument("image must have 1 or 3 channels");
    if (pixels.size() != pixel_count() * static_cast<std::size_t>(channels)) {
        throw std::invalid_argument("image pixel buffer length does not match " + std::to_string(height) + "x" +
                                    std::to_string(width) + "x" + std::to_string(channels));
    }
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

Image luma_image(const Image& img) {
    img.validate();
    if (img.channels == 1) return img;
    Image out(img.height, img.width, 1);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        out.pixels[i] = luma(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]);
    }
    out.source = img.source;
    return out;
}

namespace {

std::uint8_t round_to_level(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// BT.601 full-range chroma.
double chroma_b(double r, double g, double b) { return -0.168736 * r - 0.331264 * g + 0.5 * b; }
double chroma_r(double r, double g, double b) { return 0.5 * r - 0.418688 * g - 0.081312 * b; }

// reflect-101 for indices up to one image extent past the end
int reflect_index(int i, int n) {
    if (i < n) return i;
    return std::max(0, 2 * (n - 1) - i);
}

struct AxisBlend {
    int t0, t1;
    double w;  // weight of t1
};

AxisBlend axis_blend(int pos, int tile_extent, int tiles) {
    const double f = (pos - (tile_extent - 1) / 2.0) / tile_extent;
    if (f <= 0.0) return {0, 0, 0.0};
    int t0 = static_cast<int>(std::floor(f));
    if (t0 >= tiles - 1) return {tiles - 1, tiles - 1, 0.0};
    return {t0, t0 + 1, f - t0};
}

}  // namespace

std::array<std::uint8_t, 256> clahe_tile_mapping(const std::array<std::uint64_t, 256>& histogram,
                                                 std::uint64_t tile_pixels, double clip_factor) {
    if (!(clip_factor >= 1.0)) throw std::invalid_argument("clahe clip factor must be >= 1");
    if (tile_pixels == 0) throw std::invalid_argument("clahe tile is empty");
    const double raw_limit = std::ceil(clip_factor * static_cast<double>(tile_pixels) / 256.0);
    const std::uint64_t limit =
        raw_limit >= static_cast<double>(tile_pixels) ? tile_pixels : static_cast<std::uint64_t>(raw_limit);

    std::array<std::uint64_t, 256> bins = histogram;
    std::uint64_t excess = 0;
    for (auto& b : bins) {
        if (b > limit) {
            excess += b - limit;
            b = limit;
        }
    }
    const std::uint64_t share = excess / 256, remainder = excess % 256;
    for (std::size_t i = 0; i < 256; ++i) bins[i] += share + (i < remainder ? 1 : 0);

    std::array<std::uint8_t, 256> mapping{};
    std::uint64_t cdf = 0;
    for (std::size_t v = 0; v < 256; ++v) {
        cdf += bins[v];
        // round(255 * cdf / N), half up, in exact integer arithmetic
        mapping[v] = static_cast<std::uint8_t>(std::min<std::uint64_t>(255, (510 * cdf + tile_pixels) / (2 * tile_pixels)));
    }
    return mapping;
}

Image clahe(const Image& img, TileGrid tiles, double clip_factor) {
    img.validate();
    if (tiles.rows < 1 || tiles.cols < 1) throw std::invalid_argument("clahe tile grid must be at least 1x1");
    if (tiles.rows > img.height || tiles.cols > img.width) {
        throw std::invalid_argument("clahe tile grid " + std::to_string(tiles.rows) + "x" + std::to_string(tiles.cols) +
                                    " is larger than the image " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width));
    }
    if (!(clip_factor >= 1.0)) throw std::invalid_argument("clahe clip factor must be >= 1");

    const Image lum = luma_image(img);
    const int th = (img.height + tiles.rows - 1) / tiles.rows;
    const int tw = (img.width + tiles.cols - 1) / tiles.cols;
    const auto tile_pixels = static_cast<std::uint64_t>(th) * static_cast<std::uint64_t>(tw);

    std::vector<std::array<std::uint8_t, 256>> maps(static_cast<std::size_t>(tiles.rows * tiles.cols));
    for (int tr = 0; tr < tiles.rows; ++tr) {
        for (int tc = 0; tc < tiles.cols; ++tc) {
            std::array<std::uint64_t, 256> hist{};
            for (int y = tr * th; y < (tr + 1) * th; ++y) {
                const int sy = reflect_index(y, img.height);
                for (int x = tc * tw; x < (tc + 1) * tw; ++x) ++hist[lum.at(sy, reflect_index(x, img.width))];
            }
            maps[static_cast<std::size_t>(tr * tiles.cols + tc)] = clahe_tile_mapping(hist, tile_pixels, clip_factor);
        }
    }

    Image out = img;
    for (int y = 0; y < img.height; ++y) {
        const AxisBlend by = axis_blend(y, th, tiles.rows);
        for (int x = 0; x < img.width; ++x) {
            const AxisBlend bx = axis_blend(x, tw, tiles.cols);
            const std::uint8_t v = lum.at(y, x);
            auto m = [&](int r, int c) { return static_cast<double>(maps[static_cast<std::size_t>(r * tiles.cols + c)][v]); };
            const double top = (1.0 - bx.w) * m(by.t0, bx.t0) + bx.w * m(by.t0, bx.t1);
            const double bottom = (1.0 - bx.w) * m(by.t1, bx.t0) + bx.w * m(by.t1, bx.t1);
            const double y_new = (1.0 - by.w) * top + by.w * bottom;
            if (img.channels == 1) {
                out.at(y, x) = round_to_level(y_new);
            } else {
                const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
                const double yl = round_to_level(y_new);
                const double cb = chroma_b(r, g, b), cr = chroma_r(r, g, b);
                out.at(y, x, 0) = round_to_level(yl + 1.402 * cr);
                out.at(y, x, 1) = round_to_level(yl - 0.344136 * cb - 0.714136 * cr);
                out.at(y, x, 2) = round_to_level(yl + 1.772 * cb);
            }
        }
    }
    return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    img.validate();
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize target dimensions must be positive");
    Image out(out_h, out_w, img.channels);
    out.source = img.source;
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;

    auto source_coord = [](int dst, double scale, int extent, int& i0, int& i1, double& frac) {
        double s = (dst + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
        i0 = static_cast<int>(std::floor(s));
        i1 = std::min(i0 + 1, extent - 1);
        frac = s - i0;
    };

    for (int y = 0; y < out_h; ++y) {
        int y0, y1;
        double fy;
        source_coord(y, sy, img.height, y0, y1, fy);
        for (int x = 0; x < out_w; ++x) {
            int x0, x1;
            double fx;
            source_coord(x, sx, img.width, x0, x1, fx);
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
                const double bottom = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
                out.at(y, x, c) = round_to_level((1.0 - fy) * top + fy * bottom);
            }
        }
    }
    return out;
}

Image flip(const Image& img, FlipAxis axis) {
    img.validate();
    Image out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const int sy = axis == FlipAxis::vertical ? img.height - 1 - y : y;
            const int sx = axis == FlipAxis::horizontal ? img.width - 1 - x : x;
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    }
    return out;
}

Tensor normalize(const Image& img, const std::vector<double>& mean, const std::vector<double>& stddev) {
    img.validate();
    const auto channels = static_cast<std::size_t>(img.channels);
    auto pick = [&](const std::vector<double>& v, std::size_t c, const char* what) {
        if (v.size() == 1) return v[0];
        if (v.size() != channels) {
            throw std::invalid_argument(std::string("normalize: ") + what + " needs 1 or " +
                                        std::to_string(channels) + " entries");
        }
        return v[c];
    };
    Tensor out({channels, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
    const std::size_t plane = img.pixel_count();
    for (std::size_t c = 0; c < channels; ++c) {
        const double m = pick(mean, c, "mean");
        const double s = pick(stddev, c, "std");
        if (!(s > 0.0)) throw std::invalid_argument("normalize: standard deviation must be positive");
        for (std::size_t i = 0; i < plane; ++i) {
            out[c * plane + i] = (img.pixels[i * channels + c] / 255.0 - m) / s;
        }
    }
    return out;
}

Histogram intensity_histogram(const Image& img) {
    const Image lum = luma_image(img);
    Histogram h;
    for (auto v : lum.pixels) ++h.bins[v];
    h.total = lum.pixels.size();
    return h;
}

double chi_square_to_uniform(const Histogram& hist) {
    if (hist.total == 0) return 0.0;
    const double expected = static_cast<double>(hist.total) / 256.0;
    double sum = 0.0;
    for (auto b : hist.bins) {
        const double d = static_cast<double>(b) - expected;
        sum += d * d / expected;
    }
    return sum;
}

Image to_rgb(const Image& img) {
    img.validate();
    if (img.channels == 3) return img;
    Image out(img.height, img.width, 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = img.pixels[i];
    }
    out.source = img.source;
    return out;
}

}  // namespace lesionmap
