#include "lesionmap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lesionmap/random.hpp"

namespace lesionmap::ops {

namespace {

struct ConvGeometry {
    std::size_t in_channels, in_h, in_w;
    std::size_t out_channels, kh, kw;
    std::size_t out_h, out_w;
    int stride, padding;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, int stride, int padding) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernels, 4, "conv2d kernels");
    if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
    if (padding < 0) throw DimensionError("conv2d padding must be >= 0");
    if (kernels.dim(1) != input.dim(0)) {
        throw DimensionError("conv2d: kernels expect " + std::to_string(kernels.dim(1)) +
                             " input channels, input has " + std::to_string(input.dim(0)));
    }
    ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernels.dim(0), kernels.dim(2), kernels.dim(3),
                   0,            0,            stride,       padding};
    const std::size_t padded_h = g.in_h + 2 * static_cast<std::size_t>(padding);
    const std::size_t padded_w = g.in_w + 2 * static_cast<std::size_t>(padding);
    if (g.kh > padded_h || g.kw > padded_w) {
        throw DimensionError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                             " exceeds padded input " + std::to_string(padded_h) + "x" + std::to_string(padded_w));
    }
    g.out_h = (padded_h - g.kh) / static_cast<std::size_t>(stride) + 1;
    g.out_w = (padded_w - g.kw) / static_cast<std::size_t>(stride) + 1;
    return g;
}

// Output columns [lo, hi) for which input column ox*stride + k - padding is in range.
std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t k, std::ptrdiff_t padding, std::ptrdiff_t stride,
                                                      std::ptrdiff_t in_extent, std::ptrdiff_t out_extent) {
    // need 0 <= o*s + k - p <= in_extent - 1
    std::ptrdiff_t lo = 0;
    const std::ptrdiff_t first = padding - k;
    if (first > 0) lo = (first + stride - 1) / stride;
    const std::ptrdiff_t last = in_extent - 1 + padding - k;
    std::ptrdiff_t hi = last < 0 ? 0 : last / stride + 1;
    hi = std::min(hi, out_extent);
    return {lo, std::max(lo, hi)};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape " + shape_string(b.shape()) + " does not match " +
                             shape_string(a.shape()));
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride, int padding) {
    const auto g = conv_geometry(input, kernels, stride, padding);
    require_rank(bias, 1, "conv2d bias");
    if (bias.dim(0) != g.out_channels) throw DimensionError("conv2d: bias length does not match output channels");

    Tensor out({g.out_channels, g.out_h, g.out_w});
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto p = static_cast<std::ptrdiff_t>(padding);
    const double* in = input.data().data();
    const double* kern = kernels.data().data();
    double* o = out.data().data();
    const std::size_t plane = g.out_h * g.out_w;

    for (std::size_t co = 0; co < g.out_channels; ++co) {
        double* oplane = o + co * plane;
        std::fill(oplane, oplane + plane, bias[co]);
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            const double* iplane = in + ci * g.in_h * g.in_w;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto [oy_lo, oy_hi] = valid_range(static_cast<std::ptrdiff_t>(ky), p, s,
                                                        static_cast<std::ptrdiff_t>(g.in_h),
                                                        static_cast<std::ptrdiff_t>(g.out_h));
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const double w = kern[((co * g.in_channels + ci) * g.kh + ky) * g.kw + kx];
                    const auto [ox_lo, ox_hi] = valid_range(static_cast<std::ptrdiff_t>(kx), p, s,
                                                            static_cast<std::ptrdiff_t>(g.in_w),
                                                            static_cast<std::ptrdiff_t>(g.out_w));
                    for (std::ptrdiff_t oy = oy_lo; oy < oy_hi; ++oy) {
                        const double* irow = iplane + (oy * s + static_cast<std::ptrdiff_t>(ky) - p) *
                                                          static_cast<std::ptrdiff_t>(g.in_w);
                        double* orow = oplane + oy * static_cast<std::ptrdiff_t>(g.out_w);
                        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - p;
                        if (s == 1) {
                            for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += w * irow[ox + shift];
                        } else {
                            for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += w * irow[ox * s + shift];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output, int stride,
                            int padding) {
    const auto g = conv_geometry(input, kernels, stride, padding);
    if (grad_output.shape() != Shape{g.out_channels, g.out_h, g.out_w}) {
        throw DimensionError("conv2d backward: output gradient shape " + shape_string(grad_output.shape()));
    }
    Conv2dGrads grads{Tensor(input.shape()), Tensor(kernels.shape()), Tensor({g.out_channels})};
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto p = static_cast<std::ptrdiff_t>(padding);
    const double* in = input.data().data();
    const double* kern = kernels.data().data();
    const double* go = grad_output.data().data();
    double* gi = grads.input.data().data();
    double* gk = grads.kernels.data().data();
    const std::size_t plane = g.out_h * g.out_w;

    for (std::size_t co = 0; co < g.out_channels; ++co) {
        const double* gplane = go + co * plane;
        double bsum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) bsum += gplane[i];
        grads.bias[co] = bsum;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            const double* iplane = in + ci * g.in_h * g.in_w;
            double* giplane = gi + ci * g.in_h * g.in_w;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto [oy_lo, oy_hi] = valid_range(static_cast<std::ptrdiff_t>(ky), p, s,
                                                        static_cast<std::ptrdiff_t>(g.in_h),
                                                        static_cast<std::ptrdiff_t>(g.out_h));
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const std::size_t kidx = ((co * g.in_channels + ci) * g.kh + ky) * g.kw + kx;
                    const double w = kern[kidx];
                    const auto [ox_lo, ox_hi] = valid_range(static_cast<std::ptrdiff_t>(kx), p, s,
                                                            static_cast<std::ptrdiff_t>(g.in_w),
                                                            static_cast<std::ptrdiff_t>(g.out_w));
                    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - p;
                    double wsum = 0.0;
                    for (std::ptrdiff_t oy = oy_lo; oy < oy_hi; ++oy) {
                        const std::ptrdiff_t row = (oy * s + static_cast<std::ptrdiff_t>(ky) - p) *
                                                   static_cast<std::ptrdiff_t>(g.in_w);
                        const double* irow = iplane + row;
                        double* girow = giplane + row;
                        const double* grow = gplane + oy * static_cast<std::ptrdiff_t>(g.out_w);
                        if (s == 1) {
                            for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) {
                                wsum += grow[ox] * irow[ox + shift];
                                girow[ox + shift] += w * grow[ox];
                            }
                        } else {
                            for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) {
                                wsum += grow[ox] * irow[ox * s + shift];
                                girow[ox * s + shift] += w * grow[ox];
                            }
                        }
                    }
                    gk[kidx] = wsum;
                }
            }
        }
    }
    return grads;
}

MaxPoolResult maxpool2x2_with_indices(const Tensor& input) {
    require_rank(input, 3, "maxpool2x2 input");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("maxpool2x2 requires even height and width, got " + shape_string(input.shape()));
    }
    MaxPoolResult result{Tensor({c, h / 2, w / 2}), {}};
    result.argmax.resize(result.output.size());
    std::size_t o = 0;
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t y = 0; y < h; y += 2) {
            for (std::size_t x = 0; x < w; x += 2, ++o) {
                // scan order: (0,0) (0,1) (1,0) (1,1); strict > keeps the first maximum
                std::size_t best = (k * h + y) * w + x;
                for (std::size_t idx : {best + 1, best + w, best + w + 1}) {
                    if (input[idx] > input[best]) best = idx;
                }
                result.output[o] = input[best];
                result.argmax[o] = best;
            }
        }
    }
    return result;
}

Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                           const Tensor& grad_output) {
    if (argmax.size() != grad_output.size()) throw DimensionError("maxpool2x2 backward: gradient size mismatch");
    Tensor grad(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) grad[argmax[o]] += grad_output[o];
    return grad;
}

Tensor global_avg_pool(const Tensor& input) {
    require_rank(input, 3, "global_avg_pool input");
    const std::size_t k = input.dim(0), z = input.dim(1) * input.dim(2);
    Tensor out({k});
    for (std::size_t c = 0; c < k; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < z; ++i) sum += input[c * z + i];
        out[c] = sum / static_cast<double>(z);
    }
    return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output) {
    if (input_shape.size() != 3 || grad_output.shape() != Shape{input_shape[0]}) {
        throw DimensionError("global_avg_pool backward: shape mismatch");
    }
    Tensor grad(input_shape);
    const std::size_t z = input_shape[1] * input_shape[2];
    for (std::size_t c = 0; c < input_shape[0]; ++c) {
        const double g = grad_output[c] / static_cast<double>(z);
        for (std::size_t i = 0; i < z; ++i) grad[c * z + i] = g;
    }
    return grad;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    require_rank(input, 1, "dense input");
    require_rank(weights, 2, "dense weights");
    require_rank(bias, 1, "dense bias");
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    if (input.dim(0) != n) {
        throw DimensionError("dense: weights have " + std::to_string(n) + " columns, input has length " +
                             std::to_string(input.dim(0)));
    }
    if (bias.dim(0) != m) throw DimensionError("dense: bias length does not match weight rows");
    Tensor out({m});
    for (std::size_t r = 0; r < m; ++r) {
        double sum = bias[r];
        for (std::size_t c = 0; c < n; ++c) sum += weights(r, c) * input[c];
        out[r] = sum;
    }
    return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output) {
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    if (grad_output.shape() != Shape{m} || input.shape() != Shape{n}) {
        throw DimensionError("dense backward: shape mismatch");
    }
    DenseGrads grads{Tensor({n}), Tensor({m, n}), grad_output};
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            grads.weights(r, c) = grad_output[r] * input[c];
            grads.input[c] += weights(r, c) * grad_output[r];
        }
    }
    return grads;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
    require_same_shape(input, grad_output, "relu backward");
    Tensor grad(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) grad[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
    return grad;
}

Tensor sigmoid(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_output) {
    require_same_shape(output, grad_output, "sigmoid backward");
    Tensor grad(output.shape());
    for (std::size_t i = 0; i < output.size(); ++i) grad[i] = grad_output[i] * output[i] * (1.0 - output[i]);
    return grad;
}

Tensor dropout_mask(const Shape& shape, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must lie in [0, 1)");
    Tensor mask(shape);
    Rng rng(seed);
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& v : mask.data()) v = rng.uniform() < p ? 0.0 : keep_scale;
    return mask;
}

Tensor dropout(const Tensor& input, double p, std::uint64_t seed, bool train_mode) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must lie in [0, 1)");
    if (!train_mode) return input;
    const Tensor mask = dropout_mask(input.shape(), p, seed);
    Tensor out = input;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return out;
}

}  // namespace lesionmap::ops
