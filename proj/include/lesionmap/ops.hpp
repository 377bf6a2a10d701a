#pragma once

#include <cstdint>
#include <vector>

#include "lesionmap/tensor.hpp"

// Differentiable layer primitives. Forward functions are pure; each has a
// matching backward that maps the output gradient to input/parameter gradients.
namespace lesionmap::ops {

/// Cross-correlation (no kernel flip) of a [C_in,H,W] input with [C_out,C_in,kh,kw] kernels.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride, int padding);

struct Conv2dGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output, int stride,
                            int padding);

struct MaxPoolResult {
    Tensor output;
    std::vector<std::size_t> argmax;  // flat input index feeding each output cell
};
MaxPoolResult maxpool2x2_with_indices(const Tensor& input);
inline Tensor maxpool2x2(const Tensor& input) { return maxpool2x2_with_indices(input).output; }
Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                           const Tensor& grad_output);

/// [K,H,W] -> [K], mean over the spatial positions.
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output);

/// W·x + b for x:[n], W:[m,n], b:[m].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};
DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

Tensor sigmoid(const Tensor& input);
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_output);

/// Inverted-dropout multipliers: 0 with probability p, 1/(1-p) otherwise.
Tensor dropout_mask(const Shape& shape, double p, std::uint64_t seed);
Tensor dropout(const Tensor& input, double p, std::uint64_t seed, bool train_mode);

}  // namespace lesionmap::ops
