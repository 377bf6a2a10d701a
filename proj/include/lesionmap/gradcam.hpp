#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lesionmap/dataset.hpp"
#include "lesionmap/image.hpp"
#include "lesionmap/model.hpp"
#include "lesionmap/tensor.hpp"

namespace lesionmap {

/// Normalized localisation map in [0,1], sized to the image it annotates.
struct Heatmap {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // row-major
    int source_class = -1;

    double at(int y, int x) const {
        return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
    /// Row-major index of the first maximum.
    std::size_t argmax() const;
};

/// d logit_c / d A^k_ij at the model's feature layer, dropout in inference mode.
Tensor feature_gradients(const ModelGraph& model, const Tensor& x, int target_class);

/// alpha_k = (1/Z) sum_ij grads[k,i,j].
Tensor neuron_importance(const Tensor& grads);

/// max(0, sum_k alpha_k features[k,i,j]) as an [H,W] tensor.
Tensor gradcam_map(const Tensor& alpha, const Tensor& features);

/// Bilinear upsample (half-pixel centers) followed by min-max scaling.
/// A constant map, including all zeros, becomes all zeros.
Heatmap upsample_and_normalize(const Tensor& map, int out_h, int out_w, int source_class = -1);

/// Everything produced while explaining one input.
struct Explanation {
    int target_class = 0;
    Tensor scores;    // post-sigmoid
    Tensor logits;
    Tensor features;  // A^k
    Tensor gradients; // d y^c / d A^k
    Tensor alpha;
    Tensor map;       // coarse [H,W] map before upsampling
};

/// Runs the full pipeline; target_class < 0 selects the argmax score.
Explanation explain(const ModelGraph& model, const Tensor& x, int target_class = -1);

/// blue -> green on [0, 0.5], green -> red on [0.5, 1].
std::array<std::uint8_t, 3> colormap(double v);

/// round((1 - blend) * pixel + blend * colormap(v)); gray input is expanded to RGB.
Image overlay(const Image& img, const Heatmap& hm, double blend = 0.4);

/// Heatmap rendered as an 8-bit gray image (value * 255, rounded).
Image heatmap_image(const Heatmap& hm);

/// True when the heatmap argmax lies inside one of the boxes grown by `margin` px on every side.
bool peak_in_boxes(const Heatmap& hm, const std::vector<LesionBox>& boxes, int margin);

}  // namespace lesionmap
