#pragma once

#include <vector>

#include "lesionmap/image.hpp"
#include "lesionmap/model.hpp"

namespace lesionmap {

struct Preprocessing {
    bool use_clahe = false;
    TileGrid tiles{};
    double clip_factor = 2.0;
    // "standard normalisation"; the exact constants are a configurable default
    std::vector<double> mean{0.5};
    std::vector<double> stddev{0.5};
};

/// CLAHE (optional), resize to the model input and channel conversion.
Image prepare_image(const Image& img, const ModelConfig& config, const Preprocessing& pre);

/// prepare_image followed by normalization to a [C,H,W] tensor.
Tensor model_input(const Image& img, const ModelConfig& config, const Preprocessing& pre);

}  // namespace lesionmap
