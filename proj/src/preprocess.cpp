#include "lesionmap/preprocess.hpp"

#include <stdexcept>

namespace lesionmap {

Image prepare_image(const Image& img, const ModelConfig& config, const Preprocessing& pre) {
    Image out = pre.use_clahe ? clahe(img, pre.tiles, pre.clip_factor) : img;
    if (out.height != config.input_height || out.width != config.input_width) {
        out = resize_bilinear(out, config.input_height, config.input_width);
    }
    if (out.channels != config.input_channels) {
        if (config.input_channels == 3) {
            out = to_rgb(out);
        } else if (config.input_channels == 1) {
            out = luma_image(out);
        } else {
            throw std::invalid_argument("model expects " + std::to_string(config.input_channels) +
                                        " input channels; images provide 1 or 3");
        }
    }
    return out;
}

Tensor model_input(const Image& img, const ModelConfig& config, const Preprocessing& pre) {
    return normalize(prepare_image(img, config, pre), pre.mean, pre.stddev);
}

}  // namespace lesionmap
