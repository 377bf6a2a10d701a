#include "lesionmap/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lesionmap {

std::size_t Heatmap::argmax() const {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

namespace {

void check_class(const ModelGraph& model, int target_class) {
    if (target_class < 0 || target_class >= model.config().num_classes) {
        throw std::out_of_range("class index " + std::to_string(target_class) + " is outside [0, " +
                                std::to_string(model.config().num_classes) + ")");
    }
}

Tensor one_hot(std::size_t n, int index) {
    Tensor t({n});
    t[static_cast<std::size_t>(index)] = 1.0;
    return t;
}

int argmax_class(const Tensor& scores) {
    return static_cast<int>(std::max_element(scores.data().begin(), scores.data().end()) - scores.data().begin());
}

}  // namespace

Tensor feature_gradients(const ModelGraph& model, const Tensor& x, int target_class) {
    check_class(model, target_class);
    const ForwardPass pass = model.forward(x, false);
    const auto grads = backward(pass.tape, pass.logits, one_hot(pass.logit_values().size(), target_class));
    return grads.at(pass.features);
}

Tensor neuron_importance(const Tensor& grads) {
    require_rank(grads, 3, "neuron_importance gradients");
    const std::size_t k = grads.dim(0), z = grads.dim(1) * grads.dim(2);
    Tensor alpha({k});
    for (std::size_t c = 0; c < k; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < z; ++i) sum += grads[c * z + i];
        alpha[c] = sum / static_cast<double>(z);
    }
    return alpha;
}

Tensor gradcam_map(const Tensor& alpha, const Tensor& features) {
    require_rank(alpha, 1, "gradcam alpha");
    require_rank(features, 3, "gradcam features");
    if (alpha.dim(0) != features.dim(0)) {
        throw DimensionError("gradcam: " + std::to_string(alpha.dim(0)) + " weights for " +
                             std::to_string(features.dim(0)) + " feature maps");
    }
    const std::size_t h = features.dim(1), w = features.dim(2), z = h * w;
    Tensor map({h, w});
    for (std::size_t k = 0; k < alpha.dim(0); ++k) {
        const double a = alpha[k];
        for (std::size_t i = 0; i < z; ++i) map[i] += a * features[k * z + i];
    }
    for (auto& v : map.data()) v = std::max(0.0, v);
    return map;
}

Heatmap upsample_and_normalize(const Tensor& map, int out_h, int out_w, int source_class) {
    require_rank(map, 2, "heatmap");
    const int in_h = static_cast<int>(map.dim(0)), in_w = static_cast<int>(map.dim(1));
    if (out_h < in_h || out_w < in_w) throw std::invalid_argument("heatmap upsampling target is smaller than the map");

    Heatmap hm;
    hm.height = out_h;
    hm.width = out_w;
    hm.source_class = source_class;
    hm.values.resize(static_cast<std::size_t>(out_h) * static_cast<std::size_t>(out_w));

    const double sy = static_cast<double>(in_h) / out_h, sx = static_cast<double>(in_w) / out_w;
    auto coord = [](int dst, double scale, int extent, int& i0, int& i1, double& f) {
        const double s = std::clamp((dst + 0.5) * scale - 0.5, 0.0, static_cast<double>(extent - 1));
        i0 = static_cast<int>(std::floor(s));
        i1 = std::min(i0 + 1, extent - 1);
        f = s - i0;
    };
    auto m = [&](int y, int x) { return map(static_cast<std::size_t>(y), static_cast<std::size_t>(x)); };
    for (int y = 0; y < out_h; ++y) {
        int y0, y1;
        double fy;
        coord(y, sy, in_h, y0, y1, fy);
        for (int x = 0; x < out_w; ++x) {
            int x0, x1;
            double fx;
            coord(x, sx, in_w, x0, x1, fx);
            const double top = (1.0 - fx) * m(y0, x0) + fx * m(y0, x1);
            const double bottom = (1.0 - fx) * m(y1, x0) + fx * m(y1, x1);
            hm.values[static_cast<std::size_t>(y * out_w + x)] = (1.0 - fy) * top + fy * bottom;
        }
    }

    const auto [lo_it, hi_it] = std::minmax_element(hm.values.begin(), hm.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
        std::fill(hm.values.begin(), hm.values.end(), 0.0);
    } else {
        for (auto& v : hm.values) v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    }
    return hm;
}

Explanation explain(const ModelGraph& model, const Tensor& x, int target_class) {
    const ForwardPass pass = model.forward(x, false);
    Explanation e;
    e.scores = pass.score_values();
    e.logits = pass.logit_values();
    e.features = pass.feature_maps();
    e.target_class = target_class < 0 ? argmax_class(e.scores) : target_class;
    check_class(model, e.target_class);
    const auto grads = backward(pass.tape, pass.logits, one_hot(e.logits.size(), e.target_class));
    e.gradients = grads.at(pass.features);
    e.alpha = neuron_importance(e.gradients);
    e.map = gradcam_map(e.alpha, e.features);
    return e;
}

std::array<std::uint8_t, 3> colormap(double v) {
    v = std::clamp(v, 0.0, 1.0);
    auto level = [](double t) { return static_cast<std::uint8_t>(std::lround(255.0 * t)); };
    if (v <= 0.5) {
        const double t = v / 0.5;
        return {0, level(t), level(1.0 - t)};
    }
    const double t = (v - 0.5) / 0.5;
    return {level(t), level(1.0 - t), 0};
}

Image overlay(const Image& img, const Heatmap& hm, double blend) {
    if (!(blend >= 0.0 && blend <= 1.0)) throw std::invalid_argument("overlay blend must lie in [0, 1]");
    if (hm.height != img.height || hm.width != img.width) {
        throw DimensionError("overlay: heatmap " + std::to_string(hm.height) + "x" + std::to_string(hm.width) +
                             " does not match image " + std::to_string(img.height) + "x" + std::to_string(img.width));
    }
    Image out = to_rgb(img);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const auto color = colormap(hm.at(y, x));
            for (int c = 0; c < 3; ++c) {
                const double v = (1.0 - blend) * out.at(y, x, c) + blend * color[static_cast<std::size_t>(c)];
                out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

Image heatmap_image(const Heatmap& hm) {
    Image out(hm.height, hm.width, 1);
    for (std::size_t i = 0; i < hm.values.size(); ++i) {
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * hm.values[i]), 0L, 255L));
    }
    return out;
}

bool peak_in_boxes(const Heatmap& hm, const std::vector<LesionBox>& boxes, int margin) {
    if (hm.values.empty()) return false;
    const std::size_t peak = hm.argmax();
    const int y = static_cast<int>(peak / static_cast<std::size_t>(hm.width));
    const int x = static_cast<int>(peak % static_cast<std::size_t>(hm.width));
    return std::any_of(boxes.begin(), boxes.end(), [&](const LesionBox& b) { return b.contains(x, y, margin); });
}

}  // namespace lesionmap
