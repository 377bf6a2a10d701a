#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "lesionmap/gradcheck.hpp"
#include "lesionmap/image.hpp"
#include "lesionmap/ops.hpp"
#include "lesionmap/random.hpp"
#include "lesionmap/tape.hpp"

namespace testsupport {

using lesionmap::Rng;
using lesionmap::Shape;
using lesionmap::Tensor;
namespace ops = lesionmap::ops;

// conv -> relu -> maxpool -> conv -> relu -> GAP -> dense -> sigmoid, scored
// by a fixed random projection of the sigmoid outputs.
struct RandomNet {
    Tensor x;
    std::vector<Tensor> params;  // conv1.k, conv1.b, conv2.k, conv2.b, dense.w, dense.b
    Tensor projection;
};

inline Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline std::size_t parameter_count(const RandomNet& net) {
    std::size_t n = 0;
    for (const auto& p : net.params) n += p.size();
    return n;
}

// Distance of the forward pass from the nearest non-differentiable point:
// the smallest |relu input| and the smallest gap between the top two entries
// of any max-pool window.
inline double kink_margin(const RandomNet& net) {
    double margin = INFINITY;
    auto relu_margin = [&](const Tensor& t) {
        for (double v : t.data()) margin = std::min(margin, std::abs(v));
    };
    const Tensor c1 = ops::conv2d(net.x, net.params[0], net.params[1], 1, 1);
    relu_margin(c1);
    const Tensor r1 = ops::relu(c1);
    const std::size_t C = r1.dim(0), H = r1.dim(1), W = r1.dim(2);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H; i += 2)
            for (std::size_t j = 0; j < W; j += 2) {
                double w[4] = {r1(c, i, j), r1(c, i, j + 1), r1(c, i + 1, j), r1(c, i + 1, j + 1)};
                std::sort(w, w + 4);
                // a window whose top entries are all clamped zeros has zero gradient either way
                if (w[3] > 0.0) margin = std::min(margin, w[3] - w[2]);
            }
    const Tensor c2 = ops::conv2d(ops::maxpool2x2(r1), net.params[2], net.params[3], 1, 1);
    relu_margin(c2);
    return margin;
}

inline std::optional<RandomNet> random_net(std::uint64_t seed, double min_margin = 1e-3) {
    Rng rng(seed);
    const std::size_t cin = 1 + rng.index(3), h = 2 * (2 + rng.index(3)), w = 2 * (2 + rng.index(3));
    const std::size_t c1 = 2 + rng.index(3), c2 = 2 + rng.index(4), k = 2 + rng.index(4);
    RandomNet net;
    net.x = uniform_tensor({cin, h, w}, rng, -1.0, 1.0);
    net.params.push_back(uniform_tensor({c1, cin, 3, 3}, rng, -0.6, 0.6));
    net.params.push_back(uniform_tensor({c1}, rng, -0.2, 0.2));
    net.params.push_back(uniform_tensor({c2, c1, 3, 3}, rng, -0.6, 0.6));
    net.params.push_back(uniform_tensor({c2}, rng, -0.2, 0.2));
    net.params.push_back(uniform_tensor({k, c2}, rng, -1.0, 1.0));
    net.params.push_back(uniform_tensor({k}, rng, -0.5, 0.5));
    net.projection = uniform_tensor({k}, rng, -1.0, 1.0);
    if (kink_margin(net) < min_margin) return std::nullopt;
    return net;
}

// Plain forward evaluation with the free functions; this is what the finite
// differences perturb.
inline double net_objective(const RandomNet& net, const std::vector<Tensor>& p, const Tensor& x) {
    Tensor h = ops::relu(ops::conv2d(x, p[0], p[1], 1, 1));
    h = ops::maxpool2x2(h);
    h = ops::relu(ops::conv2d(h, p[2], p[3], 1, 1));
    h = ops::sigmoid(ops::dense(ops::global_avg_pool(h), p[4], p[5]));
    double s = 0.0;
    for (std::size_t c = 0; c < h.size(); ++c) s += net.projection[c] * h[c];
    return s;
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
};

inline GradCheckResult check_net_gradients(const RandomNet& net, double h = 1e-5) {
    lesionmap::Tape tape;
    const auto x = tape.leaf(net.x);
    std::vector<lesionmap::ValueId> ids;
    for (const auto& p : net.params) ids.push_back(tape.leaf(p));
    auto v = tape.relu(tape.conv2d(x, ids[0], ids[1], 1, 1));
    v = tape.maxpool2x2(v);
    v = tape.relu(tape.conv2d(v, ids[2], ids[3], 1, 1));
    v = tape.sigmoid(tape.dense(tape.global_avg_pool(v), ids[4], ids[5]));
    const lesionmap::Gradients g = lesionmap::backward(tape, v, net.projection);

    GradCheckResult result;
    for (std::size_t k = 0; k < net.params.size(); ++k) {
        auto params = net.params;
        const Tensor fd = lesionmap::finite_difference_gradient(
            [&](const Tensor& t) {
                params[k] = t;
                return net_objective(net, params, net.x);
            },
            net.params[k], h);
        result.max_relative_error = std::max(result.max_relative_error, lesionmap::max_relative_error(g.at(ids[k]), fd));
        result.coordinates += fd.size();
    }
    const Tensor fdx = lesionmap::finite_difference_gradient(
        [&](const Tensor& t) { return net_objective(net, net.params, t); }, net.x, h);
    result.max_relative_error = std::max(result.max_relative_error, lesionmap::max_relative_error(g.at(x), fdx));
    result.coordinates += fdx.size();
    return result;
}

// Whole-image histogram equalization: m(v) = round(255 * CDF(v) / N).
inline lesionmap::Image global_equalization(const lesionmap::Image& gray) {
    std::array<std::uint64_t, 256> hist{};
    for (auto p : gray.pixels) ++hist[p];
    const double n = static_cast<double>(gray.pixels.size());
    std::array<std::uint8_t, 256> map{};
    std::uint64_t cdf = 0;
    for (int v = 0; v < 256; ++v) {
        cdf += hist[static_cast<std::size_t>(v)];
        map[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(std::floor(255.0 * static_cast<double>(cdf) / n + 0.5));
    }
    lesionmap::Image out = gray;
    for (auto& p : out.pixels) p = map[p];
    return out;
}

}  // namespace testsupport
