#include <doctest.h>

#include <cmath>

#include "lesionmap/gradcheck.hpp"
#include "lesionmap/ops.hpp"
#include "lesionmap/random.hpp"
#include "lesionmap/tape.hpp"
#include "support.hpp"

using namespace lesionmap;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

// Six nested loops over (o, c, y, x, ky, kx) with explicit zero padding.
Tensor conv2d_loops(const Tensor& in, const Tensor& k, const Tensor& b, int stride, int pad) {
    const int C = static_cast<int>(in.dim(0)), H = static_cast<int>(in.dim(1)), W = static_cast<int>(in.dim(2));
    const int O = static_cast<int>(k.dim(0)), KH = static_cast<int>(k.dim(2)), KW = static_cast<int>(k.dim(3));
    const int OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
    Tensor out({static_cast<std::size_t>(O), static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
    for (int o = 0; o < O; ++o)
        for (int y = 0; y < OH; ++y)
            for (int x = 0; x < OW; ++x) {
                double acc = b[static_cast<std::size_t>(o)];
                for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < KH; ++ky)
                        for (int kx = 0; kx < KW; ++kx) {
                            const int iy = y * stride + ky - pad, ix = x * stride + kx - pad;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += in(c, iy, ix) * k[((static_cast<std::size_t>(o) * C + c) * KH + ky) * KW + kx];
                        }
                out(o, y, x) = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("tensor keeps data length equal to the shape product") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.rank() == 3);
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), DimensionError);
}

TEST_CASE("conv2d of ones with a 2x2 ones kernel sums four ones") {
    const Tensor out = ops::conv2d(Tensor({1, 3, 3}, 1.0), Tensor({1, 1, 2, 2}, 1.0), Tensor({1}), 1, 0);
    REQUIRE(out.shape() == Shape{1, 2, 2});
    for (double v : out.data()) CHECK(v == 4.0);
}

TEST_CASE("conv2d with a unit 1x1 kernel is the identity") {
    Rng rng(11);
    const Tensor x = random_tensor({1, 4, 5}, rng);
    CHECK(ops::conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0) == x);
}

TEST_CASE("conv2d matches the nested-loop reference") {
    Rng rng(12);
    const Tensor x = random_tensor({2, 5, 5}, rng);
    const Tensor k = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    const Tensor out = ops::conv2d(x, k, b, 1, 1);
    REQUIRE(out.shape() == Shape{3, 5, 5});
    CHECK(max_abs_difference(out, conv2d_loops(x, k, b, 1, 1)) <= 1e-12);

    const Tensor strided = ops::conv2d(x, k, b, 2, 1);
    CHECK(strided.shape() == Shape{3, 3, 3});
    CHECK(max_abs_difference(strided, conv2d_loops(x, k, b, 2, 1)) <= 1e-12);
}

TEST_CASE("conv2d does not flip the kernel") {
    // input is a single bright pixel at the top-left; correlation puts the
    // kernel's bottom-right tap on it for the first output cell
    Tensor x({1, 2, 2});
    x(0, 0, 0) = 1.0;
    Tensor k({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(ops::conv2d(x, k, Tensor({1}), 1, 0)[0] == 1.0);
    CHECK(ops::conv2d(x, k, Tensor({1}), 1, 1)[0] == 4.0);
}

TEST_CASE("conv2d rejects mismatched channels and oversized kernels") {
    CHECK_THROWS_AS(ops::conv2d(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1, 0), DimensionError);
    CHECK_THROWS_AS(ops::conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), 1, 0), DimensionError);
    CHECK_THROWS(ops::conv2d(Tensor({1, 4, 4}), Tensor({1, 1, 3, 3}), Tensor({1}), 0, 0));
}

TEST_CASE("conv2d is linear in its input for bias-free kernels") {
    Rng rng(13);
    const Tensor x = random_tensor({2, 6, 6}, rng), y = random_tensor({2, 6, 6}, rng);
    const Tensor k = random_tensor({3, 2, 3, 3}, rng), zero({3});
    const double a = 1.7, b = -0.4;
    Tensor mix = x;
    mix *= a;
    Tensor yb = y;
    yb *= b;
    mix += yb;
    Tensor expected = ops::conv2d(x, k, zero, 1, 1);
    expected *= a;
    Tensor rhs = ops::conv2d(y, k, zero, 1, 1);
    rhs *= b;
    expected += rhs;
    CHECK(max_abs_difference(ops::conv2d(mix, k, zero, 1, 1), expected) <= 1e-10);
}

TEST_CASE("maxpool picks the window maximum") {
    const Tensor out = ops::maxpool2x2(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
    REQUIRE(out.size() == 1);
    CHECK(out[0] == 4.0);
    const Tensor flat = ops::maxpool2x2(Tensor({2, 4, 6}, 3.25));
    CHECK(flat.shape() == Shape{2, 2, 3});
    for (double v : flat.data()) CHECK(v == 3.25);
    CHECK_THROWS_AS(ops::maxpool2x2(Tensor({1, 3, 4})), DimensionError);
    CHECK_THROWS_AS(ops::maxpool2x2(Tensor({1, 4, 3})), DimensionError);
}

TEST_CASE("maxpool backward routes one unit per window, first in scan order on ties") {
    Rng rng(14);
    const Tensor x = random_tensor({3, 6, 8}, rng);
    const auto pooled = ops::maxpool2x2_with_indices(x);
    const Tensor g = ops::maxpool2x2_backward(x.shape(), pooled.argmax, Tensor(pooled.output.shape(), 1.0));
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                double sum = 0.0;
                std::size_t hot_y = 0, hot_x = 0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        sum += g(c, 2 * i + dy, 2 * j + dx);
                        if (g(c, 2 * i + dy, 2 * j + dx) == 1.0) hot_y = 2 * i + dy, hot_x = 2 * j + dx;
                    }
                CHECK(sum == 1.0);
                CHECK(x(c, hot_y, hot_x) == pooled.output(c, i, j));
            }

    const Tensor ties({1, 2, 2}, 5.0);
    const auto tp = ops::maxpool2x2_with_indices(ties);
    const Tensor tg = ops::maxpool2x2_backward(ties.shape(), tp.argmax, Tensor({1, 1, 1}, 1.0));
    CHECK(tg.values() == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("global average pooling") {
    CHECK(ops::global_avg_pool(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}))[0] == 2.5);
    CHECK(ops::global_avg_pool(Tensor({1, 3, 5}, -1.5))[0] == -1.5);
    const Tensor g = ops::global_avg_pool_backward({1, 2, 2}, Tensor::vector({1.0}));
    for (double v : g.data()) CHECK(v == 0.25);
}

TEST_CASE("dense layer") {
    const Tensor x = Tensor::vector({1, 2});
    CHECK(ops::dense(x, Tensor({2, 2}, std::vector<double>{1, 0, 0, 1}), Tensor({2})) == x);
    CHECK(ops::dense(x, Tensor({2, 2}, std::vector<double>{1, 1, 0, 1}), Tensor::vector({0, 1})).values() ==
          std::vector<double>{3, 3});
    CHECK_THROWS_AS(ops::dense(x, Tensor({2, 3}), Tensor({2})), DimensionError);

    Rng rng(15);
    const Tensor v = random_tensor({7}, rng), w = random_tensor({4, 7}, rng), b = random_tensor({4}, rng);
    const Tensor out = ops::dense(v, w, b);
    for (std::size_t m = 0; m < 4; ++m) {
        double acc = b[m];
        for (std::size_t n = 0; n < 7; ++n) acc += w(m, n) * v[n];
        CHECK(std::abs(out[m] - acc) <= 1e-12);
    }
}

TEST_CASE("activations") {
    CHECK(ops::relu(Tensor::vector({-1, 0, 2})).values() == std::vector<double>{0, 0, 2});
    CHECK(ops::sigmoid(Tensor::vector({0}))[0] == 0.5);
    const Tensor big = ops::sigmoid(Tensor::vector({-800, 800}));
    CHECK(big.all_finite());
    CHECK(big[0] >= 0.0);
    CHECK(big[1] <= 1.0);
}

TEST_CASE("dropout is the identity in inference mode and deterministic in training mode") {
    Rng rng(16);
    const Tensor x = random_tensor({4, 8, 8}, rng);
    CHECK(ops::dropout(x, 0.5, 99, false) == x);
    const Tensor a = ops::dropout(x, 0.5, 99, true), b = ops::dropout(x, 0.5, 99, true);
    CHECK(a == b);
    CHECK(ops::dropout_mask(x.shape(), 0.5, 99) == ops::dropout_mask(x.shape(), 0.5, 99));
    CHECK_FALSE(ops::dropout_mask(x.shape(), 0.5, 99) == ops::dropout_mask(x.shape(), 0.5, 100));
    const Tensor mask = ops::dropout_mask({10000}, 0.5, 3);
    std::size_t kept = 0;
    for (double m : mask.data()) {
        CHECK((m == 0.0 || m == 2.0));
        kept += m != 0.0;
    }
    CHECK(kept > 4800);
    CHECK(kept < 5200);
    CHECK_THROWS(ops::dropout(x, 1.0, 1, true));
}

TEST_CASE("backward through a single dense layer gives the outer product") {
    Tape tape;
    const auto x = tape.leaf(Tensor::vector({1.0, -2.0, 0.5}));
    const auto w = tape.leaf(Tensor({2, 3}, 0.1));
    const auto b = tape.leaf(Tensor({2}));
    const auto y = tape.dense(x, w, b);
    const Tensor seed = Tensor::vector({3.0, -1.0});
    const Gradients g = backward(tape, seed);
    for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t n = 0; n < 3; ++n) CHECK(g.at(w)(m, n) == seed[m] * tape.value(x)[n]);
    CHECK(g.at(b) == seed);
    CHECK(g.at(y) == seed);
    CHECK_THROWS_AS(backward(tape, Tensor({3})), DimensionError);
}

TEST_CASE("relu backward zeroes the gradient where the input is negative") {
    const Tensor x = Tensor::vector({-2.0, 3.0, -0.1, 4.0});
    const Tensor g = ops::relu_backward(x, Tensor({4}, 1.0));
    CHECK(g.values() == std::vector<double>{0, 1, 0, 1});
}

TEST_CASE("backward visits ops in exact reverse order and gradients keep value shapes") {
    Rng rng(17);
    Tape tape;
    const auto x = tape.leaf(random_tensor({2, 4, 4}, rng));
    const auto k = tape.leaf(random_tensor({3, 2, 3, 3}, rng));
    const auto kb = tape.leaf(random_tensor({3}, rng));
    auto h = tape.conv2d(x, k, kb, 1, 1);
    h = tape.relu(h);
    h = tape.maxpool2x2(h);
    h = tape.global_avg_pool(h);
    h = tape.dropout(h, 0.5, 5, true);
    const auto w = tape.leaf(random_tensor({2, 3}, rng));
    const auto wb = tape.leaf(random_tensor({2}, rng));
    h = tape.dense(h, w, wb);
    tape.sigmoid(h);
    const Gradients g = backward(tape, Tensor({2}, 1.0));
    const std::vector<std::size_t> expected{6, 5, 4, 3, 2, 1, 0};
    CHECK(g.visit_order() == expected);
    for (ValueId id = 0; id < tape.value_count(); ++id) {
        REQUIRE(g.has(id));
        CHECK(g.at(id).shape() == tape.value(id).shape());
    }
}

TEST_CASE("dense after GAP has input gradient W[c,k]/Z everywhere") {
    Rng rng(18);
    Tape tape;
    const auto a = tape.leaf(random_tensor({4, 3, 5}, rng));
    const auto w = tape.leaf(random_tensor({2, 4}, rng));
    const auto b = tape.leaf(random_tensor({2}, rng));
    tape.dense(tape.global_avg_pool(a), w, b);
    const Gradients g = backward(tape, Tensor::vector({0.0, 1.0}));
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(g.at(a)(k, i, j) - tape.value(w)(1, k) / 15.0) <= 1e-10);
}

TEST_CASE("finite differences") {
    const Tensor g = finite_difference_gradient(
        [](const Tensor& t) {
            double s = 0.0;
            for (double v : t.data()) s += v * v;
            return s;
        },
        Tensor::vector({1.0, 2.0}));
    CHECK(std::abs(g[0] - 2.0) <= 1e-6);
    CHECK(std::abs(g[1] - 4.0) <= 1e-6);
    const Tensor zero = finite_difference_gradient([](const Tensor&) { return 3.0; }, Tensor({5}, 1.0));
    for (double v : zero.data()) CHECK(v == 0.0);
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(0.0, 0.0) == 0.0);
    CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("parameter gradients of random three-layer nets match finite differences") {
    int checked = 0;
    for (std::uint64_t seed = 1; checked < 10; ++seed) {
        const auto net = testsupport::random_net(seed);
        if (!net) continue;
        const auto result = testsupport::check_net_gradients(*net);
        INFO("seed " << seed);
        CHECK(result.max_relative_error <= 1e-4);
        ++checked;
    }
}
