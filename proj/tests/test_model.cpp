#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "lesionmap/file_util.hpp"
#include "lesionmap/model.hpp"
#include "lesionmap/ops.hpp"
#include "lesionmap/random.hpp"

using namespace lesionmap;
namespace fs = std::filesystem;

namespace {

Tensor random_input(const ModelGraph& m, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x(m.input_shape());
    for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
    return x;
}

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "lesionmap_test_model";
    fs::create_directories(dir);
    return dir / name;
}

WeightFileErrorKind load_error_kind(const std::vector<std::uint8_t>& bytes, const ModelConfig& config,
                                    std::string* message = nullptr) {
    try {
        deserialize_weights(bytes, config);
    } catch (const WeightFileError& e) {
        if (message) *message = e.what();
        return e.kind();
    }
    FAIL("deserialize_weights did not throw");
    return WeightFileErrorKind::io_failure;
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return std::uint32_t{b[at]} | std::uint32_t{b[at + 1]} << 8 | std::uint32_t{b[at + 2]} << 16 |
           std::uint32_t{b[at + 3]} << 24;
}

}  // namespace

TEST_CASE("DeskNet shapes") {
    const ModelGraph m = build_model(desknet_config(), 1);
    CHECK(m.input_shape() == Shape{3, 64, 64});
    CHECK(m.feature_shape() == Shape{32, 16, 16});
    const ForwardPass pass = m.forward(random_input(m, 2));
    CHECK(pass.feature_maps().shape() == m.feature_shape());
    CHECK(pass.feature_maps().dim(1) * pass.feature_maps().dim(2) == 256);
    CHECK(pass.logit_values().shape() == Shape{5});
    CHECK(pass.score_values().shape() == Shape{5});
    CHECK(m.head_dense_name() == "dense1");
    CHECK(m.parameter("dense1.weight").shape() == Shape{5, 32});
    CHECK(m.parameter("conv1.weight").shape() == Shape{8, 3, 3, 3});
    CHECK(m.parameter_count() == (8 * 27 + 8) + (16 * 72 + 16) + (32 * 144 + 32) + (5 * 32 + 5));

    const ModelGraph three = build_model(desknet_config(3), 1);
    CHECK(three.forward(random_input(three, 2)).logit_values().size() == 3);
}

TEST_CASE("initialization is He-uniform, deterministic per seed, biases zero") {
    const ModelGraph a = build_model(desknet_config(), 42), b = build_model(desknet_config(), 42);
    const ModelGraph c = build_model(desknet_config(), 43);
    REQUIRE(a.parameters().size() == b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(a.parameters()[i].value == b.parameters()[i].value);
    CHECK_FALSE(a.parameter("conv1.weight") == c.parameter("conv1.weight"));
    CHECK(serialize_weights(a) == serialize_weights(b));

    const Tensor& w = a.parameter("conv2.weight");
    const double limit = std::sqrt(6.0 / (8 * 3 * 3));
    for (double v : w.data()) CHECK(std::abs(v) <= limit);
    for (double v : a.parameter("conv2.bias").data()) CHECK(v == 0.0);
}

TEST_CASE("inference is deterministic and training-mode dropout follows the seed") {
    const ModelGraph m = build_model(desknet_config(), 3);
    const Tensor x = random_input(m, 4);
    CHECK(m.forward(x).score_values() == m.forward(x).score_values());
    CHECK(m.forward(x, false, 1).score_values() == m.forward(x, false, 2).score_values());
    CHECK(m.forward(x, true, 9).score_values() == m.forward(x, true, 9).score_values());
    CHECK_FALSE(m.forward(x, true, 9).score_values() == m.forward(x, true, 10).score_values());
}

TEST_CASE("features are exactly the GAP input") {
    const ModelGraph m = build_model(desknet_config(), 5);
    const ForwardPass pass = m.forward(random_input(m, 6));
    const Tensor pooled = ops::global_avg_pool(pass.feature_maps());
    const Tensor logits =
        ops::dense(pooled, m.parameter("dense1.weight"), m.parameter("dense1.bias"));
    CHECK(logits == pass.logit_values());
    CHECK(m.logits_from_features(pass.feature_maps()) == pass.logit_values());
    CHECK(ops::sigmoid(pass.logit_values()) == pass.score_values());
}

TEST_CASE("weights round-trip bitwise through DRCNN1 files") {
    const ModelGraph m = build_model(desknet_config(), 7);
    save_weights(m, temp_path("m.bin"));
    const ModelGraph loaded = load_weights(temp_path("m.bin"), desknet_config());
    save_weights(loaded, temp_path("m2.bin"));
    CHECK(read_file_bytes(temp_path("m.bin")) == read_file_bytes(temp_path("m2.bin")));
    const Tensor x = random_input(m, 8);
    CHECK(loaded.forward(x).score_values() == loaded.forward(x).score_values());
}

TEST_CASE("DRCNN1 layout") {
    const ModelGraph m = build_model(desknet_config(), 9);
    const auto bytes = serialize_weights(m);
    REQUIRE(bytes.size() > 6);
    CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "DRCNN1");
    CHECK(read_u32(bytes, 6) == 12);
    CHECK(std::string(bytes.begin() + 10, bytes.begin() + 22) == "conv1.weight");
    CHECK(read_u32(bytes, 22) == 4);
    CHECK(read_u32(bytes, 26) == 8);
    CHECK(read_u32(bytes, 30) == 3);
    CHECK(read_u32(bytes, 34) == 3);
    CHECK(read_u32(bytes, 38) == 3);
    float first = 0.0f;
    std::memcpy(&first, &bytes[42], 4);
    CHECK(first == static_cast<float>(m.parameter("conv1.weight")[0]));

    std::size_t expected = 6;
    for (const auto& p : m.parameters()) expected += 4 + p.name.size() + 4 + 4 * p.value.rank() + 4 * p.value.size();
    CHECK(bytes.size() == expected);
}

TEST_CASE("weight file errors") {
    const ModelGraph m = build_model(desknet_config(), 10);
    auto bytes = serialize_weights(m);

    auto cut = bytes;
    cut.pop_back();
    CHECK(load_error_kind(cut, desknet_config()) == WeightFileErrorKind::truncated);
    CHECK(load_error_kind({'D', 'R'}, desknet_config()) == WeightFileErrorKind::truncated);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK(load_error_kind(bad, desknet_config()) == WeightFileErrorKind::bad_magic);

    std::string message;
    CHECK(load_error_kind(bytes, desknet_config(3), &message) == WeightFileErrorKind::shape_mismatch);
    CHECK(message.find("dense1.weight") != std::string::npos);

    ModelConfig deeper = desknet_config();
    deeper.layers.insert(deeper.layers.begin() + 7, LayerSpec::conv(32));
    deeper.layers.insert(deeper.layers.begin() + 8, LayerSpec::simple(LayerKind::relu));
    CHECK(load_error_kind(bytes, deeper) == WeightFileErrorKind::missing_parameter);
    const auto deep_bytes = serialize_weights(build_model(deeper, 1));
    CHECK(load_error_kind(deep_bytes, desknet_config(), &message) == WeightFileErrorKind::unknown_parameter);
    CHECK(message.find("conv4") != std::string::npos);

    try {
        load_weights(temp_path("missing.bin"), desknet_config());
        FAIL("expected an error");
    } catch (const WeightFileError& e) {
        CHECK(e.kind() == WeightFileErrorKind::io_failure);
    }
}

TEST_CASE("model config text round-trips") {
    ModelConfig c = desknet_config(4, 32, 1);
    c.layers[9] = LayerSpec::dropout(0.25);
    const ModelConfig back = parse_model_config(format_model_config(c));
    CHECK(format_model_config(back) == format_model_config(c));
    CHECK(back.num_classes == 4);
    CHECK(back.input_channels == 1);
    CHECK(back.input_height == 32);
    CHECK(back.layers.size() == c.layers.size());
    CHECK(back.layers[9].p == 0.25);

    const ModelConfig parsed = parse_model_config(
        "# small variant\ninput_size = 16\nnum_classes = 2\nlayers = conv:4, relu, gap, dense, sigmoid\n");
    CHECK(parsed.input_width == 16);
    const ModelGraph small = build_model(parsed, 1);
    CHECK(small.feature_shape() == Shape{4, 16, 16});
    CHECK_THROWS(parse_model_config("layers = conv:4, swish"));
    CHECK_THROWS(parse_model_config("no equals sign"));
}

TEST_CASE("invalid architectures are rejected naming the layer") {
    auto message_of = [](const std::string& text) {
        try {
            build_model(parse_model_config(text), 1);
        } catch (const ModelBuildError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message_of("input_size = 6\nlayers = conv:4, relu, maxpool, maxpool, gap, dense, sigmoid").find("layer 3 (maxpool)") !=
          std::string::npos);
    CHECK(message_of("input_size = 4\nlayers = conv:4:7:1:0, relu, gap, dense, sigmoid").find("layer 0 (conv)") !=
          std::string::npos);
    CHECK(message_of("layers = conv:4, relu, dense, sigmoid") != "no error");
    CHECK(message_of("layers = conv:4, relu, gap, dense") != "no error");
    CHECK(message_of("layers = conv:4, relu, gap, dense:3, sigmoid") != "no error");
    CHECK(message_of("layers = conv:4, relu, gap, gap, dense, sigmoid") != "no error");
}
