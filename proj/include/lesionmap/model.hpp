#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lesionmap/tape.hpp"
#include "lesionmap/tensor.hpp"

namespace lesionmap {

enum class LayerKind { conv, relu, maxpool, gap, dropout, dense, sigmoid };

const char* to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int channels = 0;  // conv output channels
    int kernel = 3;
    int stride = 1;
    int padding = 1;
    int units = 0;  // dense outputs; 0 means num_classes
    double p = 0.5; // dropout probability

    static LayerSpec conv(int channels, int kernel = 3, int stride = 1, int padding = 1);
    static LayerSpec dense(int units = 0);
    static LayerSpec dropout(double p);
    static LayerSpec simple(LayerKind kind);
};

struct ModelConfig {
    int input_channels = 3;
    int input_height = 64;
    int input_width = 64;
    int num_classes = 5;
    std::vector<LayerSpec> layers;
};

/// conv3x3(8)→relu→maxpool→conv3x3(16)→relu→maxpool→conv3x3(32)→relu→GAP→dropout(0.5)→dense→sigmoid
ModelConfig desknet_config(int num_classes = 5, int input_size = 64, int input_channels = 3);

/// Parses `key = value` text: input_channels, input_height, input_width
/// (or input_size), num_classes, layers. The layer list is comma separated:
///   conv:C[:K[:S[:P]]], relu, maxpool, gap, dropout[:P], dense[:N], sigmoid
/// Missing keys keep the DeskNet defaults.
ModelConfig parse_model_config(const std::string& text);
ModelConfig load_model_config(const std::filesystem::path& path);
std::string format_model_config(const ModelConfig& config);

class ModelBuildError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Result of a forward pass. Value ids refer into `tape`.
struct ForwardPass {
    Tape tape;
    ValueId input = 0;
    ValueId features = 0;  // designated feature layer output A^k
    ValueId logits = 0;    // pre-sigmoid class scores y^c
    ValueId scores = 0;    // post-sigmoid
    std::vector<ValueId> parameters;  // parallel to ModelGraph::parameters()

    const Tensor& feature_maps() const { return tape.value(features); }
    const Tensor& logit_values() const { return tape.value(logits); }
    const Tensor& score_values() const { return tape.value(scores); }
};

/// A validated sequential network with its parameter store.
///
/// The feature layer is the activation immediately preceding the single GAP
/// layer; everything after it (GAP, dropout, dense, sigmoid) forms the head.
class ModelGraph {
public:
    /// Validates shapes and initializes weights He-uniform from `seed`, biases zero.
    static ModelGraph build(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
    std::vector<NamedTensor>& parameters() noexcept { return params_; }
    const Tensor& parameter(const std::string& name) const;
    Tensor& parameter(const std::string& name);

    Shape input_shape() const;
    const Shape& feature_shape() const noexcept { return feature_shape_; }
    std::size_t feature_layer_index() const noexcept { return feature_layer_; }
    std::size_t parameter_count() const;

    /// Name of the dense layer that reads the pooled features directly, if the
    /// head is exactly GAP → [dropout] → dense → [sigmoid].
    std::string head_dense_name() const;

    ForwardPass forward(const Tensor& x, bool train_mode = false, std::uint64_t dropout_seed = 0) const;

    /// Runs only the head on supplied feature maps (inference mode) and returns logits.
    Tensor logits_from_features(const Tensor& features) const;

private:
    ModelGraph() = default;
    void record_layers(ForwardPass& pass, ValueId start, std::size_t first_layer, bool train_mode,
                       std::uint64_t dropout_seed) const;

    ModelConfig config_;
    std::vector<NamedTensor> params_;
    std::vector<std::vector<std::size_t>> layer_params_;  // per layer, indices into params_
    std::vector<Shape> output_shapes_;                     // per layer
    std::size_t feature_layer_ = 0;
    std::size_t sigmoid_layer_ = 0;
    Shape feature_shape_;
};

inline ModelGraph build_model(const ModelConfig& config, std::uint64_t seed) {
    return ModelGraph::build(config, seed);
}

// ---- DRCNN1 weight files ----------------------------------------------------

enum class WeightFileErrorKind { bad_magic, truncated, unknown_parameter, shape_mismatch, missing_parameter, io_failure };

class WeightFileError : public std::runtime_error {
public:
    WeightFileError(WeightFileErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    WeightFileErrorKind kind() const noexcept { return kind_; }

private:
    WeightFileErrorKind kind_;
};

/// Little-endian: magic "DRCNN1", then per parameter u32 name length, name
/// bytes, u32 rank, u32 dims, float32 row-major values.
std::vector<std::uint8_t> serialize_weights(const ModelGraph& model);
void save_weights(const ModelGraph& model, const std::filesystem::path& path);

/// Rebuilds `config` and overwrites every parameter from the file.
ModelGraph deserialize_weights(const std::vector<std::uint8_t>& bytes, const ModelConfig& config);
ModelGraph load_weights(const std::filesystem::path& path, const ModelConfig& config);

}  // namespace lesionmap
