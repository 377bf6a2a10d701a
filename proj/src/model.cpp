#include "lesionmap/model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "lesionmap/config_text.hpp"
#include "lesionmap/file_util.hpp"
#include "lesionmap/random.hpp"

namespace lesionmap {

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::gap: return "gap";
        case LayerKind::dropout: return "dropout";
        case LayerKind::dense: return "dense";
        case LayerKind::sigmoid: return "sigmoid";
    }
    return "?";
}

LayerSpec LayerSpec::conv(int channels, int kernel, int stride, int padding) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.channels = channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::dense(int units) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.units = units;
    return s;
}

LayerSpec LayerSpec::dropout(double p) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.p = p;
    return s;
}

LayerSpec LayerSpec::simple(LayerKind kind) {
    LayerSpec s;
    s.kind = kind;
    return s;
}

ModelConfig desknet_config(int num_classes, int input_size, int input_channels) {
    ModelConfig c;
    c.input_channels = input_channels;
    c.input_height = input_size;
    c.input_width = input_size;
    c.num_classes = num_classes;
    c.layers = {LayerSpec::conv(8),   LayerSpec::simple(LayerKind::relu), LayerSpec::simple(LayerKind::maxpool),
                LayerSpec::conv(16),  LayerSpec::simple(LayerKind::relu), LayerSpec::simple(LayerKind::maxpool),
                LayerSpec::conv(32),  LayerSpec::simple(LayerKind::relu), LayerSpec::simple(LayerKind::gap),
                LayerSpec::dropout(0.5), LayerSpec::dense(),              LayerSpec::simple(LayerKind::sigmoid)};
    return c;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
    return parts;
}

int parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw ModelBuildError("model config: " + what + " expects an integer, got '" + s + "'");
    }
}

LayerSpec parse_layer(const std::string& token) {
    const auto parts = split(token, ':');
    const std::string& name = parts.at(0);
    auto arg = [&](std::size_t i, int fallback) {
        return parts.size() > i ? parse_int(parts[i], "layer '" + token + "'") : fallback;
    };
    if (name == "conv") {
        if (parts.size() < 2) throw ModelBuildError("model config: conv layer needs a channel count (conv:C)");
        return LayerSpec::conv(arg(1, 0), arg(2, 3), arg(3, 1), arg(4, arg(2, 3) / 2));
    }
    if (name == "dense") return LayerSpec::dense(arg(1, 0));
    if (name == "dropout") {
        double p = 0.5;
        if (parts.size() > 1) {
            try {
                p = std::stod(parts[1]);
            } catch (const std::logic_error&) {
                throw ModelBuildError("model config: bad dropout probability '" + parts[1] + "'");
            }
        }
        return LayerSpec::dropout(p);
    }
    if (parts.size() != 1) throw ModelBuildError("model config: layer '" + name + "' takes no arguments");
    if (name == "relu") return LayerSpec::simple(LayerKind::relu);
    if (name == "maxpool") return LayerSpec::simple(LayerKind::maxpool);
    if (name == "gap") return LayerSpec::simple(LayerKind::gap);
    if (name == "sigmoid") return LayerSpec::simple(LayerKind::sigmoid);
    throw ModelBuildError("model config: unknown layer '" + name + "'");
}

std::string format_layer(const LayerSpec& l) {
    std::ostringstream out;
    out << to_string(l.kind);
    switch (l.kind) {
        case LayerKind::conv: out << ':' << l.channels << ':' << l.kernel << ':' << l.stride << ':' << l.padding; break;
        case LayerKind::dense:
            if (l.units > 0) out << ':' << l.units;
            break;
        case LayerKind::dropout: out << ':' << l.p; break;
        default: break;
    }
    return out.str();
}

}  // namespace

ModelConfig parse_model_config(const std::string& text) {
    ModelConfig config = desknet_config();
    for (const auto& [key, value] : parse_key_values(text)) {
        if (key == "input_channels") {
            config.input_channels = parse_int(value, key);
        } else if (key == "input_height") {
            config.input_height = parse_int(value, key);
        } else if (key == "input_width") {
            config.input_width = parse_int(value, key);
        } else if (key == "input_size") {
            config.input_height = config.input_width = parse_int(value, key);
        } else if (key == "num_classes") {
            config.num_classes = parse_int(value, key);
        } else if (key == "layers") {
            config.layers.clear();
            for (const auto& token : split(value, ',')) {
                if (!token.empty()) config.layers.push_back(parse_layer(token));
            }
        } else {
            throw ModelBuildError("model config: unknown key '" + key + "'");
        }
    }
    return config;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return parse_model_config(std::string(bytes.begin(), bytes.end()));
}

std::string format_model_config(const ModelConfig& config) {
    std::ostringstream out;
    out << "input_channels = " << config.input_channels << "\n";
    out << "input_height = " << config.input_height << "\n";
    out << "input_width = " << config.input_width << "\n";
    out << "num_classes = " << config.num_classes << "\n";
    out << "layers = ";
    for (std::size_t i = 0; i < config.layers.size(); ++i) out << (i ? ", " : "") << format_layer(config.layers[i]);
    out << "\n";
    return out.str();
}

// ---- ModelGraph ---------------------------------------------------------------

ModelGraph ModelGraph::build(const ModelConfig& config, std::uint64_t seed) {
    if (config.input_channels < 1 || config.input_height < 1 || config.input_width < 1) {
        throw ModelBuildError("model input dimensions must be positive");
    }
    if (config.num_classes < 1) throw ModelBuildError("num_classes must be positive");
    if (config.layers.empty()) throw ModelBuildError("model has no layers");

    ModelGraph g;
    g.config_ = config;
    Shape shape{static_cast<std::size_t>(config.input_channels), static_cast<std::size_t>(config.input_height),
                static_cast<std::size_t>(config.input_width)};
    std::size_t gap_index = config.layers.size();
    int conv_count = 0, dense_count = 0;
    bool seen_conv_before_gap = false;
    Rng rng(seed);

    auto fail = [&](std::size_t i, const std::string& why) -> ModelBuildError {
        return ModelBuildError("layer " + std::to_string(i) + " (" + to_string(config.layers[i].kind) +
                               "): " + why + " (input shape " + shape_string(shape) + ")");
    };
    auto add_param = [&](std::string name, Shape pshape, std::size_t fan_in, bool weight) {
        Tensor t(std::move(pshape));
        if (weight) {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& v : t.data()) v = rng.uniform(-limit, limit);
        }
        g.params_.push_back({std::move(name), std::move(t)});
        return g.params_.size() - 1;
    };

    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const LayerSpec& l = config.layers[i];
        std::vector<std::size_t> owned;
        switch (l.kind) {
            case LayerKind::conv: {
                if (shape.size() != 3) throw fail(i, "convolution needs a [C,H,W] input");
                if (l.channels < 1 || l.kernel < 1 || l.stride < 1 || l.padding < 0) {
                    throw fail(i, "channels, kernel and stride must be positive, padding non-negative");
                }
                const std::size_t k = static_cast<std::size_t>(l.kernel);
                const std::size_t ph = shape[1] + 2 * static_cast<std::size_t>(l.padding);
                const std::size_t pw = shape[2] + 2 * static_cast<std::size_t>(l.padding);
                if (k > ph || k > pw) throw fail(i, "kernel larger than padded input");
                const std::string name = "conv" + std::to_string(++conv_count);
                const std::size_t cin = shape[0];
                owned.push_back(add_param(name + ".weight", {static_cast<std::size_t>(l.channels), cin, k, k},
                                          cin * k * k, true));
                owned.push_back(add_param(name + ".bias", {static_cast<std::size_t>(l.channels)}, 0, false));
                shape = {static_cast<std::size_t>(l.channels), (ph - k) / static_cast<std::size_t>(l.stride) + 1,
                         (pw - k) / static_cast<std::size_t>(l.stride) + 1};
                if (gap_index == config.layers.size()) seen_conv_before_gap = true;
                break;
            }
            case LayerKind::relu:
            case LayerKind::sigmoid: break;
            case LayerKind::maxpool:
                if (shape.size() != 3) throw fail(i, "max-pooling needs a [C,H,W] input");
                if (shape[1] % 2 || shape[2] % 2) throw fail(i, "max-pooling needs even height and width");
                shape = {shape[0], shape[1] / 2, shape[2] / 2};
                break;
            case LayerKind::gap:
                if (gap_index != config.layers.size()) throw fail(i, "only one global average pooling layer is allowed");
                if (shape.size() != 3) throw fail(i, "global average pooling needs a [C,H,W] input");
                if (!seen_conv_before_gap) throw fail(i, "global average pooling must follow a convolution");
                gap_index = i;
                g.feature_shape_ = shape;
                shape = {shape[0]};
                break;
            case LayerKind::dropout:
                if (!(l.p >= 0.0 && l.p < 1.0)) throw fail(i, "dropout probability must lie in [0, 1)");
                break;
            case LayerKind::dense: {
                if (shape.size() != 1) throw fail(i, "dense layer needs a flat input");
                const std::size_t units = static_cast<std::size_t>(l.units > 0 ? l.units : config.num_classes);
                const std::string name = "dense" + std::to_string(++dense_count);
                owned.push_back(add_param(name + ".weight", {units, shape[0]}, shape[0], true));
                owned.push_back(add_param(name + ".bias", {units}, 0, false));
                shape = {units};
                break;
            }
        }
        g.layer_params_.push_back(std::move(owned));
        g.output_shapes_.push_back(shape);
    }

    if (gap_index == config.layers.size()) throw ModelBuildError("model needs a global average pooling layer");
    if (gap_index == 0) throw ModelBuildError("global average pooling cannot be the first layer");
    const std::size_t last = config.layers.size() - 1;
    if (config.layers[last].kind != LayerKind::sigmoid) throw ModelBuildError("model must end with a sigmoid layer");
    if (shape != Shape{static_cast<std::size_t>(config.num_classes)}) {
        throw ModelBuildError("model output shape " + shape_string(shape) + " does not match num_classes " +
                              std::to_string(config.num_classes));
    }
    for (std::size_t i = gap_index + 1; i < last; ++i) {
        if (config.layers[i].kind == LayerKind::sigmoid) {
            throw ModelBuildError("layer " + std::to_string(i) + " (sigmoid): only the final layer may be a sigmoid");
        }
    }
    g.feature_layer_ = gap_index - 1;
    g.sigmoid_layer_ = last;
    return g;
}

const Tensor& ModelGraph::parameter(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return p.value;
    }
    throw std::out_of_range("no parameter named '" + name + "'");
}

Tensor& ModelGraph::parameter(const std::string& name) {
    return const_cast<Tensor&>(static_cast<const ModelGraph&>(*this).parameter(name));
}

Shape ModelGraph::input_shape() const {
    return {static_cast<std::size_t>(config_.input_channels), static_cast<std::size_t>(config_.input_height),
            static_cast<std::size_t>(config_.input_width)};
}

std::size_t ModelGraph::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::string ModelGraph::head_dense_name() const {
    std::size_t i = feature_layer_ + 2;  // skip GAP
    while (i < sigmoid_layer_ && config_.layers[i].kind == LayerKind::dropout) ++i;
    if (i + 1 != sigmoid_layer_ || config_.layers[i].kind != LayerKind::dense) return {};
    return params_[layer_params_[i][0]].name.substr(0, params_[layer_params_[i][0]].name.find('.'));
}

void ModelGraph::record_layers(ForwardPass& pass, ValueId start, std::size_t first_layer, bool train_mode,
                               std::uint64_t dropout_seed) const {
    Tape& tape = pass.tape;
    ValueId cur = start;
    for (std::size_t i = first_layer; i < config_.layers.size(); ++i) {
        const LayerSpec& l = config_.layers[i];
        const auto& owned = layer_params_[i];
        switch (l.kind) {
            case LayerKind::conv:
                cur = tape.conv2d(cur, pass.parameters[owned[0]], pass.parameters[owned[1]], l.stride, l.padding);
                break;
            case LayerKind::relu: cur = tape.relu(cur); break;
            case LayerKind::maxpool: cur = tape.maxpool2x2(cur); break;
            case LayerKind::gap: cur = tape.global_avg_pool(cur); break;
            case LayerKind::dropout: cur = tape.dropout(cur, l.p, mix_seed(dropout_seed, i), train_mode); break;
            case LayerKind::dense: cur = tape.dense(cur, pass.parameters[owned[0]], pass.parameters[owned[1]]); break;
            case LayerKind::sigmoid:
                pass.logits = cur;
                cur = tape.sigmoid(cur);
                break;
        }
        if (i == feature_layer_) pass.features = cur;
    }
    pass.scores = cur;
}

ForwardPass ModelGraph::forward(const Tensor& x, bool train_mode, std::uint64_t dropout_seed) const {
    if (x.shape() != input_shape()) {
        throw DimensionError("model input shape " + shape_string(x.shape()) + " does not match expected " +
                             shape_string(input_shape()));
    }
    ForwardPass pass;
    pass.input = pass.tape.leaf(x);
    for (const auto& p : params_) pass.parameters.push_back(pass.tape.leaf(p.value));
    record_layers(pass, pass.input, 0, train_mode, dropout_seed);
    return pass;
}

Tensor ModelGraph::logits_from_features(const Tensor& features) const {
    if (features.shape() != feature_shape_) {
        throw DimensionError("feature shape " + shape_string(features.shape()) + " does not match " +
                             shape_string(feature_shape_));
    }
    ForwardPass pass;
    pass.features = pass.tape.leaf(features);
    for (const auto& p : params_) pass.parameters.push_back(pass.tape.leaf(p.value));
    const ValueId start = pass.features;
    record_layers(pass, start, feature_layer_ + 1, false, 0);
    pass.features = start;
    return pass.logit_values();
}

// ---- weight files -------------------------------------------------------------

namespace {

constexpr char kMagic[] = {'D', 'R', 'C', 'N', 'N', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
    bool at_end() const { return pos_ == bytes_.size(); }

    const std::uint8_t* take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw WeightFileError(WeightFileErrorKind::truncated,
                                  std::string("weight file truncated while reading ") + what);
        }
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint32_t u32(const char* what) {
        const auto* p = take(4, what);
        return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
               (std::uint32_t{p[3]} << 24);
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_weights(const ModelGraph& model) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    for (const auto& p : model.parameters()) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.insert(out.end(), p.name.begin(), p.name.end());
        put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : p.value.data()) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            put_u32(out, bits);
        }
    }
    return out;
}

void save_weights(const ModelGraph& model, const std::filesystem::path& path) {
    try {
        write_file_atomic(path, serialize_weights(model));
    } catch (const IoError& e) {
        throw WeightFileError(WeightFileErrorKind::io_failure, e.what());
    }
}

ModelGraph deserialize_weights(const std::vector<std::uint8_t>& bytes, const ModelConfig& config) {
    Reader in(bytes);
    const auto* magic = in.take(sizeof kMagic, "magic");
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw WeightFileError(WeightFileErrorKind::bad_magic, "not a DRCNN1 weight file (bad magic)");
    }
    ModelGraph model = ModelGraph::build(config, 0);
    std::vector<bool> loaded(model.parameters().size(), false);
    while (!in.at_end()) {
        const std::uint32_t name_len = in.u32("name length");
        const auto* name_bytes = in.take(name_len, "parameter name");
        const std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
        const std::uint32_t rank = in.u32("rank");
        if (rank == 0 || rank > 8) {
            throw WeightFileError(WeightFileErrorKind::shape_mismatch, "parameter '" + name + "' has invalid rank " +
                                                                           std::to_string(rank));
        }
        Shape shape;
        for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(in.u32("dimension"));

        auto& params = model.parameters();
        std::size_t idx = params.size();
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].name == name) idx = i;
        }
        if (idx == params.size()) {
            throw WeightFileError(WeightFileErrorKind::unknown_parameter,
                                  "weight file parameter '" + name + "' does not exist in the model config");
        }
        if (shape != params[idx].value.shape()) {
            throw WeightFileError(WeightFileErrorKind::shape_mismatch,
                                  "parameter '" + name + "' has shape " + shape_string(shape) + " in the file but " +
                                      shape_string(params[idx].value.shape()) + " in the model config");
        }
        const auto* data = in.take(4 * shape_size(shape), "parameter data");
        auto values = params[idx].value.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const std::uint32_t bits = std::uint32_t{data[4 * i]} | (std::uint32_t{data[4 * i + 1]} << 8) |
                                       (std::uint32_t{data[4 * i + 2]} << 16) | (std::uint32_t{data[4 * i + 3]} << 24);
            float f;
            std::memcpy(&f, &bits, sizeof f);
            values[i] = f;
        }
        loaded[idx] = true;
    }
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        if (!loaded[i]) {
            throw WeightFileError(WeightFileErrorKind::missing_parameter,
                                  "weight file has no values for parameter '" + model.parameters()[i].name + "'");
        }
    }
    return model;
}

ModelGraph load_weights(const std::filesystem::path& path, const ModelConfig& config) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError& e) {
        throw WeightFileError(WeightFileErrorKind::io_failure, e.what());
    }
    return deserialize_weights(bytes, config);
}

}  // namespace lesionmap
