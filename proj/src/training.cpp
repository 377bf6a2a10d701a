#include "lesionmap/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "lesionmap/parallel.hpp"
#include "lesionmap/random.hpp"

namespace lesionmap {

ClassWeights class_weights(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw std::invalid_argument("class_weights: no classes");
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    const double k = static_cast<double>(counts.size());
    ClassWeights w;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            throw std::invalid_argument("class_weights: class " + std::to_string(c) + " has no samples");
        }
        w.weights.push_back(total / (k * static_cast<double>(counts[c])));
    }
    return w;
}

ClassWeights uniform_class_weights(std::size_t num_classes) { return {std::vector<double>(num_classes, 1.0)}; }

namespace {

void check_target(const Tensor& scores, int target, const ClassWeights& w) {
    require_rank(scores, 1, "loss scores");
    if (w.weights.size() != scores.size()) throw DimensionError("loss: class weight count does not match scores");
    if (target < 0 || static_cast<std::size_t>(target) >= scores.size()) {
        throw std::out_of_range("loss: target class " + std::to_string(target) + " is out of range");
    }
}

}  // namespace

double weighted_loss(const Tensor& scores, int target, const ClassWeights& w) {
    check_target(scores, target, w);
    double loss = 0.0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        const double s = std::clamp(scores[c], kScoreEpsilon, 1.0 - kScoreEpsilon);
        if (static_cast<int>(c) == target) {
            loss -= w.weights[c] * std::log(s);
        } else {
            loss -= std::log(1.0 - s);
        }
    }
    return loss;
}

Tensor weighted_loss_logit_gradient(const Tensor& scores, int target, const ClassWeights& w) {
    check_target(scores, target, w);
    Tensor grad(scores.shape());
    for (std::size_t c = 0; c < scores.size(); ++c) {
        const double s = scores[c];
        if (s < kScoreEpsilon || s > 1.0 - kScoreEpsilon) continue;
        const bool is_target = static_cast<int>(c) == target;
        grad[c] = is_target ? w.weights[c] * (s - 1.0) : s;
    }
    return grad;
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum) : learning_rate_(learning_rate), momentum_(momentum) {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
}

void SgdMomentum::step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.size()) throw DimensionError("sgd: gradient count does not match parameter count");
    if (velocity_.empty()) {
        for (const auto& p : params) velocity_.emplace_back(p.value.shape());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i].value;
        if (grads[i].shape() != p.shape() || velocity_[i].shape() != p.shape()) {
            throw DimensionError("sgd: gradient shape " + shape_string(grads[i].shape()) + " does not match '" +
                                 params[i].name + "' " + shape_string(p.shape()));
        }
        Tensor& v = velocity_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = momentum_ * v[j] + grads[i][j];
            p[j] -= learning_rate_ * v[j];
        }
    }
}

void validate(const TrainConfig& config) {
    if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (config.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(config.momentum >= 0.0 && config.momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(seed, 0x5348'5546ULL, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));
    return order;
}

namespace {

int argmax(const Tensor& t) {
    return static_cast<int>(std::max_element(t.data().begin(), t.data().end()) - t.data().begin());
}

struct SampleResult {
    double loss = 0.0;
    std::vector<Tensor> grads;
};

}  // namespace

TrainResult train(ModelGraph& model, const std::vector<LabeledImage>& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    validate(config);
    if (data.empty()) throw std::invalid_argument("training set is empty");
    const auto& mc = model.config();
    const auto num_classes = static_cast<std::size_t>(mc.num_classes);
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data[i];
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= num_classes) {
            throw std::invalid_argument("training sample " + std::to_string(i) + " has label " +
                                        std::to_string(s.label) + " outside [0, " + std::to_string(num_classes) + ")");
        }
        if (s.image.height != mc.input_height || s.image.width != mc.input_width ||
            s.image.channels != mc.input_channels) {
            throw std::invalid_argument("training sample " + std::to_string(i) + " does not match the model input size");
        }
        ++counts[static_cast<std::size_t>(s.label)];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) throw std::invalid_argument("class " + std::to_string(c) + " is missing from the training set");
    }

    TrainResult result;
    result.weights = config.class_weighting ? class_weights(counts) : uniform_class_weights(num_classes);
    SgdMomentum optimizer(config.learning_rate, config.momentum);
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    const std::size_t n_params = model.parameters().size();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = epoch_order(data.size(), config.seed, epoch);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t count = std::min(batch, order.size() - start);
            std::vector<SampleResult> results(count);
            parallel_for(count, config.threads, [&](std::size_t j) {
                const std::size_t idx = order[start + j];
                const auto sample_seed = mix_seed(config.seed, static_cast<std::uint64_t>(epoch), idx);
                Rng aug(sample_seed);
                const bool hflip = aug.bernoulli(0.5);
                const bool vflip = aug.bernoulli(0.5);
                Image img = data[idx].image;
                if (config.flip_horizontal && hflip) img = flip(img, FlipAxis::horizontal);
                if (config.flip_vertical && vflip) img = flip(img, FlipAxis::vertical);
                const Tensor x = normalize(img, config.mean, config.stddev);

                const ForwardPass pass = model.forward(x, true, mix_seed(sample_seed, 0xD0));
                const int label = data[idx].label;
                results[j].loss = weighted_loss(pass.score_values(), label, result.weights);
                const auto grads = backward(pass.tape, pass.logits,
                                            weighted_loss_logit_gradient(pass.score_values(), label, result.weights));
                results[j].grads.reserve(n_params);
                for (auto id : pass.parameters) results[j].grads.push_back(grads.at(id));
            });

            std::vector<Tensor> total = std::move(results[0].grads);
            loss_sum += results[0].loss;
            for (std::size_t j = 1; j < count; ++j) {
                for (std::size_t p = 0; p < n_params; ++p) total[p] += results[j].grads[p];
                loss_sum += results[j].loss;
            }
            for (auto& g : total) g *= 1.0 / static_cast<double>(count);
            optimizer.step(model.parameters(), total);
        }

        std::vector<int> correct(data.size(), 0);
        parallel_for(data.size(), config.threads, [&](std::size_t i) {
            const ForwardPass pass = model.forward(normalize(data[i].image, config.mean, config.stddev), false);
            correct[i] = argmax(pass.score_values()) == data[i].label ? 1 : 0;
        });
        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.mean_loss = loss_sum / static_cast<double>(data.size());
        stats.train_accuracy =
            static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) / static_cast<double>(data.size());
        result.log.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return result;
}

std::string epoch_log_csv(const std::vector<EpochStats>& log) {
    std::string out = "epoch,mean_loss,train_accuracy\n";
    char line[96];
    for (const auto& e : log) {
        std::snprintf(line, sizeof line, "%d,%.6f,%.4f\n", e.epoch, e.mean_loss, e.train_accuracy);
        out += line;
    }
    return out;
}

}  // namespace lesionmap
