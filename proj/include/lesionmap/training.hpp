#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lesionmap/image.hpp"
#include "lesionmap/model.hpp"
#include "lesionmap/tensor.hpp"

namespace lesionmap {

struct ClassWeights {
    std::vector<double> weights;
};

/// Inverse-frequency weights w_c = N / (K * N_c). Every class must be present.
ClassWeights class_weights(const std::vector<std::size_t>& counts);
ClassWeights uniform_class_weights(std::size_t num_classes);

/// Scores are clamped to [eps, 1 - eps] before taking logs.
inline constexpr double kScoreEpsilon = 1e-7;

/// One-vs-all weighted binary cross-entropy over post-sigmoid scores.
/// Only the target class's term is scaled, by w[target].
double weighted_loss(const Tensor& scores, int target, const ClassWeights& w);

/// Gradient of weighted_loss with respect to the pre-sigmoid logits that
/// produced `scores`: m_c (s_c - t_c), zero where the clamp is active.
Tensor weighted_loss_logit_gradient(const Tensor& scores, int target, const ClassWeights& w);

/// Plain SGD with a heavy-ball momentum buffer per parameter:
/// v <- momentum * v + g;  p <- p - lr * v.
class SgdMomentum {
public:
    SgdMomentum(double learning_rate, double momentum);

    void step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads);

private:
    double learning_rate_;
    double momentum_;
    std::vector<Tensor> velocity_;
};

struct TrainConfig {
    int epochs = 15;
    int batch_size = 16;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    bool flip_horizontal = true;
    bool flip_vertical = true;
    bool class_weighting = true;
    std::vector<double> mean{0.5};
    std::vector<double> stddev{0.5};
    int threads = 1;
};

void validate(const TrainConfig& config);

struct LabeledImage {
    Image image;  // already at the model's input size and channel count
    int label = 0;
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;  // inference-mode accuracy on the unaugmented training set
};

struct TrainResult {
    std::vector<EpochStats> log;
    ClassWeights weights;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Deterministic minibatch training: seeded shuffle per epoch, per-sample
/// random flips and dropout masks derived from (seed, epoch, sample), and
/// gradient accumulation in sample order regardless of thread count.
TrainResult train(ModelGraph& model, const std::vector<LabeledImage>& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Shuffled visiting order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// `epoch,mean_loss,train_accuracy` with a header row.
std::string epoch_log_csv(const std::vector<EpochStats>& log);

}  // namespace lesionmap
