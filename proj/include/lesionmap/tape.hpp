#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lesionmap/tensor.hpp"

namespace lesionmap {

using ValueId = std::size_t;

enum class OpKind { conv2d, maxpool2x2, global_avg_pool, dense, relu, sigmoid, dropout };

/// Records a sequential forward computation so gradients can be replayed in reverse.
///
/// Every value (leaf inputs, parameters and op outputs) gets a ValueId in
/// creation order. Values are immutable once recorded. A Tape is not
/// thread-safe; use one per forward pass.
class Tape {
public:
    struct Op {
        OpKind kind;
        std::vector<ValueId> inputs;
        ValueId output;
        int stride = 1;
        int padding = 0;
        std::vector<std::size_t> argmax;  // maxpool routing
        Tensor mask;                      // dropout multipliers; empty in inference mode
    };

    ValueId leaf(Tensor value);

    ValueId conv2d(ValueId input, ValueId kernels, ValueId bias, int stride, int padding);
    ValueId maxpool2x2(ValueId input);
    ValueId global_avg_pool(ValueId input);
    ValueId dense(ValueId input, ValueId weights, ValueId bias);
    ValueId relu(ValueId input);
    ValueId sigmoid(ValueId input);
    ValueId dropout(ValueId input, double p, std::uint64_t seed, bool train_mode);

    const Tensor& value(ValueId id) const { return values_.at(id); }
    std::size_t value_count() const noexcept { return values_.size(); }
    const std::vector<Op>& ops() const noexcept { return ops_; }

    /// Most recently recorded value.
    ValueId output() const;

    /// Index into ops() of the op that produced `id`, if any.
    std::optional<std::size_t> producer(ValueId id) const { return producer_.at(id); }

private:
    ValueId push(Tensor value, std::optional<std::size_t> op);
    ValueId record(Op op, Tensor result);

    std::vector<Tensor> values_;
    std::vector<std::optional<std::size_t>> producer_;
    std::vector<Op> ops_;
};

/// Gradients of a seeded scalar with respect to every value upstream of the target.
class Gradients {
public:
    explicit Gradients(std::size_t value_count) : grads_(value_count) {}

    bool has(ValueId id) const { return id < grads_.size() && grads_[id].has_value(); }
    const Tensor& at(ValueId id) const;

    /// Op indices in the order backward() processed them.
    const std::vector<std::size_t>& visit_order() const noexcept { return visit_order_; }

private:
    friend Gradients backward(const Tape&, ValueId, const Tensor&);
    void accumulate(ValueId id, const Tensor& grad);

    std::vector<std::optional<Tensor>> grads_;
    std::vector<std::size_t> visit_order_;
};

/// d(seed · value(target)) / d(v) for every recorded v that target depends on.
Gradients backward(const Tape& tape, ValueId target, const Tensor& seed);

/// Same, seeded at the tape's final output.
inline Gradients backward(const Tape& tape, const Tensor& seed) { return backward(tape, tape.output(), seed); }

}  // namespace lesionmap
