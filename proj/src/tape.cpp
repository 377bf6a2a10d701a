#include "lesionmap/tape.hpp"

#include <stdexcept>
#include <string>

#include "lesionmap/ops.hpp"

namespace lesionmap {

namespace {

Tape::Op make_op(OpKind kind, std::vector<ValueId> inputs) {
    Tape::Op op;
    op.kind = kind;
    op.inputs = std::move(inputs);
    op.output = 0;
    return op;
}

}  // namespace

ValueId Tape::push(Tensor value, std::optional<std::size_t> op) {
    values_.push_back(std::move(value));
    producer_.push_back(op);
    return values_.size() - 1;
}

ValueId Tape::record(Op op, Tensor result) {
    op.output = values_.size();
    ops_.push_back(std::move(op));
    return push(std::move(result), ops_.size() - 1);
}

ValueId Tape::leaf(Tensor value) { return push(std::move(value), std::nullopt); }

ValueId Tape::conv2d(ValueId input, ValueId kernels, ValueId bias, int stride, int padding) {
    Tensor out = ops::conv2d(value(input), value(kernels), value(bias), stride, padding);
    Op op = make_op(OpKind::conv2d, {input, kernels, bias});
    op.stride = stride;
    op.padding = padding;
    return record(std::move(op), std::move(out));
}

ValueId Tape::maxpool2x2(ValueId input) {
    auto pooled = ops::maxpool2x2_with_indices(value(input));
    Op op = make_op(OpKind::maxpool2x2, {input});
    op.argmax = std::move(pooled.argmax);
    return record(std::move(op), std::move(pooled.output));
}

ValueId Tape::global_avg_pool(ValueId input) {
    return record(make_op(OpKind::global_avg_pool, {input}), ops::global_avg_pool(value(input)));
}

ValueId Tape::dense(ValueId input, ValueId weights, ValueId bias) {
    return record(make_op(OpKind::dense, {input, weights, bias}), ops::dense(value(input), value(weights), value(bias)));
}

ValueId Tape::relu(ValueId input) { return record(make_op(OpKind::relu, {input}), ops::relu(value(input))); }

ValueId Tape::sigmoid(ValueId input) { return record(make_op(OpKind::sigmoid, {input}), ops::sigmoid(value(input))); }

ValueId Tape::dropout(ValueId input, double p, std::uint64_t seed, bool train_mode) {
    Op op = make_op(OpKind::dropout, {input});
    Tensor out = value(input);
    if (train_mode) {
        op.mask = ops::dropout_mask(out.shape(), p, seed);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= op.mask[i];
    } else if (!(p >= 0.0 && p < 1.0)) {
        throw std::invalid_argument("dropout probability must lie in [0, 1)");
    }
    return record(std::move(op), std::move(out));
}

ValueId Tape::output() const {
    if (values_.empty()) throw std::logic_error("tape is empty");
    return values_.size() - 1;
}

const Tensor& Gradients::at(ValueId id) const {
    if (!has(id)) throw std::out_of_range("no gradient recorded for value " + std::to_string(id));
    return *grads_[id];
}

void Gradients::accumulate(ValueId id, const Tensor& grad) {
    if (grads_[id]) {
        *grads_[id] += grad;
    } else {
        grads_[id] = grad;
    }
}

Gradients backward(const Tape& tape, ValueId target, const Tensor& seed) {
    if (target >= tape.value_count()) throw std::out_of_range("backward target is not a recorded value");
    if (seed.shape() != tape.value(target).shape()) {
        throw DimensionError("backward seed shape " + shape_string(seed.shape()) + " does not match output shape " +
                             shape_string(tape.value(target).shape()));
    }
    Gradients grads(tape.value_count());
    grads.accumulate(target, seed);

    const auto start = tape.producer(target);
    if (!start) return grads;
    const auto& ops_list = tape.ops();
    for (std::size_t n = *start + 1; n-- > 0;) {
        const auto& op = ops_list[n];
        if (!grads.has(op.output)) continue;
        grads.visit_order_.push_back(n);
        const Tensor& g = grads.at(op.output);
        switch (op.kind) {
            case OpKind::conv2d: {
                auto cg = ops::conv2d_backward(tape.value(op.inputs[0]), tape.value(op.inputs[1]), g, op.stride,
                                               op.padding);
                grads.accumulate(op.inputs[0], cg.input);
                grads.accumulate(op.inputs[1], cg.kernels);
                grads.accumulate(op.inputs[2], cg.bias);
                break;
            }
            case OpKind::maxpool2x2:
                grads.accumulate(op.inputs[0],
                                 ops::maxpool2x2_backward(tape.value(op.inputs[0]).shape(), op.argmax, g));
                break;
            case OpKind::global_avg_pool:
                grads.accumulate(op.inputs[0], ops::global_avg_pool_backward(tape.value(op.inputs[0]).shape(), g));
                break;
            case OpKind::dense: {
                auto dg = ops::dense_backward(tape.value(op.inputs[0]), tape.value(op.inputs[1]), g);
                grads.accumulate(op.inputs[0], dg.input);
                grads.accumulate(op.inputs[1], dg.weights);
                grads.accumulate(op.inputs[2], dg.bias);
                break;
            }
            case OpKind::relu:
                grads.accumulate(op.inputs[0], ops::relu_backward(tape.value(op.inputs[0]), g));
                break;
            case OpKind::sigmoid:
                grads.accumulate(op.inputs[0], ops::sigmoid_backward(tape.value(op.output), g));
                break;
            case OpKind::dropout: {
                if (op.mask.empty()) {
                    grads.accumulate(op.inputs[0], g);
                } else {
                    Tensor masked = g;
                    for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= op.mask[i];
                    grads.accumulate(op.inputs[0], masked);
                }
                break;
            }
        }
    }
    return grads;
}

}  // namespace lesionmap
