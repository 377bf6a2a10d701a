#pragma once

#include <functional>

#include "lesionmap/tensor.hpp"

namespace lesionmap {

using ScalarFunction = std::function<double(const Tensor&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate i.
Tensor finite_difference_gradient(const ScalarFunction& f, const Tensor& x, double h = 1e-5);

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
/// blowing up the ratio through round-off alone.
double relative_error(double a, double b, double floor = 1e-6);

/// Largest elementwise relative_error between two equally shaped tensors.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace lesionmap
