#include "lesionmap/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lesionmap {

Tensor finite_difference_gradient(const ScalarFunction& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double original = probe[i];
        probe[i] = original + h;
        const double up = f(probe);
        probe[i] = original - h;
        const double down = f(probe);
        probe[i] = original;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double relative_error(double a, double b, double floor) {
    const double scale = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / scale;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
    if (a.shape() != b.shape()) throw DimensionError("max_relative_error: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
    return worst;
}

}  // namespace lesionmap
