#include "tailnet/gradcheck.hpp"

#include "tailnet/errors.hpp"

#include <cmath>

namespace tailnet {

Matrix finite_diff_gradient(const ScalarFn& f, const Matrix& point, double h) {
    if (!(h > 0.0)) throw ConfigError("finite_diff_gradient: h must be positive");
    Matrix grad(point.rows(), point.cols());
    Matrix probe = point;
    for (std::size_t i = 0; i < probe.raw().size(); ++i) {
        const double original = probe.raw()[i];
        probe.raw()[i] = original + h;
        const double plus = f(probe);
        probe.raw()[i] = original - h;
        const double minus = f(probe);
        probe.raw()[i] = original;
        grad.raw()[i] = (plus - minus) / (2.0 * h);
    }
    return grad;
}

double max_rel_error(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ConfigError("max_rel_error: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.raw().size(); ++i) {
        const double x = a.raw()[i];
        const double y = b.raw()[i];
        const double denom = std::max({1.0, std::fabs(x), std::fabs(y)});
        worst = std::max(worst, std::fabs(x - y) / denom);
    }
    return worst;
}

}  // namespace tailnet
