#pragma once

#include "tailnet/matrix.hpp"

#include <functional>

namespace tailnet {

using ScalarFn = std::function<double(const Matrix&)>;

/// Central-difference gradient of a scalar function, one coordinate at a time:
/// (f(x + h·e) − f(x − h·e)) / 2h. This is the independent oracle every
/// analytic gradient in the project is validated against; it must never call
/// into the backward paths it checks.
Matrix finite_diff_gradient(const ScalarFn& f, const Matrix& point, double h = 1e-4);

/// Max over entries of |a−b| / max(1, |a|, |b|). The unit floor makes the
/// measure absolute for tiny gradients, where central differences bottom out
/// in round-off, and relative everywhere else.
double max_rel_error(const Matrix& a, const Matrix& b);

}  // namespace tailnet
