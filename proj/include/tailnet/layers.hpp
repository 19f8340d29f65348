#pragma once

#include "tailnet/matrix.hpp"
#include "tailnet/param.hpp"

#include <string>
#include <vector>

namespace tailnet {

class Rng;

/// Fully connected layer, y = x·W + b. Backward accumulates dW = xᵀ·g and
/// db = column-sum(g) into the parameter gradients and returns g·Wᵀ.
class DenseLayer {
public:
    DenseLayer(std::string name, std::size_t in_dim, std::size_t out_dim);

    /// He-style init: W ~ N(0, 2/in_dim), b = 0.
    void init(Rng& rng);

    Matrix forward(const Matrix& input);
    Matrix backward(const Matrix& upstream);

    ParamTensor& weights() { return weights_; }
    ParamTensor& bias() { return bias_; }
    std::size_t in_dim() const { return weights_.value.rows(); }
    std::size_t out_dim() const { return weights_.value.cols(); }
    std::vector<ParamTensor*> params() { return {&weights_, &bias_}; }

private:
    ParamTensor weights_;  // in×out
    ParamTensor bias_;     // 1×out
    Matrix cached_input_;
    bool has_cache_ = false;
};

class ReluLayer {
public:
    Matrix forward(const Matrix& input);
    Matrix backward(const Matrix& upstream);

private:
    Matrix cached_input_;
    bool has_cache_ = false;
};

/// Row-wise projection onto the unit sphere. Rows with norm below
/// `kNormEpsilon` are rejected rather than clamped: a clamped zero row would
/// silently hide a collapsed embedding.
class L2NormalizeLayer {
public:
    static constexpr double kNormEpsilon = 1e-12;

    Matrix forward(const Matrix& input);

    /// Per row: (g − (g·z)·z) / ‖r‖ — the tangent-space projection of the
    /// upstream gradient, so the output row is orthogonal to z.
    Matrix backward(const Matrix& upstream);

private:
    Matrix cached_output_;
    std::vector<double> cached_norms_;
    bool has_cache_ = false;
};

}  // namespace tailnet
