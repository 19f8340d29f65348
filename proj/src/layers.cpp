#include "tailnet/layers.hpp"

#include "tailnet/errors.hpp"
#include "tailnet/rng.hpp"

#include <cmath>

namespace tailnet {

DenseLayer::DenseLayer(std::string name, std::size_t in_dim, std::size_t out_dim)
    : weights_(name + ".W", Matrix(in_dim, out_dim)),
      bias_(name + ".b", Matrix(1, out_dim)) {
    if (in_dim == 0 || out_dim == 0) throw ConfigError("DenseLayer: zero dimension");
}

void DenseLayer::init(Rng& rng) {
    const double scale = std::sqrt(2.0 / static_cast<double>(in_dim()));
    for (auto& v : weights_.value.raw()) v = scale * rng.gaussian();
    // Small positive bias keeps narrow ReLU stacks from emitting exact-zero
    // rows, which the L2 normalizer downstream rejects as collapsed.
    bias_.value.fill(0.01);
}

Matrix DenseLayer::forward(const Matrix& input) {
    if (input.cols() != in_dim())
        throw ConfigError("DenseLayer '" + weights_.name + "': input width " +
                          std::to_string(input.cols()) + " != " + std::to_string(in_dim()));
    cached_input_ = input;
    has_cache_ = true;
    Matrix out = matmul(input, weights_.value);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* row = out.row_ptr(i);
        for (std::size_t j = 0; j < out.cols(); ++j) row[j] += bias_.value(0, j);
    }
    return out;
}

Matrix DenseLayer::backward(const Matrix& upstream) {
    if (!has_cache_) throw StateError("DenseLayer '" + weights_.name + "': backward before forward");
    if (upstream.rows() != cached_input_.rows() || upstream.cols() != out_dim())
        throw ConfigError("DenseLayer '" + weights_.name + "': upstream shape mismatch");
    weights_.grad += matmul_tn(cached_input_, upstream);
    bias_.grad += col_sums(upstream);
    return matmul_nt(upstream, weights_.value);
}

Matrix ReluLayer::forward(const Matrix& input) {
    cached_input_ = input;
    has_cache_ = true;
    Matrix out = input;
    for (auto& v : out.raw()) v = v > 0.0 ? v : 0.0;
    return out;
}

Matrix ReluLayer::backward(const Matrix& upstream) {
    if (!has_cache_) throw StateError("ReluLayer: backward before forward");
    if (!upstream.same_shape(cached_input_)) throw ConfigError("ReluLayer: upstream shape mismatch");
    Matrix out = upstream;
    for (std::size_t i = 0; i < out.raw().size(); ++i)
        if (cached_input_.raw()[i] <= 0.0) out.raw()[i] = 0.0;
    return out;
}

Matrix L2NormalizeLayer::forward(const Matrix& input) {
    Matrix out = input;
    cached_norms_.assign(input.rows(), 0.0);
    for (std::size_t i = 0; i < input.rows(); ++i) {
        const double norm = input.row_norm(i);
        if (norm < kNormEpsilon)
            throw DegenerateInputError("L2NormalizeLayer: row " + std::to_string(i) +
                                       " has near-zero norm " + std::to_string(norm));
        cached_norms_[i] = norm;
        double* row = out.row_ptr(i);
        for (std::size_t j = 0; j < out.cols(); ++j) row[j] /= norm;
    }
    cached_output_ = out;
    has_cache_ = true;
    return out;
}

Matrix L2NormalizeLayer::backward(const Matrix& upstream) {
    if (!has_cache_) throw StateError("L2NormalizeLayer: backward before forward");
    if (!upstream.same_shape(cached_output_))
        throw ConfigError("L2NormalizeLayer: upstream shape mismatch");
    Matrix out(upstream.rows(), upstream.cols());
    for (std::size_t i = 0; i < upstream.rows(); ++i) {
        const double* g = upstream.row_ptr(i);
        const double* z = cached_output_.row_ptr(i);
        double gz = 0.0;
        for (std::size_t j = 0; j < upstream.cols(); ++j) gz += g[j] * z[j];
        double* o = out.row_ptr(i);
        for (std::size_t j = 0; j < upstream.cols(); ++j)
            o[j] = (g[j] - gz * z[j]) / cached_norms_[i];
    }
    return out;
}

}  // namespace tailnet
