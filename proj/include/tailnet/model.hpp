#pragma once

#include "tailnet/layers.hpp"
#include "tailnet/matrix.hpp"
#include "tailnet/param.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace tailnet {

struct ModelConfig {
    std::size_t input_dim = 16;
    std::vector<std::size_t> backbone_widths{64, 64, 32};  // empty → identity backbone
    std::size_t projection_hidden = 32;
    std::size_t embed_dim = 16;  // contrastive space dimension
    std::size_t num_classes = 10;
    std::uint64_t init_seed = 0;

    std::size_t feature_dim() const {
        return backbone_widths.empty() ? input_dim : backbone_widths.back();
    }
    void validate() const;
};

/// Dense/ReLU stack producing the shared representation r. An empty width
/// list is the identity map, which keeps end-to-end tests exact.
class BackboneMlp {
public:
    BackboneMlp(std::size_t input_dim, const std::vector<std::size_t>& widths, Rng& rng);

    Matrix forward(const Matrix& x);
    /// Returns the gradient w.r.t. the input (rarely needed; parameter grads
    /// accumulate as a side effect).
    Matrix backward(const Matrix& grad_r);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    std::vector<ParamTensor*> params();

private:
    std::size_t input_dim_;
    std::size_t output_dim_;
    std::vector<DenseLayer> dense_;
    std::vector<ReluLayer> relu_;
};

/// Nonlinear single-hidden-layer MLP into the contrastive space, followed by
/// L2 normalization so inner products act as similarities.
class ProjectionHead {
public:
    ProjectionHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, Rng& rng);

    Matrix forward(const Matrix& r);
    Matrix backward(const Matrix& grad_z);

    std::vector<ParamTensor*> params();

private:
    DenseLayer hidden_;
    ReluLayer relu_;
    DenseLayer out_;
    L2NormalizeLayer normalize_;
};

/// Single linear layer producing class logits.
class ClassifierHead {
public:
    ClassifierHead(std::size_t in_dim, std::size_t num_classes, Rng& rng);

    Matrix forward(const Matrix& r);
    Matrix backward(const Matrix& grad_s);

    DenseLayer& dense() { return dense_; }
    std::vector<ParamTensor*> params();

private:
    DenseLayer dense_;
};

/// The two-branch network: a shared backbone feeding a contrastive projection
/// head and a linear classifier. Branches are driven separately; each branch
/// must complete its forward+backward before the other branch's forward, since
/// layers cache one activation set at a time.
class HybridModel {
public:
    explicit HybridModel(const ModelConfig& cfg);

    Matrix forward_features(const Matrix& x) { return backbone_.forward(x); }
    Matrix forward_contrastive(const Matrix& r) { return projection_.forward(r); }
    Matrix forward_classifier(const Matrix& r) { return classifier_.forward(r); }

    /// Projection-head backward; returns the gradient w.r.t. r.
    Matrix backward_contrastive(const Matrix& grad_z) { return projection_.backward(grad_z); }
    /// Classifier backward; returns the gradient w.r.t. r.
    Matrix backward_classifier(const Matrix& grad_s) { return classifier_.backward(grad_s); }
    /// Pushes a feature-space gradient through the backbone.
    void backward_features(const Matrix& grad_r) { backbone_.backward(grad_r); }

    void zero_grad();

    std::vector<ParamTensor*> params();
    std::vector<ParamTensor*> backbone_params() { return backbone_.params(); }
    std::vector<ParamTensor*> projection_params() { return projection_.params(); }
    std::vector<ParamTensor*> classifier_params() { return classifier_.params(); }

    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    BackboneMlp backbone_;
    ProjectionHead projection_;
    ClassifierHead classifier_;
};

}  // namespace tailnet
