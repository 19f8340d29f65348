#include "tailnet/model.hpp"

#include "tailnet/errors.hpp"
#include "tailnet/rng.hpp"

#include <string>

namespace tailnet {

void ModelConfig::validate() const {
    if (input_dim == 0) throw ConfigError("ModelConfig: input_dim must be positive");
    if (projection_hidden == 0) throw ConfigError("ModelConfig: projection_hidden must be positive");
    if (embed_dim == 0) throw ConfigError("ModelConfig: embed_dim must be positive");
    if (num_classes < 2) throw ConfigError("ModelConfig: need at least 2 classes");
    for (std::size_t w : backbone_widths)
        if (w == 0) throw ConfigError("ModelConfig: zero backbone width");
}

BackboneMlp::BackboneMlp(std::size_t input_dim, const std::vector<std::size_t>& widths, Rng& rng)
    : input_dim_(input_dim), output_dim_(widths.empty() ? input_dim : widths.back()) {
    std::size_t prev = input_dim;
    std::size_t idx = 0;
    for (std::size_t w : widths) {
        dense_.emplace_back("backbone." + std::to_string(idx++), prev, w);
        dense_.back().init(rng);
        prev = w;
    }
    // ReLU between layers only: a signed representation r keeps the heads'
    // input centered instead of confined to the positive orthant.
    if (!dense_.empty()) relu_.resize(dense_.size() - 1);
}

Matrix BackboneMlp::forward(const Matrix& x) {
    if (x.cols() != input_dim_)
        throw ConfigError("BackboneMlp: input width " + std::to_string(x.cols()) +
                          " != configured " + std::to_string(input_dim_));
    Matrix h = x;
    for (std::size_t i = 0; i < dense_.size(); ++i) {
        h = dense_[i].forward(h);
        if (i < relu_.size()) h = relu_[i].forward(h);
    }
    return h;
}

Matrix BackboneMlp::backward(const Matrix& grad_r) {
    Matrix g = grad_r;
    for (std::size_t i = dense_.size(); i-- > 0;) {
        if (i < relu_.size()) g = relu_[i].backward(g);
        g = dense_[i].backward(g);
    }
    return g;
}

std::vector<ParamTensor*> BackboneMlp::params() {
    std::vector<ParamTensor*> out;
    for (auto& layer : dense_)
        for (auto* p : layer.params()) out.push_back(p);
    return out;
}

ProjectionHead::ProjectionHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim,
                               Rng& rng)
    : hidden_("projection.hidden", in_dim, hidden_dim), out_("projection.out", hidden_dim, out_dim) {
    hidden_.init(rng);
    out_.init(rng);
}

Matrix ProjectionHead::forward(const Matrix& r) {
    return normalize_.forward(out_.forward(relu_.forward(hidden_.forward(r))));
}

Matrix ProjectionHead::backward(const Matrix& grad_z) {
    return hidden_.backward(relu_.backward(out_.backward(normalize_.backward(grad_z))));
}

std::vector<ParamTensor*> ProjectionHead::params() {
    std::vector<ParamTensor*> out;
    for (auto* p : hidden_.params()) out.push_back(p);
    for (auto* p : out_.params()) out.push_back(p);
    return out;
}

ClassifierHead::ClassifierHead(std::size_t in_dim, std::size_t num_classes, Rng& rng)
    : dense_("classifier", in_dim, num_classes) {
    dense_.init(rng);
}

Matrix ClassifierHead::forward(const Matrix& r) { return dense_.forward(r); }

Matrix ClassifierHead::backward(const Matrix& grad_s) { return dense_.backward(grad_s); }

std::vector<ParamTensor*> ClassifierHead::params() { return dense_.params(); }

namespace {

Rng make_init_rng(const ModelConfig& cfg) {
    cfg.validate();
    return Rng(cfg.init_seed, /*stream=*/0x6d6f64656cull);  // "model"
}

}  // namespace

HybridModel::HybridModel(const ModelConfig& cfg)
    : cfg_(cfg),
      backbone_([&] {
          Rng rng = make_init_rng(cfg);
          return BackboneMlp(cfg.input_dim, cfg.backbone_widths, rng);
      }()),
      projection_([&] {
          Rng rng(cfg.init_seed, 0x70726f6aull);  // "proj"
          return ProjectionHead(cfg.feature_dim(), cfg.projection_hidden, cfg.embed_dim, rng);
      }()),
      classifier_([&] {
          Rng rng(cfg.init_seed, 0x636c6673ull);  // "clfs"
          return ClassifierHead(cfg.feature_dim(), cfg.num_classes, rng);
      }()) {}

void HybridModel::zero_grad() {
    for (auto* p : params()) p->zero_grad();
}

std::vector<ParamTensor*> HybridModel::params() {
    std::vector<ParamTensor*> out = backbone_.params();
    for (auto* p : projection_.params()) out.push_back(p);
    for (auto* p : classifier_.params()) out.push_back(p);
    return out;
}

}  // namespace tailnet
