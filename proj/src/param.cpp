#include "tailnet/param.hpp"

#include "tailnet/errors.hpp"

#include <cmath>

namespace tailnet {

ParamTensor::ParamTensor(std::string param_name, Matrix initial)
    : name(std::move(param_name)),
      value(std::move(initial)),
      grad(value.rows(), value.cols()) {}

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("SgdConfig: learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("SgdConfig: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("SgdConfig: weight_decay must be non-negative");
}

void sgd_step(ParamTensor& param, Matrix& velocity, const SgdConfig& cfg) {
    if (!param.grad.all_finite())
        throw TrainingAborted("sgd_step: non-finite gradient in parameter '" + param.name + "'");
    const std::size_t n = param.value.raw().size();
    for (std::size_t i = 0; i < n; ++i) {
        const double g = param.grad.raw()[i] + cfg.weight_decay * param.value.raw()[i];
        velocity.raw()[i] = cfg.momentum * velocity.raw()[i] + g;
        param.value.raw()[i] -= cfg.learning_rate * velocity.raw()[i];
    }
}

SgdOptimizer::SgdOptimizer(SgdConfig cfg, std::vector<ParamTensor*> params)
    : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    velocity_.reserve(params_.size());
    for (const auto* p : params_) velocity_.emplace_back(p->value.rows(), p->value.cols());
}

void SgdOptimizer::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) sgd_step(*params_[i], velocity_[i], cfg_);
}

void SgdOptimizer::step_subset(const std::vector<std::size_t>& param_indices) {
    for (std::size_t i : param_indices) {
        if (i >= params_.size()) throw ConfigError("SgdOptimizer: parameter index out of range");
        sgd_step(*params_[i], velocity_[i], cfg_);
    }
}

void SgdOptimizer::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw ConfigError("SgdOptimizer: learning rate must be positive");
    cfg_.learning_rate = lr;
}

void SgdOptimizer::set_velocities(std::vector<Matrix> v) {
    if (v.size() != velocity_.size())
        throw CheckpointError("SgdOptimizer: velocity count mismatch");
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!v[i].same_shape(velocity_[i]))
            throw CheckpointError("SgdOptimizer: velocity shape mismatch for parameter '" +
                                  params_[i]->name + "'");
    velocity_ = std::move(v);
}

}  // namespace tailnet
