#pragma once

#include "tailnet/matrix.hpp"

#include <string>
#include <vector>

namespace tailnet {

/// A learnable tensor: value plus an explicitly managed gradient accumulator.
/// Gradients accumulate across backward calls until zero_grad() is invoked.
struct ParamTensor {
    std::string name;
    Matrix value;
    Matrix grad;

    ParamTensor() = default;
    ParamTensor(std::string param_name, Matrix initial);

    void zero_grad() { grad.fill(0.0); }
};

struct SgdConfig {
    double learning_rate = 0.1;
    double momentum = 0.0;
    double weight_decay = 0.0;

    void validate() const;
};

/// v ← momentum·v + (grad + weight_decay·value); value ← value − lr·v.
/// The decay term enters the velocity, matching the convention of the major
/// deep-learning frameworks. Throws TrainingAborted on a non-finite gradient.
void sgd_step(ParamTensor& param, Matrix& velocity, const SgdConfig& cfg);

/// Momentum-SGD over a fixed parameter list. Velocities are zero-initialized
/// and owned here; the learning rate may be rescaled between steps.
class SgdOptimizer {
public:
    SgdOptimizer(SgdConfig cfg, std::vector<ParamTensor*> params);

    void step();
    /// Updates only the named subset; everything else stays bitwise untouched
    /// (weight decay included), which is what a frozen stage needs.
    void step_subset(const std::vector<std::size_t>& param_indices);

    void set_learning_rate(double lr);
    double learning_rate() const { return cfg_.learning_rate; }
    const Matrix& velocity(std::size_t i) const { return velocity_[i]; }
    std::size_t num_params() const { return params_.size(); }

    const std::vector<Matrix>& velocities() const { return velocity_; }
    void set_velocities(std::vector<Matrix> v);  // shapes must match

private:
    SgdConfig cfg_;
    std::vector<ParamTensor*> params_;
    std::vector<Matrix> velocity_;
};

}  // namespace tailnet
