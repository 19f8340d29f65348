#pragma once

#include "tailnet/param.hpp"

#include <cstddef>

namespace tailnet {

class Rng;

/// Learnable class prototypes living on the unit hypersphere in the
/// contrastive embedding space. Stored as one (C·M)×D parameter, rows
/// class-major: row_index(c, m) = c·M + m. The optimizer moves prototypes
/// like any other parameter; renormalize() projects them back to the sphere
/// after each step.
class PrototypeBank {
public:
    PrototypeBank(std::size_t num_classes, std::size_t per_class, std::size_t dim);

    /// Random Gaussian directions, normalized to unit length.
    void init_gaussian(Rng& rng);

    std::size_t num_classes() const { return num_classes_; }
    std::size_t per_class() const { return per_class_; }
    std::size_t dim() const { return param_.value.cols(); }
    std::size_t row_index(std::size_t class_id, std::size_t proto_id) const {
        return class_id * per_class_ + proto_id;
    }

    ParamTensor& param() { return param_; }
    const ParamTensor& param() const { return param_; }
    const Matrix& values() const { return param_.value; }

    /// Scales every row back to unit norm, preserving direction. A row whose
    /// norm has collapsed below 1e-12 aborts with its class/prototype id.
    void renormalize();

    /// Max deviation of any row norm from 1.
    double max_norm_deviation() const;

private:
    std::size_t num_classes_;
    std::size_t per_class_;
    ParamTensor param_;
};

}  // namespace tailnet
