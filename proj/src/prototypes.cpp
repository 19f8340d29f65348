#include "tailnet/prototypes.hpp"

#include "tailnet/errors.hpp"
#include "tailnet/rng.hpp"

#include <cmath>
#include <string>

namespace tailnet {

PrototypeBank::PrototypeBank(std::size_t num_classes, std::size_t per_class, std::size_t dim)
    : num_classes_(num_classes),
      per_class_(per_class),
      param_("prototypes", Matrix(num_classes * per_class, dim)) {
    if (num_classes < 2) throw ConfigError("PrototypeBank: need at least 2 classes");
    if (per_class < 1) throw ConfigError("PrototypeBank: need at least 1 prototype per class");
    if (dim == 0) throw ConfigError("PrototypeBank: zero embedding dimension");
}

void PrototypeBank::init_gaussian(Rng& rng) {
    for (auto& v : param_.value.raw()) v = rng.gaussian();
    renormalize();
}

void PrototypeBank::renormalize() {
    Matrix& p = param_.value;
    for (std::size_t r = 0; r < p.rows(); ++r) {
        const double norm = p.row_norm(r);
        if (norm < 1e-12)
            throw TrainingAborted("PrototypeBank: prototype collapsed (class " +
                                  std::to_string(r / per_class_) + ", prototype " +
                                  std::to_string(r % per_class_) + ")");
        double* row = p.row_ptr(r);
        for (std::size_t j = 0; j < p.cols(); ++j) row[j] /= norm;
    }
}

double PrototypeBank::max_norm_deviation() const {
    double worst = 0.0;
    for (std::size_t r = 0; r < param_.value.rows(); ++r)
        worst = std::max(worst, std::fabs(param_.value.row_norm(r) - 1.0));
    return worst;
}

}  // namespace tailnet
