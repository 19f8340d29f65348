#include "tailnet/eval.hpp"

#include "tailnet/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tailnet {

nlohmann::json EvalReport::to_json() const {
    return nlohmann::json{{"top1", top1},
                          {"per_class_acc", per_class_acc},
                          {"head_acc", head_acc},
                          {"tail_acc", tail_acc},
                          {"intra_class_compactness", intra_class_compactness},
                          {"inter_class_separability", inter_class_separability}};
}

EvalReport evaluate(HybridModel& model, const Dataset& test_set,
                    const std::vector<std::size_t>* train_counts) {
    if (test_set.size() == 0) throw ConfigError("evaluate: empty test set");
    const std::size_t c = test_set.num_classes();

    const Matrix r = model.forward_features(test_set.features);
    const Matrix logits = model.forward_classifier(r);
    const Matrix z = model.forward_contrastive(r);

    EvalReport report;
    std::vector<std::size_t> correct(c, 0), total(c, 0);
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const double* row = logits.row_ptr(i);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (row[j] > row[arg]) arg = j;
        const auto y = static_cast<std::size_t>(test_set.labels[i]);
        ++total[y];
        if (arg == y) ++correct[y];
    }

    report.per_class_acc.resize(c, 0.0);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < c; ++k) {
        if (total[k] == 0) throw ConfigError("evaluate: class " + std::to_string(k) +
                                             " missing from the test set");
        report.per_class_acc[k] = static_cast<double>(correct[k]) / static_cast<double>(total[k]);
        hits += correct[k];
    }
    report.top1 = static_cast<double>(hits) / static_cast<double>(test_set.size());

    // Head/tail split: top and bottom thirds by training count (class-id order
    // already encodes the count ranking for generated long-tail data).
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    if (train_counts) {
        if (train_counts->size() != c) throw ConfigError("evaluate: train_counts size mismatch");
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return (*train_counts)[a] > (*train_counts)[b];
        });
    }
    const std::size_t third = std::max<std::size_t>(1, c / 3);
    double head = 0.0, tail = 0.0;
    for (std::size_t k = 0; k < third; ++k) {
        head += report.per_class_acc[order[k]];
        tail += report.per_class_acc[order[c - 1 - k]];
    }
    report.head_acc = head / static_cast<double>(third);
    report.tail_acc = tail / static_cast<double>(third);

    // Class centroids of the contrastive embeddings.
    Matrix centroids(c, z.cols());
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const auto y = static_cast<std::size_t>(test_set.labels[i]);
        const double* src = z.row_ptr(i);
        double* dst = centroids.row_ptr(y);
        for (std::size_t d = 0; d < z.cols(); ++d) dst[d] += src[d];
    }
    for (std::size_t k = 0; k < c; ++k) {
        double* row = centroids.row_ptr(k);
        for (std::size_t d = 0; d < z.cols(); ++d) row[d] /= static_cast<double>(total[k]);
    }

    const auto cosine = [](const double* a, const double* b, std::size_t dim) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            dot += a[d] * b[d];
            na += a[d] * a[d];
            nb += b[d] * b[d];
        }
        const double denom = std::sqrt(na) * std::sqrt(nb);
        return denom > 0.0 ? dot / denom : 0.0;
    };

    double compact = 0.0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const auto y = static_cast<std::size_t>(test_set.labels[i]);
        compact += cosine(z.row_ptr(i), centroids.row_ptr(y), z.cols());
    }
    report.intra_class_compactness = compact / static_cast<double>(test_set.size());

    double sep = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < c; ++a)
        for (std::size_t b = a + 1; b < c; ++b) {
            sep += 1.0 - cosine(centroids.row_ptr(a), centroids.row_ptr(b), z.cols());
            ++pairs;
        }
    report.inter_class_separability = pairs > 0 ? sep / static_cast<double>(pairs) : 0.0;

    return report;
}

}  // namespace tailnet
