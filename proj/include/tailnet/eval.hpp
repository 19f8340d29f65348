#pragma once

#include "tailnet/data.hpp"
#include "tailnet/model.hpp"

#include <nlohmann/json_fwd.hpp>
#include <vector>

namespace tailnet {

/// Classification accuracy plus feature-geometry diagnostics on the
/// contrastive embeddings: compact classes and well-separated centroids are
/// what the contrastive branch is supposed to buy.
struct EvalReport {
    double top1 = 0.0;
    std::vector<double> per_class_acc;
    double head_acc = 0.0;  // mean accuracy over the top third of classes by training count
    double tail_acc = 0.0;  // mean accuracy over the bottom third
    /// Mean cosine similarity of each embedding to its class centroid.
    double intra_class_compactness = 0.0;
    /// Mean pairwise cosine distance (1 − cos) between class centroids.
    double inter_class_separability = 0.0;

    nlohmann::json to_json() const;
};

/// Argmax over classifier logits on the (balanced) test set. When
/// train_counts is omitted, classes are assumed ordered by descending
/// training count — which is how the long-tail builders lay them out.
EvalReport evaluate(HybridModel& model, const Dataset& test_set,
                    const std::vector<std::size_t>* train_counts = nullptr);

}  // namespace tailnet
