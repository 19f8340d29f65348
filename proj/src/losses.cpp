#include "tailnet/losses.hpp"

#include "tailnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tailnet {

namespace {

// log Σ exp(v) over the active entries, stabilized by the running max.
double log_sum_exp(const std::vector<double>& values) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values) m = std::max(m, v);
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - m);
    return m + std::log(sum);
}

void check_labels(const std::vector<int>& labels, std::size_t num_classes, const char* who) {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
            throw ConfigError(std::string(who) + ": label " + std::to_string(labels[i]) +
                              " at row " + std::to_string(i) + " outside [0," +
                              std::to_string(num_classes) + ")");
}

void check_unit_rows(const Matrix& m, double tol, const char* who) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double norm = m.row_norm(i);
        if (std::fabs(norm - 1.0) > tol)
            throw ConfigError(std::string(who) + ": row " + std::to_string(i) +
                              " is not unit-norm (|" + std::to_string(norm) + " - 1| > tol)");
    }
}

}  // namespace

Temperature::Temperature(double t) : tau(t) {
    if (!(t > 0.0)) throw ConfigError("Temperature: tau must be positive");
}

EmbeddingBatch::EmbeddingBatch(Matrix z_in, std::vector<int> labels_in, std::vector<int> view_ids_in)
    : z(std::move(z_in)), labels(std::move(labels_in)), view_ids(std::move(view_ids_in)) {
    if (view_ids.empty()) view_ids.assign(z.rows(), 0);
}

void EmbeddingBatch::validate(double unit_tol) const {
    if (z.rows() == 0) throw ConfigError("EmbeddingBatch: empty batch");
    if (labels.size() != z.rows()) throw ConfigError("EmbeddingBatch: labels/rows mismatch");
    if (view_ids.size() != z.rows()) throw ConfigError("EmbeddingBatch: view_ids/rows mismatch");
    for (int y : labels)
        if (y < 0) throw ConfigError("EmbeddingBatch: negative label");
    check_unit_rows(z, unit_tol, "EmbeddingBatch");
}

LogitsBatch::LogitsBatch(Matrix s_in, std::vector<int> labels_in)
    : s(std::move(s_in)), labels(std::move(labels_in)) {}

void LogitsBatch::validate() const {
    if (s.rows() == 0) throw ConfigError("LogitsBatch: empty batch");
    if (labels.size() != s.rows()) throw ConfigError("LogitsBatch: labels/rows mismatch");
    check_labels(labels, s.cols(), "LogitsBatch");
}

CeResult ce_loss(const LogitsBatch& batch) {
    batch.validate();
    const std::size_t n = batch.size();
    const std::size_t c = batch.num_classes();
    CeResult result;
    result.grad_logits = Matrix(n, c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = batch.s.row_ptr(i);
        double m = row[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - m);
        const double log_z = m + std::log(sum);
        const int y = batch.labels[i];
        total += log_z - row[y];
        double* g = result.grad_logits.row_ptr(i);
        for (std::size_t j = 0; j < c; ++j) g[j] = std::exp(row[j] - log_z) / static_cast<double>(n);
        g[y] -= 1.0 / static_cast<double>(n);
    }
    result.loss = total / static_cast<double>(n);
    return result;
}

namespace {

std::vector<std::vector<int>> positives_from_labels(const std::vector<int>& labels) {
    const std::size_t n = labels.size();
    std::vector<std::vector<int>> positives(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && labels[i] == labels[j]) positives[i].push_back(static_cast<int>(j));
    return positives;
}

}  // namespace

ScResult sc_loss(const EmbeddingBatch& batch, Temperature tau) {
    return sc_loss(batch, tau, positives_from_labels(batch.labels));
}

ScResult sc_loss(const EmbeddingBatch& batch, Temperature tau,
                 const std::vector<std::vector<int>>& positives) {
    batch.validate(1e-3);
    const std::size_t n = batch.size();
    if (positives.size() != n) throw ConfigError("sc_loss: positives list size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (positives[i].empty())
            throw BatchCompositionError("sc_loss: anchor " + std::to_string(i) +
                                        " has no positives in the batch");
        for (int j : positives[i]) {
            if (j < 0 || static_cast<std::size_t>(j) >= n || static_cast<std::size_t>(j) == i)
                throw ConfigError("sc_loss: invalid positive index for anchor " + std::to_string(i));
            if (batch.labels[j] != batch.labels[i])
                throw ConfigError("sc_loss: listed positive " + std::to_string(j) +
                                  " of anchor " + std::to_string(i) + " has a different label");
        }
    }

    // Pairwise similarities z_i·z_j/τ.
    Matrix sims = matmul_nt(batch.z, batch.z);
    sims *= 1.0 / tau.tau;

    ScResult result;
    result.per_anchor.assign(n, 0.0);
    result.grad_z = Matrix(n, batch.z.cols());

    // d(loss)/d(sims): filled per anchor, applied through the product rule on
    // both rows of each similarity.
    Matrix sim_grad(n, n);

    for (std::size_t i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k)
            if (k != i) m = std::max(m, sims(i, k));
        double denom = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            if (k != i) denom += std::exp(sims(i, k) - m);
        const double log_denom = m + std::log(denom);

        const double inv_p = 1.0 / static_cast<double>(positives[i].size());
        double anchor_loss = 0.0;
        for (int j : positives[i]) anchor_loss += log_denom - sims(i, j);
        result.per_anchor[i] = inv_p * anchor_loss;

        // Each of the |P_i| log terms contributes a full softmax over k≠i, so
        // the softmax coefficient survives the 1/|P_i| average intact.
        for (std::size_t k = 0; k < n; ++k)
            if (k != i) sim_grad(i, k) += std::exp(sims(i, k) - log_denom);
        for (int j : positives[i]) sim_grad(i, j) -= inv_p;
    }

    for (std::size_t i = 0; i < n; ++i) {
        result.loss += result.per_anchor[i];
        for (std::size_t k = 0; k < n; ++k) {
            const double g = sim_grad(i, k);
            if (g == 0.0) continue;
            const double* zk = batch.z.row_ptr(k);
            const double* zi = batch.z.row_ptr(i);
            double* gi = result.grad_z.row_ptr(i);
            double* gk = result.grad_z.row_ptr(k);
            const double scaled = g / tau.tau;
            for (std::size_t d = 0; d < batch.z.cols(); ++d) {
                gi[d] += scaled * zk[d];
                gk[d] += scaled * zi[d];
            }
        }
    }
    return result;
}

PscResult psc_loss(const EmbeddingBatch& batch, const PrototypeBank& prototypes, Temperature tau) {
    batch.validate(1e-3);
    if (prototypes.per_class() != 1)
        throw ConfigError("psc_loss: prototype bank must have exactly one prototype per class");
    const std::size_t c = prototypes.num_classes();
    if (c < 2) throw ConfigError("psc_loss: need at least 2 classes (no negatives otherwise)");
    check_labels(batch.labels, c, "psc_loss");
    check_unit_rows(prototypes.values(), 1e-3, "psc_loss prototypes");
    if (batch.z.cols() != prototypes.dim())
        throw ConfigError("psc_loss: embedding/prototype dimension mismatch");

    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double inv_tau = 1.0 / tau.tau;

    // s_ic = z_i·p_c/τ
    Matrix scores = matmul_nt(batch.z, prototypes.values());
    scores *= inv_tau;

    PscResult result;
    result.grad_z = Matrix(n, batch.z.cols());
    result.grad_prototypes = Matrix(c, prototypes.dim());
    result.affinity_grad = Matrix(n, c);

    for (std::size_t i = 0; i < n; ++i) {
        const int y = batch.labels[i];
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j)
            if (static_cast<int>(j) != y) m = std::max(m, scores(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            if (static_cast<int>(j) != y) denom += std::exp(scores(i, j) - m);
        const double log_denom = m + std::log(denom);

        result.loss += log_denom - scores(i, y);

        // coef_ij = dL_i/ds_ij with s the τ-scaled score.
        for (std::size_t j = 0; j < c; ++j) {
            const double coef = (static_cast<int>(j) == y)
                                    ? -1.0
                                    : std::exp(scores(i, j) - log_denom);
            result.affinity_grad(i, j) = coef * inv_tau;  // d per-sample loss / d(z_i·p_j)
            const double scaled = coef * inv_tau * inv_n;
            const double* p = prototypes.values().row_ptr(j);
            const double* z = batch.z.row_ptr(i);
            double* gz = result.grad_z.row_ptr(i);
            double* gp = result.grad_prototypes.row_ptr(j);
            for (std::size_t d = 0; d < batch.z.cols(); ++d) {
                gz[d] += scaled * p[d];
                gp[d] += scaled * z[d];
            }
        }
    }
    result.loss *= inv_n;
    return result;
}

MpscResult mpsc_loss(const EmbeddingBatch& batch, const PrototypeBank& prototypes,
                     Temperature tau, AffinityMode mode) {
    const std::size_t n = batch.size();
    const std::size_t m_protos = prototypes.per_class();
    Matrix w(n, m_protos);
    if (mode == AffinityMode::kUniform) {
        w.fill(1.0 / static_cast<double>(m_protos));
    } else {
        batch.validate(1e-3);
        check_labels(batch.labels, prototypes.num_classes(), "mpsc_loss");
        const double inv_tau = 1.0 / tau.tau;
        for (std::size_t i = 0; i < n; ++i) {
            const int y = batch.labels[i];
            std::vector<double> sims(m_protos);
            for (std::size_t k = 0; k < m_protos; ++k)
                sims[k] = batch.z.dot_rows(i, prototypes.values(), prototypes.row_index(y, k)) *
                          inv_tau;
            const double lse = log_sum_exp(sims);
            for (std::size_t k = 0; k < m_protos; ++k) w(i, k) = std::exp(sims[k] - lse);
        }
    }
    return mpsc_loss_with_weights(batch, prototypes, tau, w);
}

MpscResult mpsc_loss_with_weights(const EmbeddingBatch& batch, const PrototypeBank& prototypes,
                                  Temperature tau, const Matrix& w) {
    batch.validate(1e-3);
    const std::size_t c = prototypes.num_classes();
    const std::size_t m_protos = prototypes.per_class();
    if (c < 2) throw ConfigError("mpsc_loss: need at least 2 classes");
    check_labels(batch.labels, c, "mpsc_loss");
    check_unit_rows(prototypes.values(), 1e-3, "mpsc_loss prototypes");
    if (batch.z.cols() != prototypes.dim())
        throw ConfigError("mpsc_loss: embedding/prototype dimension mismatch");

    const std::size_t n = batch.size();
    if (w.rows() != n || w.cols() != m_protos)
        throw ConfigError("mpsc_loss: weight matrix must be N×M");
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t k = 0; k < m_protos; ++k) {
            if (!(w(i, k) > 0.0))
                throw ConfigError("mpsc_loss: affinity w must be strictly positive (row " +
                                  std::to_string(i) + ")");
            row_sum += w(i, k);
        }
        if (std::fabs(row_sum - 1.0) > 1e-6)
            throw ConfigError("mpsc_loss: affinity row " + std::to_string(i) + " sums to " +
                              std::to_string(row_sum) + ", expected 1");
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    const double inv_m = 1.0 / static_cast<double>(m_protos);
    const double inv_tau = 1.0 / tau.tau;

    // scores[i][(j,m)] = z_i·p^m_j/τ over the flattened bank.
    Matrix scores = matmul_nt(batch.z, prototypes.values());
    scores *= inv_tau;

    MpscResult result;
    result.grad_z = Matrix(n, batch.z.cols());
    result.grad_prototypes = Matrix(c * m_protos, prototypes.dim());
    result.weights = w;

    for (std::size_t i = 0; i < n; ++i) {
        const int y = batch.labels[i];

        double max_neg = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) {
            if (static_cast<int>(j) == y) continue;
            for (std::size_t k = 0; k < m_protos; ++k)
                max_neg = std::max(max_neg, scores(i, prototypes.row_index(j, k)));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (static_cast<int>(j) == y) continue;
            for (std::size_t k = 0; k < m_protos; ++k)
                denom += std::exp(scores(i, prototypes.row_index(j, k)) - max_neg);
        }
        const double log_denom = max_neg + std::log(denom);

        // L_i = −(1/M) Σ_k [log w_{i,k} + s^k_{y}] + log D_i  (w constant in backward)
        double sample_loss = log_denom;
        for (std::size_t k = 0; k < m_protos; ++k)
            sample_loss -= inv_m * (std::log(w(i, k)) + scores(i, prototypes.row_index(y, k)));
        result.loss += sample_loss;

        const double* z = batch.z.row_ptr(i);
        double* gz = result.grad_z.row_ptr(i);
        for (std::size_t j = 0; j < c; ++j) {
            for (std::size_t k = 0; k < m_protos; ++k) {
                const std::size_t row = prototypes.row_index(j, k);
                const double coef = (static_cast<int>(j) == y)
                                        ? -inv_m
                                        : std::exp(scores(i, row) - log_denom);
                const double scaled = coef * inv_tau * inv_n;
                const double* p = prototypes.values().row_ptr(row);
                double* gp = result.grad_prototypes.row_ptr(row);
                for (std::size_t d = 0; d < batch.z.cols(); ++d) {
                    gz[d] += scaled * p[d];
                    gp[d] += scaled * z[d];
                }
            }
        }
    }
    result.loss *= inv_n;
    return result;
}

CurriculumSchedule CurriculumSchedule::parabolic(std::size_t t_max) {
    CurriculumSchedule s;
    s.kind = ScheduleKind::kParabolic;
    s.t_max = t_max;
    s.validate();
    return s;
}

CurriculumSchedule CurriculumSchedule::linear(std::size_t t_max) {
    CurriculumSchedule s;
    s.kind = ScheduleKind::kLinear;
    s.t_max = t_max;
    s.validate();
    return s;
}

CurriculumSchedule CurriculumSchedule::constant(double alpha0) {
    CurriculumSchedule s;
    s.kind = ScheduleKind::kConstant;
    s.t_max = 0;  // unbounded
    s.alpha0 = alpha0;
    s.validate();
    return s;
}

void CurriculumSchedule::validate() const {
    if (kind == ScheduleKind::kConstant) {
        if (alpha0 < 0.0 || alpha0 > 1.0)
            throw ConfigError("CurriculumSchedule: constant alpha must be in [0,1]");
    } else if (t_max < 1) {
        throw ConfigError("CurriculumSchedule: t_max must be a positive epoch count");
    }
}

double curriculum_alpha(const CurriculumSchedule& schedule, std::size_t epoch) {
    schedule.validate();
    if (schedule.t_max > 0 && epoch > schedule.t_max)
        throw std::out_of_range("curriculum_alpha: epoch " + std::to_string(epoch) +
                                " beyond t_max " + std::to_string(schedule.t_max));
    switch (schedule.kind) {
        case ScheduleKind::kConstant:
            return schedule.alpha0;
        case ScheduleKind::kLinear:
            return 1.0 - static_cast<double>(epoch) / static_cast<double>(schedule.t_max);
        case ScheduleKind::kParabolic: {
            const double r = static_cast<double>(epoch) / static_cast<double>(schedule.t_max);
            return 1.0 - r * r;
        }
    }
    throw ConfigError("curriculum_alpha: unknown schedule kind");
}

double hybrid_loss(double contrastive_loss, double ce_loss_value, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("hybrid_loss: alpha must be in [0,1]");
    return alpha * contrastive_loss + (1.0 - alpha) * ce_loss_value;
}

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::kParabolic: return "parabolic";
        case ScheduleKind::kLinear: return "linear";
        case ScheduleKind::kConstant: return "constant";
    }
    return "?";
}

std::string to_string(AffinityMode mode) {
    return mode == AffinityMode::kUniform ? "uniform" : "softmax";
}

}  // namespace tailnet
