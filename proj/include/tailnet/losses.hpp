#pragma once

#include "tailnet/matrix.hpp"
#include "tailnet/prototypes.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace tailnet {

struct Temperature {
    double tau;
    explicit Temperature(double t);
};

/// L2-normalized contrastive embeddings with class labels. view_id
/// distinguishes augmented views of the same source sample; views carry
/// distinct row indexes, so positive sets fall out of the labels alone.
struct EmbeddingBatch {
    Matrix z;                    // N×D, unit rows
    std::vector<int> labels;     // in [0, C)
    std::vector<int> view_ids;   // parallel to rows

    EmbeddingBatch() = default;
    EmbeddingBatch(Matrix z_in, std::vector<int> labels_in, std::vector<int> view_ids_in = {});

    std::size_t size() const { return z.rows(); }
    /// Unit rows within tol, labels non-negative, N ≥ 1. The pipeline holds
    /// rows at 1e-6; the losses themselves check at 1e-3 only, because they
    /// are smooth in an ambient neighborhood of the sphere and the
    /// finite-difference oracle probes them there.
    void validate(double unit_tol = 1e-6) const;
};

struct LogitsBatch {
    Matrix s;  // N×C
    std::vector<int> labels;

    LogitsBatch() = default;
    LogitsBatch(Matrix s_in, std::vector<int> labels_in);

    std::size_t size() const { return s.rows(); }
    std::size_t num_classes() const { return s.cols(); }
    void validate() const;
};

// ---------------------------------------------------------------------------
// Cross-entropy
// ---------------------------------------------------------------------------

struct CeResult {
    double loss = 0.0;       // mean over rows of −log softmax(s)[label]
    Matrix grad_logits;      // (softmax − one-hot)/N
};

CeResult ce_loss(const LogitsBatch& batch);

// ---------------------------------------------------------------------------
// Supervised contrastive
// ---------------------------------------------------------------------------

struct ScResult {
    double loss = 0.0;               // sum over anchors of per-anchor terms
    std::vector<double> per_anchor;  // mean over positives of −log(exp(z_i·z_j/τ)/Σ_{k≠i}exp(z_i·z_k/τ))
    Matrix grad_z;                   // d(loss)/dz in ambient coordinates
};

/// Positive set of anchor i is {j | y_j = y_i, j ≠ i}; the denominator runs
/// over every other row, positives included. An anchor with an empty positive
/// set is a batch-composition error.
ScResult sc_loss(const EmbeddingBatch& batch, Temperature tau);

/// Same loss with explicit per-anchor positive sets (used when a batch
/// composer caps the number of positives per anchor). Each listed positive
/// must share the anchor's label; empty sets are rejected.
ScResult sc_loss(const EmbeddingBatch& batch, Temperature tau,
                 const std::vector<std::vector<int>>& positives);

// ---------------------------------------------------------------------------
// Prototypical supervised contrastive
// ---------------------------------------------------------------------------

struct PscResult {
    double loss = 0.0;     // mean over batch; may be negative (see below)
    Matrix grad_z;         // N×D
    Matrix grad_prototypes;  // C×D
    /// d L_i / d(z_i·p_c): per-sample gradient w.r.t. the raw affinities.
    /// Column y_i is exactly −1/τ for every sample; a negative column c holds
    /// exp(s_c)/Σ_{y≠y_i}exp(s_y) · (1/τ) with s = affinity/τ.
    Matrix affinity_grad;  // N×C
};

/// L_i = −z_i·p_{y_i}/τ + log Σ_{j≠y_i} exp(z_i·p_j/τ), averaged over the
/// batch. The positive class is excluded from the denominator — deliberately,
/// unlike most contrastive losses — so the numerator no longer bounds the
/// ratio and the loss can go negative; per sample it lies in
/// [−2/τ, 2/τ + ln(C−1)] for unit vectors.
PscResult psc_loss(const EmbeddingBatch& batch, const PrototypeBank& prototypes, Temperature tau);

// ---------------------------------------------------------------------------
// Multi-prototype extension
// ---------------------------------------------------------------------------

enum class AffinityMode {
    kUniform,  // w_{i,k} = 1/M
    kSoftmax,  // w_{i,·} = softmax over the sample's within-class prototype similarities (same τ)
};

struct MpscResult {
    double loss = 0.0;
    Matrix grad_z;           // N×D
    Matrix grad_prototypes;  // (C·M)×D
    Matrix weights;          // N×M, the affinities actually used
};

/// L_i = (−1/M) Σ_k log[ w_{i,k}·exp(z_i·p^k_{y_i}/τ) / Σ_{j≠y_i}Σ_m exp(z_i·p^m_j/τ) ],
/// averaged over the batch. The affinities w are treated as constants in the
/// backward pass; with M = 1 and uniform weights this reduces exactly to
/// psc_loss.
MpscResult mpsc_loss(const EmbeddingBatch& batch, const PrototypeBank& prototypes,
                     Temperature tau, AffinityMode mode);

/// Explicit-weight variant: w is N×M, rows non-negative and summing to 1.
/// This is also the hook for checking softmax-mode gradients against finite
/// differences with the weights frozen at the evaluation point.
MpscResult mpsc_loss_with_weights(const EmbeddingBatch& batch, const PrototypeBank& prototypes,
                                  Temperature tau, const Matrix& w);

// ---------------------------------------------------------------------------
// Curriculum and hybrid combination
// ---------------------------------------------------------------------------

enum class ScheduleKind { kParabolic, kLinear, kConstant };

struct CurriculumSchedule {
    ScheduleKind kind = ScheduleKind::kParabolic;
    std::size_t t_max = 1;
    double alpha0 = 0.5;  // used by kConstant only

    static CurriculumSchedule parabolic(std::size_t t_max);
    static CurriculumSchedule linear(std::size_t t_max);
    static CurriculumSchedule constant(double alpha0);

    void validate() const;
};

/// α(T): parabolic → 1−(T/t_max)², linear → 1−T/t_max, constant → α₀.
/// T beyond t_max is a range error.
double curriculum_alpha(const CurriculumSchedule& schedule, std::size_t epoch);

/// α·contrastive + (1−α)·ce. α outside [0,1] is a configuration error.
double hybrid_loss(double contrastive_loss, double ce_loss_value, double alpha);

std::string to_string(ScheduleKind kind);
std::string to_string(AffinityMode mode);

}  // namespace tailnet
