#pragma once

#include "tailnet/data.hpp"
#include "tailnet/eval.hpp"
#include "tailnet/losses.hpp"
#include "tailnet/model.hpp"
#include "tailnet/param.hpp"
#include "tailnet/prototypes.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tailnet {

enum class LossKind { kSc, kPsc, kMpsc, kCeCe };

std::string to_string(LossKind kind);

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t sc_batch = 32;  // sources per contrastive step (each yields two views)
    std::size_t ce_batch = 64;
    SgdConfig sgd{0.1, 0.9, 1e-4};
    std::vector<std::size_t> lr_milestones;  // strictly increasing, < epochs
    double lr_decay = 0.1;                   // in (0,1)
    CurriculumSchedule schedule = CurriculumSchedule::parabolic(1);
    LossKind loss = LossKind::kPsc;
    double tau = 0.1;
    std::size_t prototypes_per_class = 1;
    AffinityMode affinity = AffinityMode::kUniform;
    SamplerKind sc_sampler = SamplerKind::kRandom;
    SamplerKind ce_sampler = SamplerKind::kBalanced;
    double view_sigma = 0.1;
    std::size_t positives_cap = 0;  // 0 = all same-class rows
    std::uint64_t seed = 1;
    bool two_stage = false;
    bool eval_each_epoch = true;
    std::string checkpoint_path;       // empty = no periodic checkpoints
    std::size_t checkpoint_every = 0;  // epochs; 0 = off

    void validate() const;
    nlohmann::json to_json() const;
};

/// Rebuilds the curriculum for a run of `epochs` epochs so the emitted α
/// spans exactly [α(0)=1 … α(last)=0] for the decaying kinds.
CurriculumSchedule schedule_for_epochs(ScheduleKind kind, std::size_t epochs,
                                       double alpha0 = 0.5);

struct EpochRecord {
    std::size_t epoch = 0;
    double alpha = 0.0;
    double lr = 0.0;
    std::optional<double> contrastive_loss;  // mean over steps; absent in a CE-only stage
    std::optional<double> ce_loss;           // absent in a contrastive-only stage
    std::optional<double> hybrid;            // α·contrastive + (1−α)·ce when both ran
    std::optional<double> train_top1;
    std::optional<double> test_top1;
};

struct RunReport {
    std::vector<EpochRecord> epochs;
    EvalReport final_eval;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    nlohmann::json config_echo;

    nlohmann::json to_json() const;
    /// One row per epoch, fixed columns:
    /// epoch,alpha,lr,contrastive_loss,ce_loss,hybrid_loss,train_top1,test_top1
    void write_csv(const std::string& path) const;
    void write_json(const std::string& path) const;
};

/// Runs the two-branch curriculum loop: per step, a contrastive batch and an
/// independent classifier batch flow through the shared backbone; their
/// gradients are pre-scaled by α and 1−α and applied in a single SGD step.
class Trainer {
public:
    Trainer(HybridModel& model, PrototypeBank& prototypes, const Dataset& train,
            const Dataset& test, TrainConfig cfg);

    /// Executes the configured run (joint curriculum or two-stage) from the
    /// current epoch cursor to cfg.epochs.
    RunReport run();

    void save_checkpoint(const std::string& path) const;
    /// Atomic: either the whole state (parameters, prototypes, velocities,
    /// RNG streams, epoch cursor) is replaced, or nothing is.
    void load_checkpoint(const std::string& path);

    std::size_t next_epoch() const { return next_epoch_; }
    double learning_rate_at(std::size_t epoch) const;
    double alpha_at(std::size_t epoch) const;

private:
    struct StepStats {
        std::optional<double> contrastive;
        std::optional<double> ce;
    };
    enum class Phase { kJoint, kContrastiveOnly, kClassifierOnly };

    StepStats train_step(double contrastive_weight, double ce_weight, Phase phase,
                         std::size_t epoch, std::size_t step);
    std::vector<std::size_t> active_params(Phase phase) const;
    bool uses_prototypes() const {
        return cfg_.loss == LossKind::kPsc || cfg_.loss == LossKind::kMpsc;
    }

    HybridModel& model_;
    PrototypeBank& prototypes_;
    const Dataset& train_;
    const Dataset& test_;
    TrainConfig cfg_;

    std::vector<ParamTensor*> params_;  // model params + prototype bank
    SgdOptimizer optimizer_;
    std::unique_ptr<Sampler> sc_sampler_;
    std::unique_ptr<Sampler> ce_sampler_;
    Rng view_rng_;
    std::size_t next_epoch_ = 0;
    std::size_t steps_per_epoch_ = 0;
};

/// Convenience wrappers matching the two training protocols.
RunReport train(HybridModel& model, PrototypeBank& prototypes, const Dataset& train_set,
                const Dataset& test_set, const TrainConfig& cfg);
RunReport train_two_stage(HybridModel& model, PrototypeBank& prototypes, const Dataset& train_set,
                          const Dataset& test_set, const TrainConfig& cfg);

}  // namespace tailnet
