#include "tailnet/training.hpp"

#include "tailnet/errors.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tailnet {

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::kSc: return "sc";
        case LossKind::kPsc: return "psc";
        case LossKind::kMpsc: return "mpsc";
        case LossKind::kCeCe: return "ce-ce";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (sc_batch < 1) throw ConfigError("TrainConfig: sc_batch must be >= 1");
    if (ce_batch < 1) throw ConfigError("TrainConfig: ce_batch must be >= 1");
    sgd.validate();
    if (!(lr_decay > 0.0 && lr_decay < 1.0))
        throw ConfigError("TrainConfig: lr_decay must be in (0,1)");
    for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
        if (lr_milestones[i] >= epochs)
            throw ConfigError("TrainConfig: milestone " + std::to_string(lr_milestones[i]) +
                              " not below epochs");
        if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
            throw ConfigError("TrainConfig: milestones must be strictly increasing");
    }
    schedule.validate();
    if (!two_stage && schedule.kind != ScheduleKind::kConstant && schedule.t_max < epochs - 1)
        throw ConfigError("TrainConfig: schedule t_max " + std::to_string(schedule.t_max) +
                          " does not cover the run; build it with schedule_for_epochs()");
    if (!(tau > 0.0)) throw ConfigError("TrainConfig: tau must be positive");
    if (prototypes_per_class < 1) throw ConfigError("TrainConfig: need >= 1 prototype per class");
    if (view_sigma < 0.0) throw ConfigError("TrainConfig: view_sigma must be non-negative");
    if (two_stage && epochs < 2) throw ConfigError("TrainConfig: two-stage needs >= 2 epochs");
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j{{"epochs", epochs},
                     {"sc_batch", sc_batch},
                     {"ce_batch", ce_batch},
                     {"learning_rate", sgd.learning_rate},
                     {"momentum", sgd.momentum},
                     {"weight_decay", sgd.weight_decay},
                     {"lr_milestones", lr_milestones},
                     {"lr_decay", lr_decay},
                     {"schedule", to_string(schedule.kind)},
                     {"schedule_t_max", schedule.t_max},
                     {"schedule_alpha0", schedule.alpha0},
                     {"loss", to_string(loss)},
                     {"tau", tau},
                     {"prototypes_per_class", prototypes_per_class},
                     {"affinity_mode", to_string(affinity)},
                     {"sc_sampler", to_string(sc_sampler)},
                     {"ce_sampler", to_string(ce_sampler)},
                     {"view_sigma", view_sigma},
                     {"positives_cap", positives_cap},
                     {"seed", seed},
                     {"two_stage", two_stage},
                     {"sc_loss_reduction", "sum_over_anchors"}};
    return j;
}

CurriculumSchedule schedule_for_epochs(ScheduleKind kind, std::size_t epochs, double alpha0) {
    if (kind == ScheduleKind::kConstant) return CurriculumSchedule::constant(alpha0);
    const std::size_t t_max = epochs > 1 ? epochs - 1 : 1;
    return kind == ScheduleKind::kParabolic ? CurriculumSchedule::parabolic(t_max)
                                            : CurriculumSchedule::linear(t_max);
}

namespace {

std::string format_cell(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", *v);
    return buf;
}

nlohmann::json optional_to_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

}  // namespace

nlohmann::json RunReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : epochs) {
        rows.push_back({{"epoch", e.epoch},
                        {"alpha", e.alpha},
                        {"lr", e.lr},
                        {"contrastive_loss", optional_to_json(e.contrastive_loss)},
                        {"ce_loss", optional_to_json(e.ce_loss)},
                        {"hybrid_loss", optional_to_json(e.hybrid)},
                        {"train_top1", optional_to_json(e.train_top1)},
                        {"test_top1", optional_to_json(e.test_top1)}});
    }
    return nlohmann::json{{"seed", seed},
                          {"wall_seconds", wall_seconds},
                          {"config", config_echo},
                          {"epochs", rows},
                          {"final_eval", final_eval.to_json()}};
}

void RunReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("RunReport: cannot open '" + path + "' for writing");
    out << "epoch,alpha,lr,contrastive_loss,ce_loss,hybrid_loss,train_top1,test_top1\n";
    char buf[32];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.alpha);
        out << e.epoch << ',' << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", e.lr);
        out << buf << ',' << format_cell(e.contrastive_loss) << ',' << format_cell(e.ce_loss)
            << ',' << format_cell(e.hybrid) << ',' << format_cell(e.train_top1) << ','
            << format_cell(e.test_top1) << '\n';
    }
}

void RunReport::write_json(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("RunReport: cannot open '" + path + "' for writing");
    out << to_json().dump(2) << '\n';
}

Trainer::Trainer(HybridModel& model, PrototypeBank& prototypes, const Dataset& train,
                 const Dataset& test, TrainConfig cfg)
    : model_(model),
      prototypes_(prototypes),
      train_(train),
      test_(test),
      cfg_(std::move(cfg)),
      params_([&] {
          auto p = model.params();
          p.push_back(&prototypes.param());
          return p;
      }()),
      optimizer_(cfg_.sgd, params_),
      sc_sampler_(make_sampler(cfg_.sc_sampler, train, cfg_.seed ^ 0x5c5c5c5cull)),
      ce_sampler_(make_sampler(cfg_.ce_sampler, train, cfg_.seed ^ 0xce0ce0ceull)),
      view_rng_(cfg_.seed, /*stream=*/0x76696577ull) {  // "view"
    cfg_.validate();
    if (train_.size() == 0) throw ConfigError("Trainer: empty training set");
    if (prototypes_.num_classes() != train_.num_classes())
        throw ConfigError("Trainer: prototype bank class count != dataset class count");
    if (uses_prototypes() && prototypes_.per_class() != cfg_.prototypes_per_class)
        throw ConfigError("Trainer: prototype bank M != configured prototypes_per_class");
    steps_per_epoch_ = (train_.size() + cfg_.ce_batch - 1) / cfg_.ce_batch;
}

double Trainer::learning_rate_at(std::size_t epoch) const {
    double lr = cfg_.sgd.learning_rate;
    for (std::size_t m : cfg_.lr_milestones)
        if (epoch >= m) lr *= cfg_.lr_decay;
    return lr;
}

double Trainer::alpha_at(std::size_t epoch) const {
    if (!cfg_.two_stage) return curriculum_alpha(cfg_.schedule, epoch);
    return epoch < cfg_.epochs / 2 ? 1.0 : 0.0;
}

std::vector<std::size_t> Trainer::active_params(Phase phase) const {
    // Layout of params_: backbone, projection, classifier, prototype bank.
    const std::size_t n_backbone = 2 * model_.config().backbone_widths.size();
    const std::size_t n_projection = 4;
    const std::size_t n_classifier = 2;
    std::vector<std::size_t> idx;
    const auto add_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
    };
    const std::size_t proj_end = n_backbone + n_projection;
    const std::size_t clf_end = proj_end + n_classifier;
    switch (phase) {
        case Phase::kJoint:
            add_range(0, clf_end);
            break;
        case Phase::kContrastiveOnly:
            add_range(0, proj_end);
            if (cfg_.loss == LossKind::kCeCe) add_range(proj_end, clf_end);
            break;
        case Phase::kClassifierOnly:
            add_range(proj_end, clf_end);
            break;
    }
    if (uses_prototypes() && phase != Phase::kClassifierOnly) idx.push_back(clf_end);  // bank
    return idx;
}

Trainer::StepStats Trainer::train_step(double contrastive_weight, double ce_weight, Phase phase,
                                       std::size_t epoch, std::size_t step) {
    StepStats stats;
    const auto context = [&] {
        return "epoch " + std::to_string(epoch) + " step " + std::to_string(step);
    };

    for (auto* p : params_) p->zero_grad();

    if (phase != Phase::kClassifierOnly) {
        ScBatch batch = compose_sc_batch(train_, *sc_sampler_, cfg_.sc_batch, cfg_.view_sigma,
                                         cfg_.positives_cap, view_rng_);
        const Matrix r = model_.forward_features(batch.rows);
        double loss_value = 0.0;
        if (cfg_.loss == LossKind::kCeCe) {
            const Matrix s = model_.forward_classifier(r);
            CeResult ce = ce_loss(LogitsBatch(s, batch.labels));
            loss_value = ce.loss;
            ce.grad_logits *= contrastive_weight;
            model_.backward_features(model_.backward_classifier(ce.grad_logits));
        } else {
            const Matrix z = model_.forward_contrastive(r);
            EmbeddingBatch embeddings(z, batch.labels, batch.view_ids);
            Matrix grad_z;
            if (cfg_.loss == LossKind::kSc) {
                ScResult sc = sc_loss(embeddings, Temperature(cfg_.tau), batch.positives);
                loss_value = sc.loss;
                grad_z = std::move(sc.grad_z);
            } else if (cfg_.loss == LossKind::kPsc) {
                PscResult psc = psc_loss(embeddings, prototypes_, Temperature(cfg_.tau));
                loss_value = psc.loss;
                grad_z = std::move(psc.grad_z);
                prototypes_.param().grad.add_scaled(psc.grad_prototypes, contrastive_weight);
            } else {
                MpscResult mpsc =
                    mpsc_loss(embeddings, prototypes_, Temperature(cfg_.tau), cfg_.affinity);
                loss_value = mpsc.loss;
                grad_z = std::move(mpsc.grad_z);
                prototypes_.param().grad.add_scaled(mpsc.grad_prototypes, contrastive_weight);
            }
            grad_z *= contrastive_weight;
            model_.backward_features(model_.backward_contrastive(grad_z));
        }
        if (!std::isfinite(loss_value))
            throw TrainingAborted("non-finite contrastive-branch loss at " + context());
        stats.contrastive = loss_value;
    }

    if (phase != Phase::kContrastiveOnly) {
        const auto rows = ce_sampler_->next(cfg_.ce_batch);
        Matrix x(rows.size(), train_.dim());
        std::vector<int> y(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* src = train_.features.row_ptr(rows[i]);
            std::copy(src, src + train_.dim(), x.row_ptr(i));
            y[i] = train_.labels[rows[i]];
        }
        const Matrix r = model_.forward_features(x);
        const Matrix s = model_.forward_classifier(r);
        CeResult ce = ce_loss(LogitsBatch(s, y));
        if (!std::isfinite(ce.loss))
            throw TrainingAborted("non-finite classifier-branch loss at " + context());
        stats.ce = ce.loss;
        ce.grad_logits *= ce_weight;
        model_.backward_features(model_.backward_classifier(ce.grad_logits));
    }

    return stats;
}

RunReport Trainer::run() {
    const auto t0 = std::chrono::steady_clock::now();
    RunReport report;
    report.seed = cfg_.seed;
    report.config_echo = cfg_.to_json();
    const auto counts = train_.counts();

    for (std::size_t epoch = next_epoch_; epoch < cfg_.epochs; ++epoch) {
        Phase phase = Phase::kJoint;
        if (cfg_.two_stage)
            phase = epoch < cfg_.epochs / 2 ? Phase::kContrastiveOnly : Phase::kClassifierOnly;

        const double alpha = alpha_at(epoch);
        const double contrastive_weight = phase == Phase::kContrastiveOnly ? 1.0 : alpha;
        const double ce_weight = phase == Phase::kClassifierOnly ? 1.0 : 1.0 - alpha;
        optimizer_.set_learning_rate(learning_rate_at(epoch));
        const auto active = active_params(phase);

        double sum_contrastive = 0.0, sum_ce = 0.0;
        std::size_t n_contrastive = 0, n_ce = 0;
        for (std::size_t step = 0; step < steps_per_epoch_; ++step) {
            const StepStats stats = train_step(contrastive_weight, ce_weight, phase, epoch, step);
            if (stats.contrastive) {
                sum_contrastive += *stats.contrastive;
                ++n_contrastive;
            }
            if (stats.ce) {
                sum_ce += *stats.ce;
                ++n_ce;
            }
            optimizer_.step_subset(active);
            if (uses_prototypes() && phase != Phase::kClassifierOnly) prototypes_.renormalize();
        }

        EpochRecord record;
        record.epoch = epoch;
        record.alpha = alpha;
        record.lr = optimizer_.learning_rate();
        if (n_contrastive > 0)
            record.contrastive_loss = sum_contrastive / static_cast<double>(n_contrastive);
        if (n_ce > 0) record.ce_loss = sum_ce / static_cast<double>(n_ce);
        if (record.contrastive_loss && record.ce_loss)
            record.hybrid = hybrid_loss(*record.contrastive_loss, *record.ce_loss, alpha);

        if (cfg_.eval_each_epoch) {
            record.test_top1 = evaluate(model_, test_, &counts).top1;
            record.train_top1 = evaluate(model_, train_, &counts).top1;
        }
        report.epochs.push_back(record);
        next_epoch_ = epoch + 1;

        if (!cfg_.checkpoint_path.empty() && cfg_.checkpoint_every > 0 &&
            (epoch + 1) % cfg_.checkpoint_every == 0)
            save_checkpoint(cfg_.checkpoint_path);
    }

    report.final_eval = evaluate(model_, test_, &counts);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

namespace {
constexpr const char* kCheckpointMagic = "tailnet-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("save_checkpoint: cannot open '" + path + "'");
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << next_epoch_ << ' ' << params_.size() << '\n';
    for (const auto* p : params_) {
        out << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
        out.write(reinterpret_cast<const char*>(p->value.raw().data()),
                  static_cast<std::streamsize>(p->value.raw().size() * sizeof(double)));
    }
    for (const auto& v : optimizer_.velocities())
        out.write(reinterpret_cast<const char*>(v.raw().data()),
                  static_cast<std::streamsize>(v.raw().size() * sizeof(double)));
    view_rng_.save(out);
    out << '\n';
    sc_sampler_->save(out);
    ce_sampler_->save(out);
    if (!out) throw CheckpointError("save_checkpoint: write failed for '" + path + "'");
}

void Trainer::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("load_checkpoint: cannot open '" + path + "'");

    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (!in || magic != kCheckpointMagic)
        throw CheckpointError("load_checkpoint: bad magic (field 'magic')");
    if (version != kCheckpointVersion)
        throw CheckpointError("load_checkpoint: unsupported version " + std::to_string(version) +
                              " (field 'version')");

    std::size_t epoch = 0, n_params = 0;
    in >> epoch >> n_params;
    if (!in || n_params != params_.size())
        throw CheckpointError("load_checkpoint: parameter count mismatch (field 'params')");
    if (epoch > cfg_.epochs)
        throw CheckpointError("load_checkpoint: epoch cursor beyond configured run (field 'epoch')");

    // Stage everything; commit only after the whole file has parsed.
    std::vector<Matrix> staged_values;
    staged_values.reserve(n_params);
    for (std::size_t i = 0; i < n_params; ++i) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        in >> name >> rows >> cols;
        in.ignore(1);
        if (!in || name != params_[i]->name)
            throw CheckpointError("load_checkpoint: parameter name mismatch (field '" + name +
                                  "', expected '" + params_[i]->name + "')");
        if (rows != params_[i]->value.rows() || cols != params_[i]->value.cols())
            throw CheckpointError("load_checkpoint: shape mismatch (field '" + name + "')");
        Matrix m(rows, cols);
        in.read(reinterpret_cast<char*>(m.raw().data()),
                static_cast<std::streamsize>(m.raw().size() * sizeof(double)));
        if (!in) throw CheckpointError("load_checkpoint: truncated values (field '" + name + "')");
        staged_values.push_back(std::move(m));
    }

    std::vector<Matrix> staged_velocities;
    staged_velocities.reserve(n_params);
    for (std::size_t i = 0; i < n_params; ++i) {
        Matrix v(params_[i]->value.rows(), params_[i]->value.cols());
        in.read(reinterpret_cast<char*>(v.raw().data()),
                static_cast<std::streamsize>(v.raw().size() * sizeof(double)));
        if (!in)
            throw CheckpointError("load_checkpoint: truncated velocities (field '" +
                                  params_[i]->name + "')");
        staged_velocities.push_back(std::move(v));
    }

    Rng staged_rng = view_rng_;
    staged_rng.load(in);
    auto staged_sc = sc_sampler_->clone();
    staged_sc->load(in);
    auto staged_ce = ce_sampler_->clone();
    staged_ce->load(in);

    for (std::size_t i = 0; i < n_params; ++i) params_[i]->value = std::move(staged_values[i]);
    optimizer_.set_velocities(std::move(staged_velocities));
    view_rng_ = staged_rng;
    sc_sampler_ = std::move(staged_sc);
    ce_sampler_ = std::move(staged_ce);
    next_epoch_ = epoch;
}

RunReport train(HybridModel& model, PrototypeBank& prototypes, const Dataset& train_set,
                const Dataset& test_set, const TrainConfig& cfg) {
    TrainConfig local = cfg;
    local.two_stage = false;
    Trainer trainer(model, prototypes, train_set, test_set, local);
    return trainer.run();
}

RunReport train_two_stage(HybridModel& model, PrototypeBank& prototypes, const Dataset& train_set,
                          const Dataset& test_set, const TrainConfig& cfg) {
    TrainConfig local = cfg;
    local.two_stage = true;
    Trainer trainer(model, prototypes, train_set, test_set, local);
    return trainer.run();
}

}  // namespace tailnet
