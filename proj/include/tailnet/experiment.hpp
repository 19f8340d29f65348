#pragma once

#include "tailnet/data.hpp"
#include "tailnet/model.hpp"
#include "tailnet/training.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tailnet {

/// Flat key=value configuration ('#' comments, blank lines ignored). Every
/// CLI flag with the same name overrides the file value.
class KvConfig {
public:
    static KvConfig parse_file(const std::string& path);
    static KvConfig parse(std::istream& in, const std::string& origin);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma-separated

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Everything needed to set up one benchmark run: the synthetic long-tail
/// problem, the network shape, and the training recipe.
struct BenchmarkSpec {
    LongTailSpec lt{10, 500, 100.0};
    std::size_t input_dim = 16;
    double class_sep = 3.0;
    std::size_t test_per_class = 200;
    std::vector<std::size_t> backbone_widths{64, 64, 32};
    std::size_t projection_hidden = 32;
    std::size_t embed_dim = 16;
    TrainConfig train;

    BenchmarkSpec();

    SynthResult make_data(std::uint64_t seed) const;
    ModelConfig model_config(std::uint64_t seed) const;

    /// Keys: classes, n_max, beta, input_dim, class_sep, test_per_class,
    /// backbone, projection_hidden, embed_dim, plus every TrainConfig key
    /// (epochs, sc_batch, ce_batch, lr, momentum, weight_decay, milestones,
    /// lr_decay, alpha_schedule, loss, tau, prototypes, affinity, sc_sampler,
    /// ce_sampler, view_sigma, positives_cap, seed).
    void apply(const KvConfig& cfg);
};

/// Mutates a TrainConfig into one of the named experiment variants. Knows:
/// ce-ce, hybrid-sc, hybrid-psc, hybrid-psc-balanced, hybrid-mpsc,
/// hybrid-sc-const, two-stage-sc.
void apply_variant(TrainConfig& cfg, const std::string& variant);
std::vector<std::string> known_variants();

ScheduleKind parse_schedule_kind(const std::string& text, double* alpha0);
LossKind parse_loss_kind(const std::string& text);
SamplerKind parse_sampler_kind(const std::string& text);
AffinityMode parse_affinity_mode(const std::string& text);

struct CellResult {
    std::string variant;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double final_top1 = 0.0;
    EvalReport eval;
    std::string report_path;
};

struct VariantAggregate {
    std::string variant;
    std::size_t runs = 0;
    double mean_top1 = 0.0;
    double std_top1 = 0.0;
    double mean_head_acc = 0.0;
    double mean_tail_acc = 0.0;
    double mean_intra = 0.0;
    double mean_inter = 0.0;
};

struct MatrixResult {
    std::vector<CellResult> cells;
    std::vector<VariantAggregate> aggregates;
};

/// Runs variants × seeds on the benchmark, writing per-run JSON and CSV
/// reports, per-variant plot data (epoch vs mean accuracy, α trace) and an
/// aggregate summary.csv into out_dir. A failed cell is recorded and the
/// rest of the matrix still runs.
MatrixResult run_experiment_matrix(const BenchmarkSpec& base,
                                   const std::vector<std::string>& variants,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::string& out_dir, bool verbose = false);

}  // namespace tailnet
