// Command-line front end: train single runs, evaluate checkpoints, run the
// gradient-check suite, generate long-tailed datasets, and drive the
// experiment matrix. Exit codes: 0 success, 2 usage/config error, 1 failure.

#include "tailnet/errors.hpp"
#include "tailnet/eval.hpp"
#include "tailnet/experiment.hpp"
#include "tailnet/gradsuite.hpp"
#include "tailnet/model.hpp"
#include "tailnet/prototypes.hpp"
#include "tailnet/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace tailnet;

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> loss;
    std::optional<double> beta;
    std::optional<std::size_t> classes;
    std::optional<std::size_t> epochs;
    std::optional<double> tau;
    std::optional<std::string> alpha_schedule;
    std::optional<std::string> sampler;  // feature-branch sampler
    std::optional<std::size_t> prototypes;
    std::optional<std::size_t> n_max;
    std::optional<std::size_t> input_dim;
    std::optional<double> class_sep;
    std::optional<std::size_t> test_per_class;
    std::optional<double> lr;
    std::optional<double> view_sigma;
    std::optional<std::size_t> sc_batch;
    std::optional<std::size_t> ce_batch;
    std::optional<std::size_t> positives_cap;
    std::optional<std::string> ce_sampler;
    std::optional<std::string> affinity;
    std::optional<std::string> milestones;
    std::optional<double> lr_decay;
    bool two_stage = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "flat key=value config file");
    cmd->add_option("--seed", flags.seed, "master RNG seed");
    cmd->add_option("--loss", flags.loss, "ce, sc, psc or mpsc");
    cmd->add_option("--beta", flags.beta, "imbalance ratio N_max/N_min");
    cmd->add_option("--classes", flags.classes, "number of classes");
    cmd->add_option("--epochs", flags.epochs, "training epochs");
    cmd->add_option("--tau", flags.tau, "contrastive temperature");
    cmd->add_option("--alpha-schedule", flags.alpha_schedule,
                    "parabolic, linear or constant:X");
    cmd->add_option("--sampler", flags.sampler, "feature-branch sampler: random or balanced");
    cmd->add_option("--prototypes-per-class", flags.prototypes, "M prototypes per class");
    cmd->add_option("--n-max", flags.n_max, "samples in the largest class");
    cmd->add_option("--input-dim", flags.input_dim, "input feature dimension");
    cmd->add_option("--class-sep", flags.class_sep, "synthetic class mean separation");
    cmd->add_option("--test-per-class", flags.test_per_class, "balanced test samples per class");
    cmd->add_option("--lr", flags.lr, "initial learning rate");
    cmd->add_option("--view-sigma", flags.view_sigma, "view perturbation noise sigma");
    cmd->add_option("--sc-batch", flags.sc_batch, "contrastive sources per step");
    cmd->add_option("--ce-batch", flags.ce_batch, "classifier batch size");
    cmd->add_option("--positives-cap", flags.positives_cap, "positives per anchor (0 = all)");
    cmd->add_option("--ce-sampler", flags.ce_sampler, "classifier-branch sampler");
    cmd->add_option("--affinity", flags.affinity, "mpsc affinity mode: uniform or softmax");
    cmd->add_option("--milestones", flags.milestones, "comma-separated LR decay epochs");
    cmd->add_option("--lr-decay", flags.lr_decay, "LR decay factor at each milestone");
    cmd->add_flag("--two-stage", flags.two_stage, "two-stage protocol instead of the curriculum");
}

BenchmarkSpec build_spec(const CommonFlags& flags) {
    KvConfig kv;
    if (!flags.config_path.empty()) kv = KvConfig::parse_file(flags.config_path);

    const auto set_num = [&kv](const char* key, const auto& opt) {
        if (opt) kv.set(key, std::to_string(*opt));
    };
    const auto set_str = [&kv](const char* key, const std::optional<std::string>& opt) {
        if (opt) kv.set(key, *opt);
    };
    set_num("seed", flags.seed);
    set_str("loss", flags.loss);
    set_num("beta", flags.beta);
    set_num("classes", flags.classes);
    set_num("epochs", flags.epochs);
    set_num("tau", flags.tau);
    set_str("alpha_schedule", flags.alpha_schedule);
    set_str("sc_sampler", flags.sampler);
    set_num("prototypes", flags.prototypes);
    set_num("n_max", flags.n_max);
    set_num("input_dim", flags.input_dim);
    set_num("class_sep", flags.class_sep);
    set_num("test_per_class", flags.test_per_class);
    set_num("lr", flags.lr);
    set_num("view_sigma", flags.view_sigma);
    set_num("sc_batch", flags.sc_batch);
    set_num("ce_batch", flags.ce_batch);
    set_num("positives_cap", flags.positives_cap);
    set_str("ce_sampler", flags.ce_sampler);
    set_str("affinity", flags.affinity);
    set_str("milestones", flags.milestones);
    set_num("lr_decay", flags.lr_decay);

    BenchmarkSpec spec;
    spec.apply(kv);
    if (flags.two_stage) spec.train.two_stage = true;
    return spec;
}

int cmd_train(const CommonFlags& flags, const std::string& out_dir) {
    BenchmarkSpec spec = build_spec(flags);
    std::filesystem::create_directories(out_dir);

    SynthResult data = spec.make_data(spec.train.seed);
    HybridModel model(spec.model_config(spec.train.seed));
    PrototypeBank bank(spec.lt.num_classes, spec.train.prototypes_per_class, spec.embed_dim);
    Rng proto_rng(spec.train.seed, 0x70726f746full);
    bank.init_gaussian(proto_rng);

    TrainConfig cfg = spec.train;
    cfg.checkpoint_path = out_dir + "/checkpoint.bin";
    cfg.checkpoint_every = std::max<std::size_t>(1, cfg.epochs / 4);

    Trainer trainer(model, bank, data.train, data.test, cfg);
    RunReport report = trainer.run();
    trainer.save_checkpoint(cfg.checkpoint_path);
    report.write_json(out_dir + "/runreport.json");
    report.write_csv(out_dir + "/runreport.csv");

    std::cout << "final top1 " << report.final_eval.top1 << " (head " << report.final_eval.head_acc
              << ", tail " << report.final_eval.tail_acc << ")\n"
              << "report: " << out_dir << "/runreport.json\n";
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint,
             const std::string& out_path) {
    BenchmarkSpec spec = build_spec(flags);
    SynthResult data = spec.make_data(spec.train.seed);
    HybridModel model(spec.model_config(spec.train.seed));
    PrototypeBank bank(spec.lt.num_classes, spec.train.prototypes_per_class, spec.embed_dim);
    Rng proto_rng(spec.train.seed, 0x70726f746full);
    bank.init_gaussian(proto_rng);

    Trainer trainer(model, bank, data.train, data.test, spec.train);
    trainer.load_checkpoint(checkpoint);

    const auto counts = data.train.counts();
    const EvalReport report = evaluate(model, data.test, &counts);
    const std::string text = report.to_json().dump(2);
    if (out_path.empty()) {
        std::cout << text << '\n';
    } else {
        std::ofstream out(out_path);
        out << text << '\n';
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t instances) {
    const GradCheckReport report = run_gradient_suite(seed, instances);
    for (const auto& e : report.entries) {
        std::printf("%-28s max_rel_err %.3e  tol %.0e  (%zu instances)  %s\n", e.name.c_str(),
                    e.max_rel_err, e.tolerance, e.instances, e.passed() ? "PASS" : "FAIL");
    }
    return report.all_passed() ? 0 : 1;
}

int cmd_gen_data(const CommonFlags& flags, const std::string& out_path) {
    BenchmarkSpec spec = build_spec(flags);
    SynthResult data = spec.make_data(spec.train.seed);
    write_dataset_csv(data.train, out_path);
    const std::string test_path =
        out_path.size() > 4 && out_path.substr(out_path.size() - 4) == ".csv"
            ? out_path.substr(0, out_path.size() - 4) + "_test.csv"
            : out_path + "_test";
    write_dataset_csv(data.test, test_path);

    const auto counts = class_counts(spec.lt);
    std::cout << "train: " << out_path << " (" << data.train.size() << " rows), test: "
              << test_path << " (" << data.test.size() << " rows)\nclass counts:";
    for (auto c : counts) std::cout << ' ' << c;
    std::cout << '\n';
    return 0;
}

int cmd_matrix(const CommonFlags& flags, const std::string& out_dir,
               std::vector<std::string> variants, std::vector<std::uint64_t> seeds) {
    BenchmarkSpec spec = build_spec(flags);
    if (!flags.config_path.empty()) {
        const KvConfig kv = KvConfig::parse_file(flags.config_path);
        if (variants.empty())
            for (const auto& v : kv.get_list("variants")) variants.push_back(v);
        if (seeds.empty())
            for (const auto& s : kv.get_list("seeds")) seeds.push_back(std::stoull(s));
    }
    if (variants.empty()) variants = {"ce-ce", "hybrid-sc", "hybrid-psc"};
    if (seeds.empty()) seeds = {1, 2, 3, 4, 5};

    const MatrixResult result = run_experiment_matrix(spec, variants, seeds, out_dir, true);
    std::size_t failures = 0;
    for (const auto& cell : result.cells)
        if (!cell.ok) ++failures;
    std::cout << "summary: " << out_dir << "/summary.csv"
              << (failures > 0 ? " (" + std::to_string(failures) + " failed cells)" : "") << '\n';
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"long-tailed classification testbed: hybrid contrastive + cross-entropy training"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string out = "runs";
    std::string checkpoint;
    std::string eval_out;
    std::string gen_out = "dataset.csv";
    std::uint64_t grad_seed = 7;
    std::size_t grad_instances = 50;
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds;

    auto* train_cmd = app.add_subcommand("train", "train one model on the synthetic benchmark");
    add_common_flags(train_cmd, flags);
    train_cmd->add_option("--out", out, "output directory");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the benchmark test set");
    add_common_flags(eval_cmd, flags);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--out", eval_out, "write the report here instead of stdout");

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    grad_cmd->add_option("--seed", grad_seed, "suite RNG seed");
    grad_cmd->add_option("--instances", grad_instances, "random instances per surface");

    auto* gen_cmd = app.add_subcommand("gen-data", "generate a long-tailed dataset as CSV");
    add_common_flags(gen_cmd, flags);
    gen_cmd->add_option("--out", gen_out, "output CSV path");

    auto* matrix_cmd = app.add_subcommand("matrix", "run an experiment matrix (variants × seeds)");
    add_common_flags(matrix_cmd, flags);
    matrix_cmd->add_option("--out", out, "output directory");
    matrix_cmd->add_option("--variants", variants, "experiment variants");
    matrix_cmd->add_option("--seeds", seeds, "seeds to run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(flags, out);
        if (eval_cmd->parsed()) return cmd_eval(flags, checkpoint, eval_out);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad_seed, grad_instances);
        if (gen_cmd->parsed()) return cmd_gen_data(flags, gen_out);
        if (matrix_cmd->parsed()) return cmd_matrix(flags, out, variants, seeds);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
