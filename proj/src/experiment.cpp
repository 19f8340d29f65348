#include "tailnet/experiment.hpp"

#include "tailnet/errors.hpp"
#include "tailnet/prototypes.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace tailnet {

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("KvConfig: cannot open '" + path + "'");
    return parse(in, path);
}

KvConfig KvConfig::parse(std::istream& in, const std::string& origin) {
    KvConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("KvConfig: missing '=' at " + origin + ":" +
                              std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("KvConfig: empty key at " + origin + ":" + std::to_string(line_no));
        cfg.values_[key] = value;
    }
    return cfg;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("KvConfig: '" + key + "' is not a number: " + it->second);
    }
}

std::size_t KvConfig::get_size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ConfigError("KvConfig: '" + key + "' is not an integer: " + it->second);
    }
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    const auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

BenchmarkSpec::BenchmarkSpec() {
    train.epochs = 100;
    train.sc_batch = 32;
    train.ce_batch = 64;
    train.sgd = SgdConfig{0.1, 0.9, 1e-4};
    train.lr_milestones = {60, 80};
    train.lr_decay = 0.1;
    train.schedule = schedule_for_epochs(ScheduleKind::kParabolic, train.epochs);
    train.loss = LossKind::kPsc;
    train.tau = 0.1;
    train.view_sigma = 0.5;
}

SynthResult BenchmarkSpec::make_data(std::uint64_t seed) const {
    return synth_gaussian_longtail(lt, input_dim, class_sep, test_per_class, seed);
}

ModelConfig BenchmarkSpec::model_config(std::uint64_t seed) const {
    ModelConfig mc;
    mc.input_dim = input_dim;
    mc.backbone_widths = backbone_widths;
    mc.projection_hidden = projection_hidden;
    mc.embed_dim = embed_dim;
    mc.num_classes = lt.num_classes;
    mc.init_seed = seed;
    return mc;
}

void BenchmarkSpec::apply(const KvConfig& cfg) {
    lt.num_classes = cfg.get_size("classes", lt.num_classes);
    lt.n_max = cfg.get_size("n_max", lt.n_max);
    lt.beta = cfg.get_double("beta", lt.beta);
    input_dim = cfg.get_size("input_dim", input_dim);
    class_sep = cfg.get_double("class_sep", class_sep);
    test_per_class = cfg.get_size("test_per_class", test_per_class);
    projection_hidden = cfg.get_size("projection_hidden", projection_hidden);
    embed_dim = cfg.get_size("embed_dim", embed_dim);
    if (cfg.has("backbone")) {
        backbone_widths.clear();
        for (const auto& w : cfg.get_list("backbone"))
            backbone_widths.push_back(static_cast<std::size_t>(std::stoull(w)));
    }

    train.epochs = cfg.get_size("epochs", train.epochs);
    train.sc_batch = cfg.get_size("sc_batch", train.sc_batch);
    train.ce_batch = cfg.get_size("ce_batch", train.ce_batch);
    train.sgd.learning_rate = cfg.get_double("lr", train.sgd.learning_rate);
    train.sgd.momentum = cfg.get_double("momentum", train.sgd.momentum);
    train.sgd.weight_decay = cfg.get_double("weight_decay", train.sgd.weight_decay);
    if (cfg.has("milestones")) {
        train.lr_milestones.clear();
        for (const auto& m : cfg.get_list("milestones"))
            train.lr_milestones.push_back(static_cast<std::size_t>(std::stoull(m)));
    }
    train.lr_decay = cfg.get_double("lr_decay", train.lr_decay);
    if (cfg.has("alpha_schedule")) {
        double alpha0 = 0.5;
        const ScheduleKind kind = parse_schedule_kind(cfg.get_string("alpha_schedule", ""), &alpha0);
        train.schedule = schedule_for_epochs(kind, train.epochs, alpha0);
    } else {
        // Keep the schedule span in sync with a possibly re-configured epoch count.
        train.schedule = schedule_for_epochs(train.schedule.kind, train.epochs,
                                             train.schedule.alpha0);
    }
    if (cfg.has("loss")) train.loss = parse_loss_kind(cfg.get_string("loss", ""));
    train.tau = cfg.get_double("tau", train.tau);
    train.prototypes_per_class = cfg.get_size("prototypes", train.prototypes_per_class);
    if (cfg.has("affinity")) train.affinity = parse_affinity_mode(cfg.get_string("affinity", ""));
    if (cfg.has("sc_sampler"))
        train.sc_sampler = parse_sampler_kind(cfg.get_string("sc_sampler", ""));
    if (cfg.has("ce_sampler"))
        train.ce_sampler = parse_sampler_kind(cfg.get_string("ce_sampler", ""));
    train.view_sigma = cfg.get_double("view_sigma", train.view_sigma);
    train.positives_cap = cfg.get_size("positives_cap", train.positives_cap);
    train.seed = cfg.get_u64("seed", train.seed);
}

void apply_variant(TrainConfig& cfg, const std::string& variant) {
    cfg.two_stage = false;
    if (variant == "ce-ce") {
        cfg.loss = LossKind::kCeCe;
    } else if (variant == "hybrid-sc") {
        cfg.loss = LossKind::kSc;
    } else if (variant == "hybrid-psc" || variant == "hybrid-psc-random") {
        cfg.loss = LossKind::kPsc;
        cfg.sc_sampler = SamplerKind::kRandom;
    } else if (variant == "hybrid-psc-balanced") {
        cfg.loss = LossKind::kPsc;
        cfg.sc_sampler = SamplerKind::kBalanced;
    } else if (variant == "hybrid-mpsc") {
        cfg.loss = LossKind::kMpsc;
        if (cfg.prototypes_per_class < 2) cfg.prototypes_per_class = 2;
    } else if (variant == "hybrid-sc-const") {
        cfg.loss = LossKind::kSc;
        cfg.schedule = CurriculumSchedule::constant(0.5);
    } else if (variant == "two-stage-sc") {
        cfg.loss = LossKind::kSc;
        cfg.two_stage = true;
    } else {
        throw ConfigError("unknown experiment variant '" + variant + "'");
    }
}

std::vector<std::string> known_variants() {
    return {"ce-ce",        "hybrid-sc",           "hybrid-psc",    "hybrid-psc-random",
            "hybrid-psc-balanced", "hybrid-mpsc", "hybrid-sc-const", "two-stage-sc"};
}

ScheduleKind parse_schedule_kind(const std::string& text, double* alpha0) {
    if (text == "parabolic") return ScheduleKind::kParabolic;
    if (text == "linear") return ScheduleKind::kLinear;
    if (text.rfind("constant", 0) == 0) {
        if (alpha0 && text.size() > 9 && text[8] == ':') *alpha0 = std::stod(text.substr(9));
        return ScheduleKind::kConstant;
    }
    throw ConfigError("unknown alpha schedule '" + text +
                      "' (expected parabolic, linear or constant:X)");
}

LossKind parse_loss_kind(const std::string& text) {
    if (text == "ce" || text == "ce-ce") return LossKind::kCeCe;
    if (text == "sc") return LossKind::kSc;
    if (text == "psc") return LossKind::kPsc;
    if (text == "mpsc") return LossKind::kMpsc;
    throw ConfigError("unknown loss '" + text + "' (expected ce, sc, psc or mpsc)");
}

SamplerKind parse_sampler_kind(const std::string& text) {
    if (text == "random") return SamplerKind::kRandom;
    if (text == "balanced") return SamplerKind::kBalanced;
    throw ConfigError("unknown sampler '" + text + "' (expected random or balanced)");
}

AffinityMode parse_affinity_mode(const std::string& text) {
    if (text == "uniform") return AffinityMode::kUniform;
    if (text == "softmax") return AffinityMode::kSoftmax;
    throw ConfigError("unknown affinity mode '" + text + "' (expected uniform or softmax)");
}

namespace {

std::string cell_stem(const std::string& variant, std::uint64_t seed) {
    return variant + "_seed" + std::to_string(seed);
}

void write_plot_file(const std::string& path, const std::vector<double>& xs,
                     const std::vector<double>& ys) {
    std::ofstream out(path);
    if (!out) throw ConfigError("write_plot_file: cannot open '" + path + "'");
    out.precision(17);
    for (std::size_t i = 0; i < xs.size(); ++i) out << xs[i] << ' ' << ys[i] << '\n';
}

}  // namespace

MatrixResult run_experiment_matrix(const BenchmarkSpec& base,
                                   const std::vector<std::string>& variants,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::string& out_dir, bool verbose) {
    if (variants.empty()) throw ConfigError("run_experiment_matrix: no variants given");
    if (seeds.empty()) throw ConfigError("run_experiment_matrix: no seeds given");
    std::filesystem::create_directories(out_dir);

    MatrixResult result;
    for (const auto& variant : variants) {
        std::vector<const RunReport*> variant_reports;
        std::vector<RunReport> reports;
        reports.reserve(seeds.size());

        for (const auto seed : seeds) {
            CellResult cell;
            cell.variant = variant;
            cell.seed = seed;
            try {
                TrainConfig cfg = base.train;
                apply_variant(cfg, variant);
                cfg.seed = seed;
                if (!cfg.two_stage && cfg.schedule.kind != ScheduleKind::kConstant)
                    cfg.schedule = schedule_for_epochs(cfg.schedule.kind, cfg.epochs,
                                                       cfg.schedule.alpha0);

                SynthResult data = base.make_data(seed);
                HybridModel model(base.model_config(seed));
                PrototypeBank bank(base.lt.num_classes, cfg.prototypes_per_class, base.embed_dim);
                Rng proto_rng(seed, 0x70726f746full);  // "proto"
                bank.init_gaussian(proto_rng);

                Trainer trainer(model, bank, data.train, data.test, cfg);
                RunReport report = trainer.run();

                const std::string stem = out_dir + "/" + cell_stem(variant, seed);
                report.write_json(stem + ".json");
                report.write_csv(stem + ".csv");
                cell.report_path = stem + ".json";
                cell.final_top1 = report.final_eval.top1;
                cell.eval = report.final_eval;
                cell.ok = true;
                reports.push_back(std::move(report));
                if (verbose)
                    std::cout << variant << " seed " << seed << ": top1 " << cell.final_top1
                              << '\n';
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
                if (verbose)
                    std::cout << variant << " seed " << seed << " FAILED: " << cell.error << '\n';
            }
            result.cells.push_back(cell);
        }

        for (const auto& r : reports) variant_reports.push_back(&r);

        VariantAggregate agg;
        agg.variant = variant;
        agg.runs = variant_reports.size();
        if (agg.runs > 0) {
            double sum = 0.0, sum_sq = 0.0;
            for (const auto* r : variant_reports) {
                const double t = r->final_eval.top1;
                sum += t;
                sum_sq += t * t;
                agg.mean_head_acc += r->final_eval.head_acc;
                agg.mean_tail_acc += r->final_eval.tail_acc;
                agg.mean_intra += r->final_eval.intra_class_compactness;
                agg.mean_inter += r->final_eval.inter_class_separability;
            }
            const auto n = static_cast<double>(agg.runs);
            agg.mean_top1 = sum / n;
            agg.std_top1 = agg.runs > 1 ? std::sqrt(std::max(0.0, sum_sq / n -
                                                                      agg.mean_top1 * agg.mean_top1))
                                        : 0.0;
            agg.mean_head_acc /= n;
            agg.mean_tail_acc /= n;
            agg.mean_intra /= n;
            agg.mean_inter /= n;

            // Plot data: epoch vs mean test accuracy across seeds, plus the α trace.
            const std::size_t n_epochs = reports.front().epochs.size();
            std::vector<double> xs, acc, alpha;
            for (std::size_t e = 0; e < n_epochs; ++e) {
                double mean_acc = 0.0;
                std::size_t with_acc = 0;
                for (const auto* r : variant_reports) {
                    if (e < r->epochs.size() && r->epochs[e].test_top1) {
                        mean_acc += *r->epochs[e].test_top1;
                        ++with_acc;
                    }
                }
                xs.push_back(static_cast<double>(reports.front().epochs[e].epoch));
                acc.push_back(with_acc > 0 ? mean_acc / static_cast<double>(with_acc) : 0.0);
                alpha.push_back(reports.front().epochs[e].alpha);
            }
            write_plot_file(out_dir + "/" + variant + ".accuracy.txt", xs, acc);
            write_plot_file(out_dir + "/" + variant + ".alpha.txt", xs, alpha);
        }
        result.aggregates.push_back(agg);
    }

    std::ofstream summary(out_dir + "/summary.csv");
    if (!summary) throw ConfigError("run_experiment_matrix: cannot write summary.csv");
    summary << "variant,runs,mean_top1,std_top1,mean_head_acc,mean_tail_acc,"
               "mean_intra_compactness,mean_inter_separability\n";
    summary.precision(17);
    for (const auto& agg : result.aggregates) {
        summary << agg.variant << ',' << agg.runs << ',' << agg.mean_top1 << ',' << agg.std_top1
                << ',' << agg.mean_head_acc << ',' << agg.mean_tail_acc << ',' << agg.mean_intra
                << ',' << agg.mean_inter << '\n';
    }

    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : result.cells) {
        cells.push_back({{"variant", c.variant},
                         {"seed", c.seed},
                         {"ok", c.ok},
                         {"error", c.error},
                         {"final_top1", c.final_top1},
                         {"report", c.report_path}});
    }
    std::ofstream cells_out(out_dir + "/cells.json");
    cells_out << cells.dump(2) << '\n';

    return result;
}

}  // namespace tailnet
