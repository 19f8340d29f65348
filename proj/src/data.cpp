#include "tailnet/data.hpp"

#include "tailnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace tailnet {

void LongTailSpec::validate() const {
    if (num_classes < 1) throw ConfigError("LongTailSpec: need at least one class");
    if (n_max < 1) throw ConfigError("LongTailSpec: n_max must be positive");
    if (beta < 1.0) throw ConfigError("LongTailSpec: imbalance ratio beta must be >= 1");
}

std::vector<std::size_t> class_counts(const LongTailSpec& spec) {
    spec.validate();
    const std::size_t c = spec.num_classes;
    std::vector<std::size_t> counts(c);
    for (std::size_t i = 0; i < c; ++i) {
        const double exponent = c == 1 ? 0.0
                                       : -static_cast<double>(i) / static_cast<double>(c - 1);
        const double raw = static_cast<double>(spec.n_max) * std::pow(spec.beta, exponent);
        const auto n = static_cast<long long>(std::llround(raw));
        if (n < 1)
            throw ConfigError("class_counts: class " + std::to_string(i) +
                              " rounds to an empty class; lower beta or raise n_max");
        counts[i] = static_cast<std::size_t>(n);
    }
    return counts;
}

Dataset Dataset::from(Matrix features, std::vector<int> labels, std::size_t num_classes) {
    if (features.rows() != labels.size())
        throw ConfigError("Dataset: feature rows and label count differ");
    Dataset ds;
    ds.features = std::move(features);
    ds.labels = std::move(labels);
    ds.class_index.resize(num_classes);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        const int y = ds.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw ConfigError("Dataset: label " + std::to_string(y) + " at row " +
                              std::to_string(i) + " outside [0," + std::to_string(num_classes) +
                              ")");
        ds.class_index[static_cast<std::size_t>(y)].push_back(i);
    }
    return ds;
}

std::vector<std::size_t> Dataset::counts() const {
    std::vector<std::size_t> out(class_index.size());
    for (std::size_t c = 0; c < class_index.size(); ++c) out[c] = class_index[c].size();
    return out;
}

SynthResult synth_gaussian_longtail(const LongTailSpec& spec, std::size_t input_dim,
                                    double class_sep, std::size_t test_per_class,
                                    std::uint64_t seed) {
    if (!(class_sep > 0.0)) throw ConfigError("synth_gaussian_longtail: class_sep must be positive");
    if (input_dim == 0) throw ConfigError("synth_gaussian_longtail: input_dim must be positive");
    const auto counts = class_counts(spec);

    Rng mean_rng(seed, /*stream=*/0x6d65616eull);
    Matrix means(spec.num_classes, input_dim);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        double norm = 0.0;
        double* row = means.row_ptr(c);
        for (std::size_t d = 0; d < input_dim; ++d) {
            row[d] = mean_rng.gaussian();
            norm += row[d] * row[d];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) { row[0] = 1.0; norm = 1.0; }
        for (std::size_t d = 0; d < input_dim; ++d) row[d] *= class_sep / norm;
    }

    const auto draw_class = [&](Matrix& dst, std::vector<int>& labels, std::size_t row0,
                                std::size_t klass, std::size_t n, Rng& rng) {
        const double* mean = means.row_ptr(klass);
        for (std::size_t i = 0; i < n; ++i) {
            double* row = dst.row_ptr(row0 + i);
            for (std::size_t d = 0; d < input_dim; ++d) row[d] = mean[d] + rng.gaussian();
            labels[row0 + i] = static_cast<int>(klass);
        }
    };

    std::size_t n_train = 0;
    for (auto n : counts) n_train += n;
    Matrix train_x(n_train, input_dim);
    std::vector<int> train_y(n_train);
    Rng train_rng(seed, 0x747261696eull);  // "train"
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        draw_class(train_x, train_y, row, c, counts[c], train_rng);
        row += counts[c];
    }

    const std::size_t n_test = test_per_class * spec.num_classes;
    Matrix test_x(n_test, input_dim);
    std::vector<int> test_y(n_test);
    Rng test_rng(seed, 0x74657374ull);  // "test"
    row = 0;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        draw_class(test_x, test_y, row, c, test_per_class, test_rng);
        row += test_per_class;
    }

    SynthResult out;
    out.train = Dataset::from(std::move(train_x), std::move(train_y), spec.num_classes);
    out.test = Dataset::from(std::move(test_x), std::move(test_y), spec.num_classes);
    return out;
}

Dataset load_cifar_binary(const std::string& path, std::size_t num_classes) {
    constexpr std::size_t kPixels = 3072;
    constexpr std::size_t kRecord = kPixels + 1;

    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("load_cifar_binary: cannot open '" + path + "'", 0);
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    if (file_size == 0 || file_size % kRecord != 0)
        throw FormatError("load_cifar_binary: file size " + std::to_string(file_size) +
                              " is not a multiple of the 3073-byte record",
                          file_size - file_size % kRecord);

    const std::size_t n = file_size / kRecord;
    Matrix features(n, kPixels);
    std::vector<int> labels(n);
    std::vector<unsigned char> record(kRecord);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t offset = i * kRecord;
        in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(kRecord));
        if (!in) throw FormatError("load_cifar_binary: truncated record", offset);
        const unsigned label = record[0];
        if (label >= num_classes)
            throw FormatError("load_cifar_binary: label byte " + std::to_string(label) +
                                  " >= " + std::to_string(num_classes),
                              offset);
        labels[i] = static_cast<int>(label);
        double* row = features.row_ptr(i);
        for (std::size_t p = 0; p < kPixels; ++p)
            row[p] = static_cast<double>(record[1 + p]) / 255.0;
    }
    return Dataset::from(std::move(features), std::move(labels), num_classes);
}

Dataset subsample_longtail(const Dataset& ds, const LongTailSpec& spec, std::uint64_t seed) {
    if (ds.num_classes() != spec.num_classes)
        throw ConfigError("subsample_longtail: dataset has " + std::to_string(ds.num_classes()) +
                          " classes, spec expects " + std::to_string(spec.num_classes));
    const auto target = class_counts(spec);
    Rng rng(seed, 0x737562ull);  // "sub"

    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        std::vector<std::size_t> rows = ds.class_index[c];
        if (rows.size() < target[c])
            throw ConfigError("subsample_longtail: class " + std::to_string(c) + " has only " +
                              std::to_string(rows.size()) + " samples, needs " +
                              std::to_string(target[c]));
        // Fisher-Yates with the project Rng so runs are reproducible.
        for (std::size_t i = rows.size(); i > 1; --i)
            std::swap(rows[i - 1], rows[rng.uniform_below(i)]);
        keep.insert(keep.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(target[c]));
    }

    Matrix features(keep.size(), ds.dim());
    std::vector<int> labels(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const double* src = ds.features.row_ptr(keep[i]);
        std::copy(src, src + ds.dim(), features.row_ptr(i));
        labels[i] = ds.labels[keep[i]];
    }
    return Dataset::from(std::move(features), std::move(labels), spec.num_classes);
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("write_dataset_csv: cannot open '" + path + "' for writing");
    out << "label";
    for (std::size_t d = 0; d < ds.dim(); ++d) out << ",f" << d;
    out << '\n';
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        const double* row = ds.features.row_ptr(i);
        for (std::size_t d = 0; d < ds.dim(); ++d) out << ',' << row[d];
        out << '\n';
    }
    if (!out) throw ConfigError("write_dataset_csv: write failed for '" + path + "'");
}

Views make_views(const Matrix& x_rows, double noise_sigma, Rng& rng) {
    if (noise_sigma < 0.0) throw ConfigError("make_views: noise_sigma must be non-negative");
    Views views;
    views.rows = Matrix(2 * x_rows.rows(), x_rows.cols());
    views.view_ids.resize(2 * x_rows.rows());
    views.sources.resize(2 * x_rows.rows());
    for (std::size_t i = 0; i < x_rows.rows(); ++i) {
        for (int v = 0; v < 2; ++v) {
            const std::size_t out_row = 2 * i + static_cast<std::size_t>(v);
            const double* src = x_rows.row_ptr(i);
            double* dst = views.rows.row_ptr(out_row);
            for (std::size_t d = 0; d < x_rows.cols(); ++d)
                dst[d] = src[d] + (noise_sigma > 0.0 ? noise_sigma * rng.gaussian() : 0.0);
            views.view_ids[out_row] = v;
            views.sources[out_row] = i;
        }
    }
    return views;
}

RandomSampler::RandomSampler(std::size_t dataset_size, std::uint64_t seed)
    : rng_(seed, 0x726e64ull), perm_(dataset_size), cursor_(0) {
    if (dataset_size == 0) throw ConfigError("RandomSampler: empty dataset");
    for (std::size_t i = 0; i < dataset_size; ++i) perm_[i] = i;
    reshuffle();
}

void RandomSampler::reshuffle() {
    for (std::size_t i = perm_.size(); i > 1; --i)
        std::swap(perm_[i - 1], perm_[rng_.uniform_below(i)]);
    cursor_ = 0;
}

std::vector<std::size_t> RandomSampler::next(std::size_t count) {
    if (count == 0) throw ConfigError("RandomSampler: batch size must be positive");
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
        if (cursor_ == perm_.size()) reshuffle();
        out.push_back(perm_[cursor_++]);
    }
    return out;
}

void RandomSampler::save(std::ostream& out) const {
    rng_.save(out);
    out << ' ' << perm_.size() << ' ' << cursor_;
    for (auto v : perm_) out << ' ' << v;
    out << '\n';
}

void RandomSampler::load(std::istream& in) {
    Rng staged_rng = rng_;
    staged_rng.load(in);
    std::size_t n = 0, cursor = 0;
    in >> n >> cursor;
    if (!in || n != perm_.size() || cursor > n)
        throw CheckpointError("RandomSampler::load: bad permutation header");
    std::vector<std::size_t> perm(n);
    for (auto& v : perm) in >> v;
    if (!in) throw CheckpointError("RandomSampler::load: truncated permutation");
    rng_ = staged_rng;
    perm_ = std::move(perm);
    cursor_ = cursor;
}

std::unique_ptr<Sampler> RandomSampler::clone() const {
    return std::make_unique<RandomSampler>(*this);
}

ClassBalancedSampler::ClassBalancedSampler(const Dataset& ds, std::uint64_t seed)
    : class_index_(ds.class_index), rng_(seed, 0x62616cull) {
    if (ds.size() == 0) throw ConfigError("ClassBalancedSampler: empty dataset");
    for (std::size_t c = 0; c < class_index_.size(); ++c)
        if (class_index_[c].empty())
            throw ConfigError("ClassBalancedSampler: class " + std::to_string(c) +
                              " has no samples");
}

std::vector<std::size_t> ClassBalancedSampler::next(std::size_t count) {
    if (count == 0) throw ConfigError("ClassBalancedSampler: batch size must be positive");
    std::vector<std::size_t> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t c = rng_.uniform_below(class_index_.size());
        const auto& rows = class_index_[c];
        out.push_back(rows[rng_.uniform_below(rows.size())]);
    }
    return out;
}

void ClassBalancedSampler::save(std::ostream& out) const {
    rng_.save(out);
    out << '\n';
}

void ClassBalancedSampler::load(std::istream& in) { rng_.load(in); }

std::unique_ptr<Sampler> ClassBalancedSampler::clone() const {
    return std::make_unique<ClassBalancedSampler>(*this);
}

std::unique_ptr<Sampler> make_sampler(SamplerKind kind, const Dataset& ds, std::uint64_t seed) {
    if (kind == SamplerKind::kRandom) return std::make_unique<RandomSampler>(ds.size(), seed);
    return std::make_unique<ClassBalancedSampler>(ds, seed);
}

std::string to_string(SamplerKind kind) {
    return kind == SamplerKind::kRandom ? "random" : "balanced";
}

ScBatch compose_sc_batch(const Dataset& ds, Sampler& sampler, std::size_t batch_size,
                         double noise_sigma, std::size_t positives_cap, Rng& rng) {
    if (batch_size < 1) throw ConfigError("compose_sc_batch: batch_size must be >= 1");
    const auto picked = sampler.next(batch_size);

    Matrix sources(batch_size, ds.dim());
    for (std::size_t i = 0; i < batch_size; ++i) {
        const double* src = ds.features.row_ptr(picked[i]);
        std::copy(src, src + ds.dim(), sources.row_ptr(i));
    }
    Views views = make_views(sources, noise_sigma, rng);

    ScBatch batch;
    batch.rows = std::move(views.rows);
    batch.view_ids = std::move(views.view_ids);
    batch.labels.resize(batch.rows.rows());
    for (std::size_t r = 0; r < batch.rows.rows(); ++r)
        batch.labels[r] = ds.labels[picked[views.sources[r]]];

    const std::size_t n = batch.rows.rows();
    batch.positives.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t sibling = i ^ 1ull;  // the other view of the same source
        std::vector<int> others;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && j != sibling && batch.labels[j] == batch.labels[i])
                others.push_back(static_cast<int>(j));
        auto& pos = batch.positives[i];
        pos.push_back(static_cast<int>(sibling));
        if (positives_cap == 0 || others.size() + 1 <= positives_cap) {
            pos.insert(pos.end(), others.begin(), others.end());
        } else {
            // Seeded partial Fisher-Yates; the sibling always stays.
            for (std::size_t k = 0; k + 1 < positives_cap; ++k) {
                const std::size_t pick = k + rng.uniform_below(others.size() - k);
                std::swap(others[k], others[pick]);
                pos.push_back(others[k]);
            }
        }
    }
    return batch;
}

}  // namespace tailnet
