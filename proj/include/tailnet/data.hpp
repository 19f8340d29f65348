#pragma once

#include "tailnet/matrix.hpp"
#include "tailnet/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace tailnet {

/// Class-count profile under imbalance ratio β = N_max/N_min, with sample
/// sizes decaying exponentially across class ids.
struct LongTailSpec {
    std::size_t num_classes = 10;
    std::size_t n_max = 5000;
    double beta = 100.0;  // ≥ 1

    void validate() const;
};

/// n_c = round(n_max · β^(−c/(C−1))): endpoints are exactly n_max and n_max/β.
std::vector<std::size_t> class_counts(const LongTailSpec& spec);

struct Dataset {
    Matrix features;  // N×D
    std::vector<int> labels;
    std::vector<std::vector<std::size_t>> class_index;  // rows per class

    static Dataset from(Matrix features, std::vector<int> labels, std::size_t num_classes);

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    std::size_t num_classes() const { return class_index.size(); }
    std::vector<std::size_t> counts() const;
};

struct SynthResult {
    Dataset train;  // long-tailed per spec
    Dataset test;   // balanced, test_per_class rows per class
};

/// Gaussian-mixture stand-in for an image benchmark: class c is an isotropic
/// unit-variance Gaussian around a seed-determined mean of norm class_sep.
SynthResult synth_gaussian_longtail(const LongTailSpec& spec, std::size_t input_dim,
                                    double class_sep, std::size_t test_per_class,
                                    std::uint64_t seed);

/// CIFAR-10 binary batch format: 3073-byte records, 1 label byte + 3072
/// pixel bytes; pixels are scaled to [0,1]. Truncation or an out-of-range
/// label is a format error carrying the offending byte offset.
Dataset load_cifar_binary(const std::string& path, std::size_t num_classes = 10);

/// Keeps the first n_c samples of class c after a seeded shuffle.
Dataset subsample_longtail(const Dataset& ds, const LongTailSpec& spec, std::uint64_t seed);

/// label,f0..f{D-1} rows; header included.
void write_dataset_csv(const Dataset& ds, const std::string& path);

struct Views {
    Matrix rows;                       // 2N×D: rows 2i, 2i+1 are the two views of source i
    std::vector<int> view_ids;         // 0/1 alternating
    std::vector<std::size_t> sources;  // source row per view
};

/// Two additively-perturbed copies per input row (sigma = 0 reproduces the
/// source exactly). This is the generic stand-in for per-view augmentation.
Views make_views(const Matrix& x_rows, double noise_sigma, Rng& rng);

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

class Sampler {
public:
    virtual ~Sampler() = default;
    virtual std::vector<std::size_t> next(std::size_t count) = 0;
    virtual void save(std::ostream& out) const = 0;
    virtual void load(std::istream& in) = 0;
    virtual std::unique_ptr<Sampler> clone() const = 0;
};

/// Uniform without replacement within a pass: hands out a seeded permutation
/// in chunks and reshuffles when exhausted.
class RandomSampler : public Sampler {
public:
    RandomSampler(std::size_t dataset_size, std::uint64_t seed);
    std::vector<std::size_t> next(std::size_t count) override;
    void save(std::ostream& out) const override;
    void load(std::istream& in) override;
    std::unique_ptr<Sampler> clone() const override;

private:
    void reshuffle();
    Rng rng_;
    std::vector<std::size_t> perm_;
    std::size_t cursor_;
};

/// Class chosen uniformly, then an instance uniformly within the class (with
/// replacement — tail classes would otherwise run dry mid-pass).
class ClassBalancedSampler : public Sampler {
public:
    ClassBalancedSampler(const Dataset& ds, std::uint64_t seed);
    std::vector<std::size_t> next(std::size_t count) override;
    void save(std::ostream& out) const override;
    void load(std::istream& in) override;
    std::unique_ptr<Sampler> clone() const override;

private:
    std::vector<std::vector<std::size_t>> class_index_;
    Rng rng_;
};

enum class SamplerKind { kRandom, kBalanced };

std::unique_ptr<Sampler> make_sampler(SamplerKind kind, const Dataset& ds, std::uint64_t seed);
std::string to_string(SamplerKind kind);

// ---------------------------------------------------------------------------
// Contrastive batch composition
// ---------------------------------------------------------------------------

/// Feature-branch batch: two views per drawn source, plus the per-anchor
/// positive sets (possibly capped). The sibling view guarantees every anchor
/// at least one positive.
struct ScBatch {
    Matrix rows;  // 2B×D
    std::vector<int> labels;
    std::vector<int> view_ids;
    std::vector<std::vector<int>> positives;
};

/// Draws `batch_size` sources from the sampler, perturbs two views of each,
/// and assembles positive sets from same-class rows. positives_cap = 0 keeps
/// all positives; a finite cap keeps the sibling view first and a seeded
/// random subset of the rest.
ScBatch compose_sc_batch(const Dataset& ds, Sampler& sampler, std::size_t batch_size,
                         double noise_sigma, std::size_t positives_cap, Rng& rng);

}  // namespace tailnet
