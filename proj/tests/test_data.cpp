#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tailnet/data.hpp"
#include "tailnet/errors.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

using namespace tailnet;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// Independent route to the decay profile: exp/log instead of pow, long double.
std::vector<std::size_t> decay_profile(std::size_t c, std::size_t n_max, long double beta) {
    std::vector<std::size_t> out(c);
    for (std::size_t i = 0; i < c; ++i) {
        const long double expo =
            c == 1 ? 0.0L : -static_cast<long double>(i) / static_cast<long double>(c - 1);
        out[i] = static_cast<std::size_t>(
            llroundl(static_cast<long double>(n_max) * expl(expo * logl(beta))));
    }
    return out;
}

}  // namespace

TEST_CASE("class counts for the canonical profile") {
    const LongTailSpec spec{10, 5000, 100.0};
    const auto counts = class_counts(spec);
    CHECK(counts[0] == 5000);
    CHECK(counts[9] == 50);
    CHECK(counts[0] / counts[9] == 100);  // endpoints are exact by construction

    const auto expected = decay_profile(10, 5000, 100.0L);
    for (std::size_t c = 0; c < 10; ++c) CHECK(counts[c] == expected[c]);
    // Frozen values from the independent evaluation above.
    CHECK(counts == std::vector<std::size_t>{5000, 2997, 1797, 1077, 646, 387, 232, 139, 83, 50});
}

TEST_CASE("class counts properties") {
    const auto equal = class_counts(LongTailSpec{7, 123, 1.0});
    for (auto c : equal) CHECK(c == 123);

    for (const double beta : {2.0, 10.0, 37.5, 100.0}) {
        for (const std::size_t c : {2ul, 5ul, 10ul, 23ul}) {
            const LongTailSpec spec{c, 4000, beta};
            const auto counts = class_counts(spec);
            for (std::size_t i = 1; i < c; ++i) CHECK(counts[i] <= counts[i - 1]);
            // Extremes satisfy the ratio within rounding.
            const double implied = static_cast<double>(counts[0]) / static_cast<double>(counts[c - 1]);
            const double exact_min = 4000.0 / beta;
            CHECK(std::fabs(static_cast<double>(counts[c - 1]) - exact_min) <= 1.0);
            CHECK(implied == doctest::Approx(beta).epsilon(0.05));
        }
    }

    CHECK_THROWS_AS(class_counts(LongTailSpec{10, 50, 1000.0}), ConfigError);  // tail would empty
    CHECK_THROWS_AS(class_counts(LongTailSpec{10, 100, 0.5}), ConfigError);
}

TEST_CASE("synthetic long-tail generation") {
    const LongTailSpec spec{5, 200, 20.0};
    const SynthResult a = synth_gaussian_longtail(spec, 8, 3.0, 40, 99);
    const SynthResult b = synth_gaussian_longtail(spec, 8, 3.0, 40, 99);
    CHECK(max_abs_diff(a.train.features, b.train.features) == 0.0);
    CHECK(a.train.labels == b.train.labels);
    CHECK(max_abs_diff(a.test.features, b.test.features) == 0.0);

    CHECK(a.train.counts() == class_counts(spec));
    for (auto count : a.test.counts()) CHECK(count == 40);

    // Rows are partitioned by the class index lists.
    std::size_t indexed = 0;
    for (std::size_t c = 0; c < a.train.num_classes(); ++c) {
        for (auto row : a.train.class_index[c])
            CHECK(a.train.labels[row] == static_cast<int>(c));
        indexed += a.train.class_index[c].size();
    }
    CHECK(indexed == a.train.size());

    const SynthResult other = synth_gaussian_longtail(spec, 8, 3.0, 40, 100);
    CHECK(max_abs_diff(a.train.features, other.train.features) > 0.0);
}

TEST_CASE("widely separated classes are nearest-mean classifiable") {
    const LongTailSpec spec{4, 100, 10.0};
    const SynthResult data = synth_gaussian_longtail(spec, 6, 50.0, 50, 7);

    // Class means estimated from the training data.
    Matrix means(4, 6);
    for (std::size_t c = 0; c < 4; ++c) {
        for (auto row : data.train.class_index[c])
            for (std::size_t j = 0; j < 6; ++j) means(c, j) += data.train.features(row, j);
        for (std::size_t j = 0; j < 6; ++j)
            means(c, j) /= static_cast<double>(data.train.class_index[c].size());
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        double best = 1e300;
        std::size_t arg = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            double dist = 0.0;
            for (std::size_t j = 0; j < 6; ++j) {
                const double d = data.test.features(i, j) - means(c, j);
                dist += d * d;
            }
            if (dist < best) {
                best = dist;
                arg = c;
            }
        }
        if (arg == static_cast<std::size_t>(data.test.labels[i])) ++hits;
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(data.test.size()) >= 0.99);
}

TEST_CASE("cifar binary parsing") {
    const std::string path = temp_path("tailnet_cifar_test.bin");
    {
        std::ofstream out(path, std::ios::binary);
        for (int rec = 0; rec < 10; ++rec) {
            unsigned char label = static_cast<unsigned char>(rec % 10);
            out.put(static_cast<char>(label));
            for (int p = 0; p < 3072; ++p)
                out.put(static_cast<char>((rec + p) % 256));
        }
    }
    const Dataset ds = load_cifar_binary(path);
    CHECK(ds.size() == 10);
    CHECK(ds.dim() == 3072);
    // Record 1, pixel 254 holds byte 255 → exactly 1.0.
    CHECK(ds.features(1, 254) == 1.0);
    CHECK(ds.features(0, 0) == 0.0);
    CHECK(ds.labels[7] == 7);

    // Truncation mid-record: error carries the offending record offset.
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        for (int b = 0; b < 3073 + 100; ++b) out.put(static_cast<char>(1));
    }
    try {
        load_cifar_binary(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 3073);
    }

    // Label byte out of range.
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.put(static_cast<char>(11));
        for (int p = 0; p < 3072; ++p) out.put(static_cast<char>(0));
    }
    try {
        load_cifar_binary(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 0);
    }
    std::remove(path.c_str());
}

TEST_CASE("cifar-sized file parses and subsamples to the decay profile") {
    const std::string path = temp_path("tailnet_cifar_big.bin");
    {
        std::ofstream out(path, std::ios::binary);
        std::vector<char> pixels(3072, 42);
        for (int rec = 0; rec < 10000; ++rec) {
            out.put(static_cast<char>(rec % 10));  // 1000 records per class
            out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
        }
    }
    const Dataset full = load_cifar_binary(path);
    CHECK(full.size() == 10000);

    const LongTailSpec spec{10, 1000, 100.0};
    const Dataset lt = subsample_longtail(full, spec, 3);
    CHECK(lt.counts() == class_counts(spec));
    CHECK(lt.counts() == decay_profile(10, 1000, 100.0L));

    // beta = 1 keeps everything (order aside).
    const Dataset same = subsample_longtail(full, LongTailSpec{10, 1000, 1.0}, 3);
    CHECK(same.size() == full.size());
    CHECK(same.counts() == full.counts());
    std::remove(path.c_str());
}

TEST_CASE("view perturbation") {
    Rng rng(15);
    const Matrix x = Matrix::gaussian(5, 4, rng);

    Rng v0(1, 2);
    const Views exact = make_views(x, 0.0, v0);
    CHECK(exact.rows.rows() == 10);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(exact.rows(2 * i, j) == x(i, j));
            CHECK(exact.rows(2 * i + 1, j) == x(i, j));
        }
    CHECK(exact.view_ids[0] == 0);
    CHECK(exact.view_ids[1] == 1);
    CHECK(exact.sources[3] == 1);

    Rng v1(44, 0), v2(44, 0);
    const Views a = make_views(x, 0.3, v1);
    const Views b = make_views(x, 0.3, v2);
    CHECK(max_abs_diff(a.rows, b.rows) == 0.0);

    // Mean squared perturbation ≈ sigma² by the law of large numbers.
    Rng v3(5, 0);
    const Matrix wide(1, 10000, 0.0);
    const Views noisy = make_views(wide, 0.1, v3);
    double mse = 0.0;
    for (std::size_t j = 0; j < wide.cols(); ++j) {
        mse += noisy.rows(0, j) * noisy.rows(0, j);
        mse += noisy.rows(1, j) * noisy.rows(1, j);
    }
    mse /= 2.0 * static_cast<double>(wide.cols());
    CHECK(mse == doctest::Approx(0.01).epsilon(0.10));

    CHECK_THROWS_AS(make_views(x, -0.1, v3), ConfigError);
}

TEST_CASE("random sampler walks a permutation per pass") {
    RandomSampler sampler(97, 5);
    const auto pass = sampler.next(97);
    std::set<std::size_t> seen(pass.begin(), pass.end());
    CHECK(seen.size() == 97);  // every index exactly once

    RandomSampler again(97, 5);
    CHECK(again.next(97) == pass);  // deterministic under the seed

    // Refill keeps batches full across the pass boundary.
    const auto spill = sampler.next(10);
    CHECK(spill.size() == 10);
}

TEST_CASE("class-balanced sampler equalizes class exposure") {
    const LongTailSpec spec{10, 500, 100.0};
    const SynthResult data = synth_gaussian_longtail(spec, 4, 3.0, 5, 31);

    ClassBalancedSampler sampler(data.train, 8);
    std::vector<std::size_t> hits(10, 0);
    const std::size_t draws = 100000;
    for (auto row : sampler.next(draws)) ++hits[static_cast<std::size_t>(data.train.labels[row])];
    for (std::size_t c = 0; c < 10; ++c) {
        const double freq = static_cast<double>(hits[c]) / static_cast<double>(draws);
        CHECK(std::fabs(freq - 0.1) < 0.02);
    }

    // Balanced data: the random sampler's class frequencies agree within 2%.
    const SynthResult balanced = synth_gaussian_longtail(LongTailSpec{10, 200, 1.0}, 4, 3.0, 5, 32);
    RandomSampler random_sampler(balanced.train.size(), 9);
    ClassBalancedSampler balanced_sampler(balanced.train, 9);
    std::vector<double> freq_random(10, 0.0), freq_balanced(10, 0.0);
    for (auto row : random_sampler.next(draws))
        freq_random[static_cast<std::size_t>(balanced.train.labels[row])] += 1.0;
    for (auto row : balanced_sampler.next(draws))
        freq_balanced[static_cast<std::size_t>(balanced.train.labels[row])] += 1.0;
    for (std::size_t c = 0; c < 10; ++c)
        CHECK(std::fabs(freq_random[c] - freq_balanced[c]) / draws < 0.02);

    // A dataset with a vacant class cannot be balanced-sampled.
    Dataset holey = Dataset::from(Matrix(2, 2), {0, 0}, 2);
    CHECK_THROWS_AS(ClassBalancedSampler(holey, 1), ConfigError);
}

TEST_CASE("sc batch composition") {
    const LongTailSpec spec{3, 30, 3.0};
    const SynthResult data = synth_gaussian_longtail(spec, 4, 3.0, 5, 77);
    Rng views(1, 1);

    // Single source: two rows, each the other's sole positive.
    RandomSampler one(data.train.size(), 2);
    const ScBatch tiny = compose_sc_batch(data.train, one, 1, 0.1, 0, views);
    CHECK(tiny.rows.rows() == 2);
    CHECK(tiny.positives[0] == std::vector<int>{1});
    CHECK(tiny.positives[1] == std::vector<int>{0});
    CHECK(tiny.labels[0] == tiny.labels[1]);
    CHECK(tiny.view_ids[0] == 0);
    CHECK(tiny.view_ids[1] == 1);

    // Four sources of one class: each of the 8 rows sees the other 7.
    Matrix mono(4, 2, 1.0);
    const Dataset mono_ds = Dataset::from(std::move(mono), {0, 0, 0, 0}, 1);
    RandomSampler mono_sampler(4, 3);
    const ScBatch full = compose_sc_batch(mono_ds, mono_sampler, 4, 0.0, 0, views);
    CHECK(full.rows.rows() == 8);
    for (const auto& pos : full.positives) CHECK(pos.size() == 7);

    // Cap = 2: every anchor keeps min(2, available), sibling always included.
    Rng views2(1, 2);
    RandomSampler capped_sampler(data.train.size(), 4);
    const ScBatch capped = compose_sc_batch(data.train, capped_sampler, 8, 0.1, 2, views2);
    CHECK(capped.rows.rows() == 16);
    for (std::size_t i = 0; i < 16; ++i) {
        std::size_t available = 0;
        for (std::size_t j = 0; j < 16; ++j)
            if (j != i && capped.labels[j] == capped.labels[i]) ++available;
        CHECK(capped.positives[i].size() == std::min<std::size_t>(2, available));
        CHECK(!capped.positives[i].empty());
        const int sibling = static_cast<int>(i ^ 1ull);
        bool has_sibling = false;
        for (int p : capped.positives[i]) {
            if (p == sibling) has_sibling = true;
            CHECK(capped.labels[static_cast<std::size_t>(p)] == capped.labels[i]);
        }
        CHECK(has_sibling);
    }
}

TEST_CASE("dataset csv export") {
    const LongTailSpec spec{3, 20, 4.0};
    const SynthResult data = synth_gaussian_longtail(spec, 3, 2.0, 2, 11);
    const std::string path = temp_path("tailnet_ds.csv");
    write_dataset_csv(data.train, path);

    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "label,f0,f1,f2");
    std::vector<std::size_t> counts(3, 0);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        ++counts[static_cast<std::size_t>(line[0] - '0')];
    }
    CHECK(rows == data.train.size());
    CHECK(counts == class_counts(spec));
    std::remove(path.c_str());
}
