#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tailnet/errors.hpp"
#include "tailnet/gradcheck.hpp"
#include "tailnet/losses.hpp"
#include "tailnet/model.hpp"
#include "tailnet/prototypes.hpp"
#include "tailnet/rng.hpp"

#include <cmath>

using namespace tailnet;

namespace {

ModelConfig toy_config(std::uint64_t seed) {
    ModelConfig mc;
    mc.input_dim = 2;
    mc.backbone_widths = {16};
    mc.projection_hidden = 8;
    mc.embed_dim = 4;
    mc.num_classes = 4;
    mc.init_seed = seed;
    return mc;
}

}  // namespace

TEST_CASE("identity backbone passes input through") {
    ModelConfig mc;
    mc.input_dim = 3;
    mc.backbone_widths = {};  // degenerate config: r = x
    mc.projection_hidden = 4;
    mc.embed_dim = 2;
    mc.num_classes = 2;
    HybridModel model(mc);
    Rng rng(9);
    const Matrix x = Matrix::gaussian(5, 3, rng);
    CHECK(max_abs_diff(model.forward_features(x), x) == 0.0);
}

TEST_CASE("forward passes are deterministic under a fixed seed") {
    const ModelConfig mc = toy_config(123);
    HybridModel a(mc), b(mc);
    Rng rng(77);
    const Matrix x = Matrix::gaussian(6, 2, rng);
    CHECK(max_abs_diff(a.forward_features(x), b.forward_features(x)) == 0.0);
    const Matrix ra = a.forward_features(x);
    CHECK(max_abs_diff(a.forward_classifier(ra), b.forward_classifier(ra)) == 0.0);
    CHECK(max_abs_diff(a.forward_contrastive(ra), b.forward_contrastive(ra)) == 0.0);
}

TEST_CASE("projection output lives on the unit sphere") {
    HybridModel model(toy_config(5));
    Rng rng(11);
    const Matrix z = model.forward_contrastive(model.forward_features(Matrix::gaussian(8, 2, rng)));
    for (std::size_t i = 0; i < z.rows(); ++i) CHECK(std::fabs(z.row_norm(i) - 1.0) < 1e-9);
}

TEST_CASE("classifier with zeroed dense layer emits its bias") {
    HybridModel model(toy_config(6));
    for (auto* p : model.classifier_params()) p->value.fill(0.0);
    model.classifier_params()[1]->value = Matrix::from_rows({{1, -2, 3, 0.5}});
    Rng rng(12);
    const Matrix s = model.forward_classifier(model.forward_features(Matrix::gaussian(3, 2, rng)));
    for (std::size_t i = 0; i < s.rows(); ++i) {
        CHECK(s(i, 0) == doctest::Approx(1.0));
        CHECK(s(i, 1) == doctest::Approx(-2.0));
        CHECK(s(i, 2) == doctest::Approx(3.0));
        CHECK(s(i, 3) == doctest::Approx(0.5));
    }
}

TEST_CASE("backbone width mismatch is a configuration error") {
    HybridModel model(toy_config(7));
    CHECK_THROWS_AS(model.forward_features(Matrix(2, 5)), ConfigError);
}

TEST_CASE("backbone gradients match finite differences") {
    HybridModel model(toy_config(21));
    Rng rng(22);
    const Matrix x = Matrix::gaussian(4, 2, rng);
    const Matrix functional = Matrix::gaussian(4, 16, rng);
    const auto scalar = [&](HybridModel& m) {
        const Matrix r = m.forward_features(x);
        double s = 0.0;
        for (std::size_t i = 0; i < r.raw().size(); ++i) s += r.raw()[i] * functional.raw()[i];
        return s;
    };

    model.zero_grad();
    model.forward_features(x);
    model.backward_features(functional);
    for (auto* param : model.backbone_params()) {
        const Matrix fd = finite_diff_gradient(
            [&](const Matrix& probe) {
                const Matrix saved = param->value;
                param->value = probe;
                const double v = scalar(model);
                param->value = saved;
                return v;
            },
            param->value);
        CHECK(max_rel_error(param->grad, fd) < 1e-5);
    }
}

TEST_CASE("hybrid gradient flows through both heads into the shared backbone") {
    HybridModel model(toy_config(31));
    Rng rng(32);
    const Matrix x_sc = Matrix::gaussian(6, 2, rng);
    const std::vector<int> sc_labels = {0, 0, 1, 1, 2, 2};
    const std::vector<int> views = {0, 1, 0, 1, 0, 1};
    const Matrix x_ce = Matrix::gaussian(4, 2, rng);
    const std::vector<int> ce_labels = {0, 1, 2, 3};
    const Temperature tau(0.5);
    const double alpha = 0.6;

    const auto hybrid_value = [&](HybridModel& m) {
        const double sc = sc_loss(
            EmbeddingBatch(m.forward_contrastive(m.forward_features(x_sc)), sc_labels, views), tau)
                              .loss;
        const double ce =
            ce_loss(LogitsBatch(m.forward_classifier(m.forward_features(x_ce)), ce_labels)).loss;
        return hybrid_loss(sc, ce, alpha);
    };

    model.zero_grad();
    {
        ScResult sc = sc_loss(
            EmbeddingBatch(model.forward_contrastive(model.forward_features(x_sc)), sc_labels,
                           views),
            tau);
        sc.grad_z *= alpha;
        model.backward_features(model.backward_contrastive(sc.grad_z));
        CeResult ce =
            ce_loss(LogitsBatch(model.forward_classifier(model.forward_features(x_ce)), ce_labels));
        ce.grad_logits *= 1.0 - alpha;
        model.backward_features(model.backward_classifier(ce.grad_logits));
    }
    for (auto* param : model.params()) {
        const Matrix fd = finite_diff_gradient(
            [&](const Matrix& probe) {
                const Matrix saved = param->value;
                param->value = probe;
                const double v = hybrid_value(model);
                param->value = saved;
                return v;
            },
            param->value);
        CHECK(max_rel_error(param->grad, fd) < 1e-4);
    }
}

TEST_CASE("alpha endpoints silence exactly one head") {
    HybridModel model(toy_config(41));
    Rng rng(42);
    const Matrix x_sc = Matrix::gaussian(4, 2, rng);
    const std::vector<int> sc_labels = {0, 0, 1, 1};
    const std::vector<int> views = {0, 1, 0, 1};
    const Matrix x_ce = Matrix::gaussian(3, 2, rng);
    const std::vector<int> ce_labels = {0, 1, 2};

    const auto run_with_alpha = [&](double alpha) {
        model.zero_grad();
        ScResult sc = sc_loss(
            EmbeddingBatch(model.forward_contrastive(model.forward_features(x_sc)), sc_labels,
                           views),
            Temperature(0.5));
        sc.grad_z *= alpha;
        model.backward_features(model.backward_contrastive(sc.grad_z));
        CeResult ce =
            ce_loss(LogitsBatch(model.forward_classifier(model.forward_features(x_ce)), ce_labels));
        ce.grad_logits *= 1.0 - alpha;
        model.backward_features(model.backward_classifier(ce.grad_logits));
    };

    run_with_alpha(0.0);
    for (auto* p : model.projection_params()) CHECK(max_abs(p->grad) == 0.0);
    bool classifier_touched = false;
    for (auto* p : model.classifier_params())
        if (max_abs(p->grad) > 0.0) classifier_touched = true;
    CHECK(classifier_touched);

    run_with_alpha(1.0);
    for (auto* p : model.classifier_params()) CHECK(max_abs(p->grad) == 0.0);
    bool projection_touched = false;
    for (auto* p : model.projection_params())
        if (max_abs(p->grad) > 0.0) projection_touched = true;
    CHECK(projection_touched);
}

TEST_CASE("backbone is genuinely shared between the branches") {
    HybridModel model(toy_config(51));
    Rng rng(52);
    const Matrix x_sc = Matrix::gaussian(4, 2, rng);
    const Matrix x_probe = Matrix::gaussian(3, 2, rng);
    const std::vector<int> sc_labels = {0, 0, 1, 1};

    const Matrix logits_before = model.forward_classifier(model.forward_features(x_probe));

    // One contrastive-branch-only gradient step.
    model.zero_grad();
    ScResult sc = sc_loss(
        EmbeddingBatch(model.forward_contrastive(model.forward_features(x_sc)), sc_labels),
        Temperature(0.5));
    model.backward_features(model.backward_contrastive(sc.grad_z));
    for (auto* p : model.backbone_params()) p->value.add_scaled(p->grad, -0.05);

    const Matrix logits_after = model.forward_classifier(model.forward_features(x_probe));
    CHECK(max_abs_diff(logits_before, logits_after) > 0.0);
}

TEST_CASE("prototype bank renormalization") {
    PrototypeBank bank(3, 1, 3);
    bank.param().value = Matrix::from_rows({{1, 0, 0}, {0, 2, 0}, {0, 0, 0.5}});
    bank.renormalize();
    CHECK(bank.values()(1, 1) == doctest::Approx(1.0));
    CHECK(bank.values()(2, 2) == doctest::Approx(1.0));
    CHECK(bank.max_norm_deviation() < 1e-12);

    // Already unit: unchanged to machine precision.
    const Matrix before = bank.values();
    bank.renormalize();
    CHECK(max_abs_diff(before, bank.values()) < 1e-12);

    bank.param().value(0, 0) = 0.0;  // collapse class 0's prototype
    CHECK_THROWS_WITH_AS(bank.renormalize(),
                         "PrototypeBank: prototype collapsed (class 0, prototype 0)",
                         TrainingAborted);
}

TEST_CASE("prototypes stay unit-norm through a hundred optimizer steps") {
    Rng rng(61);
    PrototypeBank bank(4, 1, 6);
    bank.init_gaussian(rng);
    SgdConfig cfg{0.1, 0.9, 1e-4};
    Matrix velocity(bank.param().value.rows(), bank.param().value.cols());

    for (int step = 0; step < 100; ++step) {
        Matrix z = Matrix::gaussian(8, 6, rng);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            const double norm = z.row_norm(i);
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) /= norm;
        }
        std::vector<int> labels(8);
        for (auto& y : labels) y = static_cast<int>(rng.uniform_below(4));
        const PscResult psc = psc_loss(EmbeddingBatch(z, labels), bank, Temperature(0.5));

        bank.param().zero_grad();
        bank.param().grad += psc.grad_prototypes;
        sgd_step(bank.param(), velocity, cfg);
        bank.renormalize();
        CHECK(bank.max_norm_deviation() < 1e-9);
    }

    // Unit prototypes and unit embeddings bound every affinity by 1/tau.
    Matrix z = Matrix::gaussian(16, 6, rng);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double norm = z.row_norm(i);
        for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) /= norm;
    }
    const double tau = 0.5;
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t c = 0; c < 4; ++c) {
            const double affinity = z.dot_rows(i, bank.values(), c) / tau;
            CHECK(affinity <= 1.0 / tau + 1e-9);
            CHECK(affinity >= -1.0 / tau - 1e-9);
        }
}
