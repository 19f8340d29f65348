#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tailnet/errors.hpp"
#include "tailnet/gradcheck.hpp"
#include "tailnet/layers.hpp"
#include "tailnet/matrix.hpp"
#include "tailnet/param.hpp"
#include "tailnet/rng.hpp"

#include <cmath>
#include <sstream>

using namespace tailnet;

TEST_CASE("matrix basics") {
    Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 2);
    CHECK(m(1, 0) == 3.0);
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1.0}), ConfigError);

    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
    const Matrix ab = matmul(a, b);
    CHECK(ab(0, 0) == doctest::Approx(19));
    CHECK(ab(1, 1) == doctest::Approx(50));
    CHECK(max_abs_diff(matmul_tn(a, b), matmul(transpose(a), b)) == doctest::Approx(0.0));
    CHECK(max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))) == doctest::Approx(0.0));
    const Matrix cs = col_sums(a);
    CHECK(cs(0, 0) == 4.0);
    CHECK(cs(0, 1) == 6.0);
}

TEST_CASE("rng determinism and serialization") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(42, 1);
    CHECK(Rng(42).next_u64() != c.next_u64());  // substreams decorrelate

    Rng d(7);
    d.gaussian();  // leave a cached spare in flight
    std::stringstream ss;
    d.save(ss);
    Rng e(0);
    e.load(ss);
    CHECK(d == e);
    for (int i = 0; i < 10; ++i) CHECK(d.gaussian() == e.gaussian());

    for (int i = 0; i < 1000; ++i) CHECK(d.uniform_below(7) < 7);
    CHECK_THROWS_AS(d.uniform_below(0), ConfigError);
}

TEST_CASE("rng gaussian moments") {
    Rng rng(3);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sum_sq += g * g;
    }
    CHECK(std::fabs(sum / n) < 0.02);
    CHECK(sum_sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("dense forward examples") {
    Rng rng(1);
    DenseLayer identity("id", 2, 2);
    identity.weights().value = Matrix::from_rows({{1, 0}, {0, 1}});
    CHECK(max_abs_diff(identity.forward(Matrix::from_rows({{1, 2}})),
                       Matrix::from_rows({{1, 2}})) == 0.0);

    DenseLayer biased("biased", 2, 2);
    biased.init(rng);
    biased.bias().value = Matrix::from_rows({{3, -1}});
    const Matrix out = biased.forward(Matrix::from_rows({{0, 0}}));
    CHECK(out(0, 0) == doctest::Approx(3.0));
    CHECK(out(0, 1) == doctest::Approx(-1.0));

    DenseLayer hand("hand", 2, 2);
    hand.weights().value = Matrix::from_rows({{2, 0}, {0, 3}});
    hand.bias().value = Matrix::from_rows({{1, 1}});
    const Matrix out2 = hand.forward(Matrix::from_rows({{1, 1}}));
    CHECK(out2(0, 0) == doctest::Approx(3.0));
    CHECK(out2(0, 1) == doctest::Approx(4.0));

    CHECK_THROWS_AS(hand.forward(Matrix(1, 3)), ConfigError);
}

TEST_CASE("dense backward examples") {
    DenseLayer layer("bw", 1, 1);
    layer.weights().value = Matrix::from_rows({{3}});
    CHECK_THROWS_AS(layer.backward(Matrix(1, 1, 1.0)), StateError);

    layer.forward(Matrix::from_rows({{2}}));
    const Matrix grad_in = layer.backward(Matrix::from_rows({{1}}));
    CHECK(layer.weights().grad(0, 0) == doctest::Approx(2.0));  // dW = input · upstream
    CHECK(grad_in(0, 0) == doctest::Approx(3.0));               // dInput = upstream · W

    DenseLayer zero("zero", 3, 2);
    Rng rng(5);
    zero.init(rng);
    zero.forward(Matrix::gaussian(4, 3, rng));
    zero.backward(Matrix(4, 2, 0.0));
    CHECK(max_abs(zero.weights().grad) == 0.0);
    CHECK(max_abs(zero.bias().grad) == 0.0);
}

TEST_CASE("dense gradients match finite differences") {
    Rng rng(11);
    DenseLayer layer("fd", 3, 4);
    layer.init(rng);
    const Matrix x = Matrix::gaussian(5, 3, rng);
    const Matrix functional = Matrix::gaussian(5, 4, rng);
    const auto scalar = [&](const Matrix& out) {
        double s = 0.0;
        for (std::size_t i = 0; i < out.raw().size(); ++i) s += out.raw()[i] * functional.raw()[i];
        return s;
    };

    layer.forward(x);
    const Matrix grad_in = layer.backward(functional);

    const Matrix fd_in = finite_diff_gradient(
        [&](const Matrix& probe) {
            DenseLayer probed = layer;
            return scalar(probed.forward(probe));
        },
        x);
    CHECK(max_rel_error(grad_in, fd_in) < 1e-6);

    const Matrix fd_w = finite_diff_gradient(
        [&](const Matrix& probe) {
            DenseLayer probed = layer;
            probed.weights().value = probe;
            return scalar(probed.forward(x));
        },
        layer.weights().value);
    CHECK(max_rel_error(layer.weights().grad, fd_w) < 1e-6);

    const Matrix fd_b = finite_diff_gradient(
        [&](const Matrix& probe) {
            DenseLayer probed = layer;
            probed.bias().value = probe;
            return scalar(probed.forward(x));
        },
        layer.bias().value);
    CHECK(max_rel_error(layer.bias().grad, fd_b) < 1e-6);
}

TEST_CASE("l2 normalize forward") {
    L2NormalizeLayer layer;
    const Matrix out = layer.forward(Matrix::from_rows({{3, 4}}));
    CHECK(out(0, 0) == doctest::Approx(0.6));
    CHECK(out(0, 1) == doctest::Approx(0.8));

    const Matrix unit = Matrix::from_rows({{0.6, 0.8}});
    CHECK(max_abs_diff(layer.forward(unit), unit) < 1e-12);

    const Matrix diag = layer.forward(Matrix::from_rows({{1, 1}}));
    CHECK(diag(0, 0) == doctest::Approx(0.7071).epsilon(1e-4));
    CHECK(diag(0, 1) == doctest::Approx(0.7071).epsilon(1e-4));

    CHECK_THROWS_AS(layer.forward(Matrix::from_rows({{0, 0}})), DegenerateInputError);

    Rng rng(2);
    const Matrix big = layer.forward(Matrix::gaussian(20, 6, rng));
    for (std::size_t i = 0; i < big.rows(); ++i)
        CHECK(std::fabs(big.row_norm(i) - 1.0) < 1e-9);
}

TEST_CASE("l2 normalize backward") {
    L2NormalizeLayer layer;
    CHECK_THROWS_AS(layer.backward(Matrix(1, 2, 1.0)), StateError);

    const Matrix z = layer.forward(Matrix::from_rows({{3, 4}}));
    // Upstream parallel to z: the radial component dies.
    CHECK(max_abs(layer.backward(z)) < 1e-12);

    layer.forward(Matrix::from_rows({{3, 4}}));
    const Matrix g = layer.backward(Matrix::from_rows({{1, 0}}));
    CHECK(g(0, 0) == doctest::Approx(0.128));
    CHECK(g(0, 1) == doctest::Approx(-0.096));

    // Random batch vs finite differences plus tangency of the output rows.
    Rng rng(13);
    const Matrix x = Matrix::gaussian(4, 8, rng);
    const Matrix functional = Matrix::gaussian(4, 8, rng);
    const auto scalar = [&](const Matrix& out) {
        double s = 0.0;
        for (std::size_t i = 0; i < out.raw().size(); ++i) s += out.raw()[i] * functional.raw()[i];
        return s;
    };
    const Matrix zz = layer.forward(x);
    const Matrix grad_in = layer.backward(functional);
    const Matrix fd = finite_diff_gradient(
        [&](const Matrix& probe) {
            L2NormalizeLayer probed;
            return scalar(probed.forward(probe));
        },
        x);
    CHECK(max_rel_error(grad_in, fd) < 1e-6);
    for (std::size_t i = 0; i < 4; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < 8; ++j) dot += grad_in(i, j) * zz(i, j);
        CHECK(std::fabs(dot) < 1e-9);
    }
}

TEST_CASE("sgd step examples") {
    SgdConfig plain{0.5, 0.0, 0.0};
    ParamTensor w("w", Matrix::from_rows({{1, 2}}));
    Matrix velocity(1, 2);
    w.grad = Matrix::from_rows({{2, -2}});
    sgd_step(w, velocity, plain);
    CHECK(w.value(0, 0) == doctest::Approx(0.0));
    CHECK(w.value(0, 1) == doctest::Approx(3.0));

    // Zero gradient, zero velocity: untouched.
    ParamTensor fixed("fixed", Matrix::from_rows({{5}}));
    Matrix v2(1, 1);
    sgd_step(fixed, v2, plain);
    CHECK(fixed.value(0, 0) == 5.0);

    // Hand-iterated momentum: w=1, g=1, lr=0.1, m=0.9 → 0.9 then 0.71.
    SgdConfig momentum{0.1, 0.9, 0.0};
    ParamTensor m("m", Matrix::from_rows({{1}}));
    Matrix v3(1, 1);
    m.grad = Matrix::from_rows({{1}});
    sgd_step(m, v3, momentum);
    CHECK(m.value(0, 0) == doctest::Approx(0.9));
    m.grad = Matrix::from_rows({{1}});
    sgd_step(m, v3, momentum);
    CHECK(m.value(0, 0) == doctest::Approx(0.71));

    ParamTensor bad("layer0.W", Matrix(1, 1, 1.0));
    bad.grad(0, 0) = std::nan("");
    Matrix v4(1, 1);
    CHECK_THROWS_WITH_AS(sgd_step(bad, v4, plain),
                         "sgd_step: non-finite gradient in parameter 'layer0.W'",
                         TrainingAborted);
}

TEST_CASE("sgd with momentum=0 wd=0 is exactly vanilla gradient descent") {
    Rng rng(21);
    SgdConfig cfg{0.05, 0.0, 0.0};
    ParamTensor p("p", Matrix::gaussian(3, 3, rng));
    Matrix reference = p.value;
    Matrix velocity(3, 3);
    for (int step = 0; step < 50; ++step) {
        p.grad = Matrix::gaussian(3, 3, rng);
        Matrix expected = reference;
        expected.add_scaled(p.grad, -cfg.learning_rate);
        sgd_step(p, velocity, cfg);
        CHECK(max_abs_diff(p.value, expected) == 0.0);  // bitwise identical updates
        reference = p.value;
    }
}

TEST_CASE("sgd config validation") {
    CHECK_THROWS_AS((SgdConfig{0.0, 0.0, 0.0}).validate(), ConfigError);
    CHECK_THROWS_AS((SgdConfig{0.1, 1.0, 0.0}).validate(), ConfigError);
    CHECK_THROWS_AS((SgdConfig{0.1, 0.5, -1.0}).validate(), ConfigError);
    SgdConfig ok{0.1, 0.9, 1e-4};
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("finite difference oracle basics") {
    const Matrix x = Matrix::from_rows({{3}});
    const Matrix g = finite_diff_gradient(
        [](const Matrix& m) { return m(0, 0) * m(0, 0); }, x);
    CHECK(g(0, 0) == doctest::Approx(6.0).epsilon(1e-6));

    const Matrix zeros = finite_diff_gradient([](const Matrix&) { return 4.2; }, Matrix(2, 3));
    CHECK(max_abs(zeros) == 0.0);
}

TEST_CASE("param tensor shape pairing") {
    ParamTensor p("x", Matrix(3, 4));
    CHECK(p.grad.rows() == 3);
    CHECK(p.grad.cols() == 4);
    p.grad.fill(2.0);
    p.zero_grad();
    CHECK(max_abs(p.grad) == 0.0);
}
