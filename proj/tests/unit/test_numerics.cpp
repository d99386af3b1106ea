#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "prognet/numerics/ops.hpp"
#include "prognet/numerics/optim.hpp"

using namespace prognet::nn;
using testing::gradcheck;
using testing::project;
using testing::random_tensor;

TEST_CASE("matmul basic cases") {
    Tensor<float> eye(Shape{2, 2}, {1, 0, 0, 1});
    Tensor<float> m(Shape{2, 2}, {1, 2, 3, 4});
    auto r = matmul(eye, m);
    CHECK(std::vector<float>(r.data().begin(), r.data().end()) == std::vector<float>{1, 2, 3, 4});

    auto z = matmul(Tensor<float>(Shape{1, 2}, {1, 0}), Tensor<float>(Shape{2, 1}, {0, 5}));
    CHECK(z.shape() == Shape{1, 1});
    CHECK(z.item() == 0.0f);

    CHECK_THROWS_AS(matmul(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{2, 3})), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
    std::mt19937_64 rng(1);
    std::vector<Tensor<double>> in{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
    auto err = gradcheck(in, [](auto& v) { return sum(matmul(v[0], v[1])); });
    CHECK(err < 1e-4);
}

TEST_CASE("conv2d identity and counting kernels") {
    Tensor<float> x(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto y = conv2d(x, Tensor<float>(Shape{1, 1, 1, 1}, 1.0f), 1, 0);
    CHECK(y.shape() == x.shape());
    for (std::size_t i = 0; i < 9; ++i) CHECK(y.data()[i] == x.data()[i]);

    auto ones = conv2d(Tensor<float>(Shape{1, 1, 4, 4}, 1.0f), Tensor<float>(Shape{1, 1, 3, 3}, 1.0f), 1, 0);
    CHECK(ones.shape() == Shape{1, 1, 2, 2});
    for (float v : ones.data()) CHECK(v == 9.0f);
}

TEST_CASE("conv2d rejects invalid stride and oversize kernel") {
    Tensor<float> x(Shape{1, 1, 4, 4});
    CHECK_THROWS_AS(conv2d(x, Tensor<float>(Shape{1, 1, 3, 3}), 3, 0), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Tensor<float>(Shape{1, 1, 7, 7}), 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Tensor<float>(Shape{1, 2, 3, 3}), 1, 1), ShapeError);
}

TEST_CASE("conv2d forward and backward equal the naive loop oracle exactly") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 12; ++trial) {
        std::uniform_int_distribution<int> pick(1, 4);
        const std::size_t n = pick(rng), c = pick(rng), o = pick(rng);
        const int k = (trial % 3 == 0) ? 1 : 3;
        const int stride = 1 + trial % 2;
        const int pad = (k == 3) ? trial % 2 : 0;
        const std::size_t h = 4 + trial % 4, w = 3 + trial % 5;
        Shape xs{n, c, h, w}, ws{o, c, static_cast<std::size_t>(k), static_cast<std::size_t>(k)};
        auto xv = testing::dyadic_values(shape_numel(xs), rng);
        auto wv = testing::dyadic_values(shape_numel(ws), rng);
        Tensor<double> x(xs, xv, true), wt(ws, wv, true);
        auto out = conv2d(x, wt, stride, pad);
        auto expected = testing::naive_conv2d(xv, xs, wv, ws, stride, pad);
        REQUIRE(out.numel() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) REQUIRE(out.data()[i] == expected[i]);

        auto gout = testing::dyadic_values(out.numel(), rng);
        sum(mul(out, Tensor<double>(out.shape(), gout))).backward();
        std::vector<double> gx, gw;
        testing::naive_conv2d_backward(xv, xs, wv, ws, stride, pad, gout, gx, gw);
        for (std::size_t i = 0; i < gx.size(); ++i) REQUIRE(x.grad()[i] == gx[i]);
        for (std::size_t i = 0; i < gw.size(); ++i) REQUIRE(wt.grad()[i] == gw[i]);
    }
}

TEST_CASE("conv2d gradient matches finite differences") {
    std::mt19937_64 rng(3);
    std::vector<Tensor<double>> in{random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng)};
    CHECK(gradcheck(in, [](auto& v) { return project(conv2d(v[0], v[1], 2, 1)); }) < 1e-4);
}

TEST_CASE("elementwise activations") {
    CHECK(sigmoid(Tensor<float>::scalar(0.0f)).item() == doctest::Approx(0.5));
    auto s = softmax(Tensor<float>(Shape{1, 2}, {0, 0}), 1);
    CHECK(s.data()[0] == doctest::Approx(0.5));
    CHECK(s.data()[1] == doctest::Approx(0.5));
    auto big = sigmoid(Tensor<float>(Shape{2}, {-200.0f, 200.0f}));
    CHECK(big.data()[0] == doctest::Approx(0.0));
    CHECK(big.data()[1] == doctest::Approx(1.0));
}

TEST_CASE("softmax rows are a probability simplex") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = random_tensor({4, 7}, rng, -30, 30, false);
        auto p = softmax(x, 1);
        for (std::size_t r = 0; r < 4; ++r) {
            double total = 0;
            for (std::size_t a = 0; a < 7; ++a) {
                CHECK(p.data()[r * 7 + a] >= 0.0);
                total += p.data()[r * 7 + a];
            }
            CHECK(std::abs(total - 1.0) < 1e-6);
        }
    }
    auto p0 = softmax(random_tensor({3, 4, 2}, rng, -1, 1, false), 0);
    for (std::size_t j = 0; j < 8; ++j) {
        double total = 0;
        for (std::size_t a = 0; a < 3; ++a) total += p0.data()[a * 8 + j];
        CHECK(total == doctest::Approx(1.0));
    }
}

TEST_CASE("dropout is unbiased in expectation") {
    Tensor<double> x(Shape{8}, {0.5, -1.0, 2.0, 3.0, -0.25, 1.0, 4.0, -2.0});
    std::vector<double> acc(8, 0.0);
    const int seeds = 10000;
    for (int s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(s);
        auto y = dropout(x, 0.5, true, rng);
        for (std::size_t i = 0; i < 8; ++i) acc[i] += y.data()[i];
    }
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(acc[i] / seeds - x.data()[i]) <= 0.03 * std::abs(x.data()[i]));

    std::mt19937_64 rng(1);
    auto eval = dropout(x, 0.5, false, rng);
    for (std::size_t i = 0; i < 8; ++i) CHECK(eval.data()[i] == x.data()[i]);
    CHECK_THROWS_AS(dropout(x, 1.0, true, rng), std::invalid_argument);
    CHECK_THROWS_AS(dropout(x, -0.1, true, rng), std::invalid_argument);
}

TEST_CASE("dropout is deterministic given seed") {
    Tensor<float> x(Shape{64}, 1.0f);
    std::mt19937_64 a(42), b(42);
    auto ya = dropout(x, 0.3, true, a);
    auto yb = dropout(x, 0.3, true, b);
    for (std::size_t i = 0; i < 64; ++i) CHECK(ya.data()[i] == yb.data()[i]);
}

TEST_CASE("pooling and concat shapes") {
    Tensor<float> x(Shape{1, 1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
    auto p = maxpool2(x);
    CHECK(p.shape() == Shape{1, 1, 2, 2});
    CHECK(p.data()[0] == 6.0f);
    CHECK(p.data()[3] == 16.0f);
    auto p3 = max_pool2d(x, 3, 2, 1);
    CHECK(p3.shape() == Shape{1, 1, 2, 2});
    CHECK(p3.data()[0] == 6.0f);
    auto g = global_avgpool(x);
    CHECK(g.shape() == Shape{1, 1});
    CHECK(g.item() == doctest::Approx(8.5));
    auto c = concat<float>({Tensor<float>(Shape{2, 1}, 1.0f), Tensor<float>(Shape{2, 3}, 2.0f)}, 1);
    CHECK(c.shape() == Shape{2, 4});
    CHECK(c.data()[0] == 1.0f);
    CHECK(c.data()[1] == 2.0f);
    CHECK_THROWS_AS(concat<float>({Tensor<float>(Shape{2, 1}), Tensor<float>(Shape{3, 1})}, 1), ShapeError);
}

TEST_CASE("cross entropy values") {
    std::vector<int> zero{0};
    CHECK(cross_entropy(Tensor<double>(Shape{1, 2}, {0, 0}), zero).item() == doctest::Approx(std::log(2.0)));
    CHECK(cross_entropy(Tensor<float>(Shape{1, 2}, {1e9f, 0}), zero).item() == doctest::Approx(0.0));
    std::vector<int> bad{2};
    CHECK_THROWS_AS(cross_entropy(Tensor<float>(Shape{1, 2}), bad), std::out_of_range);

    // Batch mean equals the mean of independently computed rows.
    std::mt19937_64 rng(11);
    auto logits = random_tensor({3, 5}, rng, -3, 3, false);
    std::vector<int> labels{4, 0, 2};
    double expected = 0;
    for (std::size_t r = 0; r < 3; ++r) {
        double mx = -1e300;
        for (std::size_t a = 0; a < 5; ++a) mx = std::max(mx, logits.data()[r * 5 + a]);
        double z = 0;
        for (std::size_t a = 0; a < 5; ++a) z += std::exp(logits.data()[r * 5 + a] - mx);
        expected += -(logits.data()[r * 5 + labels[r]] - mx - std::log(z));
    }
    CHECK(cross_entropy(logits, labels).item() == doctest::Approx(expected / 3).epsilon(1e-12));
}

TEST_CASE("non-finite results are surfaced") {
    Tensor<float> x(Shape{1}, {1e30f});
    CHECK_THROWS_AS(mul(x, x), NonFiniteError);
    CHECK_THROWS_AS(Tensor<float>(Shape{1}, std::vector<float>{std::nanf("")}), NonFiniteError);
}

TEST_CASE("sgd update rule") {
    SUBCASE("vanilla step") {
        Parameter<double> p("w", {2});
        p.tensor.data()[0] = 1.0;
        p.tensor.data()[1] = -2.0;
        auto g = p.tensor.mutable_grad();
        g[0] = 0.25;
        g[1] = -0.5;
        std::vector<Parameter<double>*> ps{&p};
        sgd_step<double>(ps, {1.0, 0.0, 0.0});
        CHECK(p.tensor.data()[0] == 0.75);
        CHECK(p.tensor.data()[1] == -1.5);
        CHECK_FALSE(p.tensor.has_grad());
    }
    SUBCASE("momentum recurrence") {
        Parameter<double> p("w", {1});
        std::vector<Parameter<double>*> ps{&p};
        for (int s = 0; s < 2; ++s) {
            p.tensor.mutable_grad()[0] = 1.0;
            sgd_step<double>(ps, {1.0, 0.9, 0.0});
        }
        CHECK(p.tensor.data()[0] == doctest::Approx(-2.9));
    }
    SUBCASE("decay only") {
        Parameter<double> p("w", {1});
        p.tensor.data()[0] = 1.0;
        p.tensor.mutable_grad()[0] = 0.0;
        std::vector<Parameter<double>*> ps{&p};
        sgd_step<double>(ps, {1.0, 0.0, 0.1});
        CHECK(p.tensor.data()[0] == doctest::Approx(0.9));
    }
    SUBCASE("missing gradient") {
        Parameter<double> p("w", {1});
        std::vector<Parameter<double>*> ps{&p};
        CHECK_THROWS_AS(sgd_step<double>(ps, {1.0, 0.0, 0.0}), MissingGradientError);
    }
}

TEST_CASE("tape records reachable ops in topological order") {
    Tensor<double> a(Shape{2}, {1, 2}, true);
    Tensor<double> b(Shape{2}, {3, 4}, false);
    auto loss = sum(mul(add(a, b), a));
    Tape<double> tape(loss);
    // b does not require grad and is not recorded; a appears once.
    CHECK(tape.size() == 4);
    CHECK(tape.ops().front() == a.node().get());
    CHECK(tape.ops().back() == loss.node().get());
    tape.replay();
    CHECK(a.grad()[0] == doctest::Approx(2 * 1 + 3));
    CHECK(a.grad()[1] == doctest::Approx(2 * 2 + 4));
}

TEST_CASE("no-grad mode builds no graph") {
    Tensor<double> a(Shape{2}, {1, 2}, true);
    NoGradGuard guard;
    auto y = mul(a, a);
    CHECK_FALSE(y.requires_grad());
}
