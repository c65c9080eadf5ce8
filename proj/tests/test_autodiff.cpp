#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "moe_absa/graph.hpp"
#include "moe_absa/optimizer.hpp"
#include "moe_absa/rng.hpp"

using namespace moeabsa;

TEST_CASE("tensor basics") {
    Tensor t = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(t.at(0, 0) == 1.0);
    CHECK(t.at(1, 2) == 6.0);
    CHECK(t.shape_str() == "[2x3]");
    CHECK(t.all_finite());
    CHECK_THROWS_AS(Tensor::from(2, 2, {1.0}), std::invalid_argument);

    t.set_requires_grad();
    CHECK(t.grad.size() == 6);
    t.grad[3] = 7.0;
    t.zero_grad();
    CHECK(t.grad[3] == 0.0);
}

TEST_CASE("matmul forward against hand computation") {
    Graph g;
    auto a = g.input(Tensor::from(2, 2, {1, 2, 3, 4}));
    auto b = g.input(Tensor::from(2, 2, {5, 6, 7, 8}));
    auto c = g.matmul(a, b);
    CHECK(c->at(0, 0) == 19.0);
    CHECK(c->at(0, 1) == 22.0);
    CHECK(c->at(1, 0) == 43.0);
    CHECK(c->at(1, 1) == 50.0);

    auto bad = g.input(Tensor(3, 3));
    CHECK_THROWS_AS(g.matmul(a, bad), std::invalid_argument);
}

TEST_CASE("gradient of sum(A*B) w.r.t. A is row-broadcast of column sums of B") {
    Rng rng(11);
    Tensor a = Tensor::randn(3, 4, rng, 1.0);
    Tensor b = Tensor::randn(4, 5, rng, 1.0);
    a.set_requires_grad();
    Graph g;
    auto loss = g.sum_all(g.matmul(g.param(a), g.input(b)));
    g.backward(loss);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) {
            double col_sum = 0.0;
            for (int k = 0; k < 5; ++k) col_sum += b.at(j, k);
            CHECK(a.at_grad(i, j) == doctest::Approx(col_sum).epsilon(1e-12));
        }
}

TEST_CASE("elementwise ops forward values") {
    Graph g;
    auto x = g.input(Tensor::from(1, 4, {-1.0, 0.0, 2.5, 3.0}));
    auto y = g.input(Tensor::from(1, 4, {2.0, 1.0, 0.5, -3.0}));

    auto r = g.relu(x);
    CHECK(r->v == std::vector<double>{0.0, 0.0, 2.5, 3.0});

    auto s = g.add(x, y);
    CHECK(s->v == std::vector<double>{1.0, 1.0, 3.0, 0.0});
    auto d = g.sub(x, y);
    CHECK(d->v == std::vector<double>{-3.0, -1.0, 2.0, 6.0});
    auto m = g.mul(x, y);
    CHECK(m->v == std::vector<double>{-2.0, 0.0, 1.25, -9.0});
    auto q = g.div(x, y);
    CHECK(q->at(0, 0) == doctest::Approx(-0.5));
    CHECK(q->at(0, 3) == doctest::Approx(-1.0));

    auto sg = g.sigmoid(g.input(Tensor::from(1, 1, {0.0})));
    CHECK(sg->v[0] == doctest::Approx(0.5));

    auto sc = g.scale(x, 2.0);
    CHECK(sc->v == std::vector<double>{-2.0, 0.0, 5.0, 6.0});
    auto as = g.add_scalar(x, 1.0);
    CHECK(as->v == std::vector<double>{0.0, 1.0, 3.5, 4.0});
}

TEST_CASE("softmax rows: normalization, invariance, known values") {
    Graph g;
    auto x = g.input(Tensor::from(2, 3, {0, 0, 0, 1, 2, 3}));
    auto p = g.softmax_rows(x);
    for (int j = 0; j < 3; ++j) CHECK(p->at(0, j) == doctest::Approx(1.0 / 3));
    double row1 = p->at(1, 0) + p->at(1, 1) + p->at(1, 2);
    CHECK(row1 == doctest::Approx(1.0).epsilon(1e-12));
    // shift invariance
    auto y = g.input(Tensor::from(1, 3, {101, 102, 103}));
    auto py = g.softmax_rows(y);
    for (int j = 0; j < 3; ++j)
        CHECK(py->at(0, j) == doctest::Approx(p->at(1, j)).epsilon(1e-12));
    // extreme logits stay finite
    auto big = g.softmax_rows(g.input(Tensor::from(1, 2, {1000.0, -1000.0})));
    CHECK(big->at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("log_clamped floors its argument") {
    Graph g;
    auto x = g.input(Tensor::from(1, 2, {0.0, 1.0}));
    auto l = g.log_clamped(x);
    CHECK(l->at(0, 0) == doctest::Approx(std::log(1e-12)));
    CHECK(l->at(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("add_bias broadcasts and accumulates bias gradient") {
    Tensor b = Tensor::from(1, 2, {10, 20});
    b.set_requires_grad();
    Graph g;
    auto x = g.input(Tensor::from(3, 2, {1, 2, 3, 4, 5, 6}));
    auto y = g.add_bias(x, g.param(b));
    CHECK(y->at(2, 1) == 26.0);
    g.backward(g.sum_all(y));
    CHECK(b.at_grad(0, 0) == 3.0);  // one per row
    CHECK(b.at_grad(0, 1) == 3.0);
}

TEST_CASE("col_mean and rows_gather") {
    Tensor x = Tensor::from(2, 2, {1, 2, 3, 4});
    x.set_requires_grad();
    Graph g;
    auto xr = g.param(x);
    auto cm = g.col_mean(xr);
    CHECK(cm->rows == 1);
    CHECK(cm->at(0, 0) == 2.0);
    CHECK(cm->at(0, 1) == 3.0);

    auto gathered = g.rows_gather(xr, {1, 1, 0});
    CHECK(gathered->rows == 3);
    CHECK(gathered->at(0, 0) == 3.0);
    CHECK(gathered->at(2, 1) == 2.0);
    g.backward(g.sum_all(gathered));
    CHECK(x.at_grad(0, 0) == 1.0);  // appears once
    CHECK(x.at_grad(1, 0) == 2.0);  // appears twice
    CHECK_THROWS_AS(g.rows_gather(xr, {5}), std::invalid_argument);
}

TEST_CASE("relu gradient: loss=sum(relu(x)) at [-1,2] gives [0,1]") {
    Tensor x = Tensor::from(1, 2, {-1.0, 2.0});
    x.set_requires_grad();
    Graph g;
    g.backward(g.sum_all(g.relu(g.param(x))));
    CHECK(x.grad == std::vector<double>{0.0, 1.0});
}

TEST_CASE("bce_with_logits forward matches the stable closed form") {
    Graph g;
    Tensor t = Tensor::from(2, 2, {1, 0, 0, 1});
    auto z = g.input(Tensor::from(2, 2, {0.3, -0.7, 2.0, -1.5}));
    auto loss = g.bce_with_logits(z, t);
    double want = 0.0;
    const double zs[] = {0.3, -0.7, 2.0, -1.5}, ys[] = {1, 0, 0, 1};
    for (int i = 0; i < 4; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-zs[i]));
        want -= ys[i] * std::log(p) + (1 - ys[i]) * std::log(1 - p);
    }
    CHECK(loss->v[0] == doctest::Approx(want / 2).epsilon(1e-12));
}

TEST_CASE("finite difference: linear model") {
    Rng rng(3);
    Tensor w = Tensor::randn(4, 3, rng, 0.5);
    Tensor b = Tensor::randn(1, 3, rng, 0.5);
    Tensor x = Tensor::randn(5, 4, rng, 1.0);
    auto rep = grad_check(
        [&](Graph& g) {
            auto y = g.add_bias(g.matmul(g.input(x), g.param(w)), g.param(b));
            return g.sum_all(g.mul(y, y));
        },
        {&w, &b});
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("finite difference: random 3-layer network under 1e-4") {
    Rng rng(5);
    Tensor w1 = Tensor::randn(4, 6, rng, 0.5), b1 = Tensor::randn(1, 6, rng, 0.1);
    Tensor w2 = Tensor::randn(6, 5, rng, 0.5), b2 = Tensor::randn(1, 5, rng, 0.1);
    Tensor w3 = Tensor::randn(5, 3, rng, 0.5), b3 = Tensor::randn(1, 3, rng, 0.1);
    Tensor x = Tensor::randn(7, 4, rng, 1.0);
    Tensor y(7, 3);
    for (int i = 0; i < 7; ++i) y.at(i, static_cast<int>(rng.index(3))) = 1.0;
    auto rep = grad_check(
        [&](Graph& g) {
            auto h1 = g.relu(g.add_bias(g.matmul(g.input(x), g.param(w1)), g.param(b1)));
            auto h2 = g.sigmoid(g.add_bias(g.matmul(h1, g.param(w2)), g.param(b2)));
            auto p = g.softmax_rows(g.add_bias(g.matmul(h2, g.param(w3)), g.param(b3)));
            auto ll = g.mul(g.input(y), g.log_clamped(p));
            return g.scale(g.sum_all(ll), -1.0 / 7);
        },
        {&w1, &b1, &w2, &b2, &w3, &b3});
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("grad_check rejects bad epsilon") {
    Tensor w(1, 1, 0.5);
    auto build = [&](Graph& g) { return g.sum_all(g.param(w)); };
    CHECK_THROWS_AS(grad_check(build, {&w}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(grad_check(build, {&w}, 0.1), std::invalid_argument);
}

TEST_CASE("backward requires a scalar loss and accumulates param grads") {
    Tensor w = Tensor::from(1, 2, {1.0, 2.0});
    w.set_requires_grad();
    Graph g;
    auto wr = g.param(w);
    CHECK_THROWS_AS(g.backward(wr), std::invalid_argument);
    auto loss = g.sum_all(wr);
    g.backward(loss);
    g.backward(loss);
    CHECK(w.grad == std::vector<double>{2.0, 2.0});  // two passes accumulate
}

TEST_CASE("adam: determinism and descent on a quadratic") {
    auto run = [](int steps) {
        Tensor w = Tensor::from(1, 2, {5.0, -3.0});
        Adam opt({&w}, {0.1, 0.9, 0.999, 1e-8});
        for (int s = 0; s < steps; ++s) {
            Graph g;
            auto wr = g.param(w);
            g.backward(g.sum_all(g.mul(wr, wr)));
            opt.step();
            opt.zero_grad();
        }
        return w;
    };
    Tensor a = run(200), b = run(200);
    CHECK(a.v == b.v);  // bit-identical
    CHECK(std::abs(a.at(0, 0)) < 5.0);
    CHECK(std::abs(a.at(0, 1)) < 3.0);
}

TEST_CASE("adam: first step moves by about lr in the gradient direction") {
    Tensor w = Tensor::from(1, 1, {1.0});
    Adam opt({&w}, {0.01, 0.9, 0.999, 1e-8});
    Graph g;
    auto wr = g.param(w);
    g.backward(g.sum_all(g.mul(wr, wr)));  // grad = 2
    opt.step();
    CHECK(w.v[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(opt.step_count() == 1);
}
