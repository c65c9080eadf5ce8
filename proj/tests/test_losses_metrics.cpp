#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "moe_absa/losses.hpp"
#include "moe_absa/metrics.hpp"
#include "moe_absa/rng.hpp"

using namespace moeabsa;

namespace {

UtilizationVector uvec(std::vector<double> u) {
    UtilizationVector v;
    v.u = std::move(u);
    return v;
}

Tensor random_probs(int rows, int cols, Rng& rng) {
    Tensor t(rows, cols);
    for (int i = 0; i < rows; ++i) {
        double z = 0;
        for (int j = 0; j < cols; ++j) {
            t.at(i, j) = std::exp(rng.normal());
            z += t.at(i, j);
        }
        for (int j = 0; j < cols; ++j) t.at(i, j) /= z;
    }
    return t;
}

}  // namespace

TEST_CASE("cce: uniform 3-way prediction costs ln 3") {
    Tensor probs(4, 3, 1.0 / 3.0);
    Tensor onehot(4, 3);
    for (int i = 0; i < 4; ++i) onehot.at(i, i % 3) = 1.0;
    CHECK(std::abs(cce(probs, onehot) - std::log(3.0)) < 1e-9);

    // perfect prediction costs zero; zero-probability truth hits the clamp
    Tensor perfect = onehot;
    CHECK(cce(perfect, onehot) == doctest::Approx(0.0));
    Tensor wrong(1, 2);
    wrong.at(0, 0) = 1.0;
    Tensor y(1, 2);
    y.at(0, 1) = 1.0;
    CHECK(cce(wrong, y) == doctest::Approx(-std::log(1e-12)));

    CHECK_THROWS_AS(cce(Tensor(2, 3), Tensor(2, 2)), std::invalid_argument);
    CHECK_THROWS_AS(cce(Tensor(0, 3), Tensor(0, 3)), std::invalid_argument);
}

TEST_CASE("aux importance: skewed utilization reference value") {
    auto u = uvec({0.5, 0.1, 0.1, 0.1, 0.1, 0.1});
    CHECK(std::abs(aux_importance(u, 0.011822) - 0.00945760) < 1e-9);
    CHECK(aux_importance(uvec({0.25, 0.25, 0.25, 0.25}), 1.0) == doctest::Approx(0.0));
    // scaling u leaves the ratio unchanged
    CHECK(aux_importance(uvec({5, 1, 1, 1, 1, 1}), 1.0) ==
          doctest::Approx(aux_importance(u, 1.0)).epsilon(1e-12));

    CHECK_THROWS_AS(aux_importance(uvec({0, 0, 0}), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(aux_importance(uvec({}), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(aux_importance(uvec({0.5, -0.1}), 1.0), std::invalid_argument);
}

TEST_CASE("mse against uniform: one-hot utilization of 6 experts") {
    auto onehot = uvec({1, 0, 0, 0, 0, 0});
    CHECK(std::abs(mse_uniform(onehot, 1.0) - 5.0 / 36.0) < 1e-12);
    CHECK(mse_uniform(uvec(std::vector<double>(6, 1.0 / 6.0)), 3.0) == doctest::Approx(0.0));
    CHECK(mse_uniform(onehot, 0.5) == doctest::Approx(2.5 / 36.0).epsilon(1e-12));
    CHECK_THROWS_AS(mse_uniform(uvec({}), 1.0), std::invalid_argument);
}

TEST_CASE("cov2 closed forms") {
    CHECK(std::abs(cov2(std::vector<double>(6, 1.0 / 6.0))) < 1e-12);
    CHECK(std::abs(cov2({1, 0, 0, 0, 0, 0}) - 5.0) < 1e-12);
    CHECK(std::abs(cov2({0.5, 0.1, 0.1, 0.1, 0.1, 0.1}) - 0.8) < 1e-12);
    CHECK(cov2({2, 2, 2}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(cov2({-0.1, 0.2}), std::invalid_argument);
    CHECK_THROWS_AS(cov2({0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("total loss respects the enable toggles") {
    LossWeights w;
    CHECK(total_loss(1.0, 0.25, 0.5, w) == doctest::Approx(1.75));
    w.enable_aux = false;
    CHECK(total_loss(1.0, 0.25, 0.5, w) == doctest::Approx(1.5));
    w.enable_mse = false;
    CHECK(total_loss(1.0, 0.25, 0.5, w) == doctest::Approx(1.0));
    w.enable_aux = true;
    CHECK(total_loss(1.0, 0.25, 0.5, w) == doctest::Approx(1.25));
}

TEST_CASE("graph losses match the value-level formulas") {
    Rng rng(21);
    Tensor probs = random_probs(5, 3, rng);
    Tensor onehot(5, 3);
    for (int i = 0; i < 5; ++i) onehot.at(i, static_cast<int>(rng.index(3))) = 1.0;
    Tensor u(1, 6);
    for (auto& x : u.v) x = 0.05 + rng.uniform();

    Graph g;
    auto c = cce_node(g, g.input(probs), onehot);
    CHECK(c->v[0] == doctest::Approx(cce(probs, onehot)).epsilon(1e-12));
    auto a = aux_importance_node(g, g.input(u), 0.011822);
    CHECK(a->v[0] == doctest::Approx(aux_importance(uvec(u.v), 0.011822)).epsilon(1e-12));
    auto m = mse_uniform_node(g, g.input(u), 0.011822);
    CHECK(m->v[0] == doctest::Approx(mse_uniform(uvec(u.v), 0.011822)).epsilon(1e-12));
    CHECK_THROWS_AS(cce_node(g, g.input(probs), Tensor(5, 2)), std::invalid_argument);
}

TEST_CASE("graph losses pass finite differences") {
    Rng rng(22);
    Tensor probs = random_probs(4, 3, rng);
    Tensor onehot(4, 3);
    for (int i = 0; i < 4; ++i) onehot.at(i, static_cast<int>(rng.index(3))) = 1.0;
    Tensor u(1, 6);
    for (auto& x : u.v) x = 0.05 + rng.uniform();

    auto rep = grad_check([&](Graph& g) { return cce_node(g, g.param(probs), onehot); },
                          {&probs});
    CHECK(rep.pass);
    rep = grad_check([&](Graph& g) { return aux_importance_node(g, g.param(u), 0.7); }, {&u});
    CHECK(rep.pass);
    rep = grad_check([&](Graph& g) { return mse_uniform_node(g, g.param(u), 0.7); }, {&u});
    CHECK(rep.pass);
}

TEST_CASE("classification report: hand case with weighted f1 of 2/3") {
    auto rep = classification_report({0, 1, 1}, {0, 0, 1}, 2);
    CHECK(rep.per_class[0].precision == doctest::Approx(1.0));
    CHECK(rep.per_class[0].recall == doctest::Approx(0.5));
    CHECK(rep.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(rep.per_class[0].support == 2);
    CHECK(rep.per_class[1].precision == doctest::Approx(0.5));
    CHECK(rep.per_class[1].recall == doctest::Approx(1.0));
    CHECK(rep.per_class[1].support == 1);
    CHECK(rep.weighted.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(rep.micro.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));  // accuracy
    CHECK(rep.confusion == std::vector<std::vector<long>>{{1, 1}, {0, 1}});
}

TEST_CASE("classification report: zero-division convention and errors") {
    // class 2 never appears and is never predicted -> all zeros
    auto rep = classification_report({0, 1}, {0, 1}, 3);
    CHECK(rep.per_class[2].precision == 0.0);
    CHECK(rep.per_class[2].recall == 0.0);
    CHECK(rep.per_class[2].f1 == 0.0);
    CHECK(rep.per_class[2].support == 0);
    CHECK(rep.weighted.f1 == doctest::Approx(1.0));  // zero-support class has no weight

    CHECK_THROWS_AS(classification_report({0}, {0, 1}, 2), std::invalid_argument);
    CHECK_THROWS_AS(classification_report({}, {}, 2), std::invalid_argument);
    CHECK_THROWS_AS(classification_report({2}, {0}, 2), std::invalid_argument);
    CHECK_THROWS_AS(classification_report({0}, {-1}, 2), std::invalid_argument);
}

TEST_CASE("multilabel report pools counts for micro metrics") {
    std::vector<std::vector<bool>> labels = {{true, false, true},
                                             {false, true, false},
                                             {true, true, false}};
    std::vector<std::vector<bool>> preds = {{true, true, false},
                                            {false, true, false},
                                            {false, true, true}};
    auto rep = multilabel_report(preds, labels, 3);
    // class 0: tp=1 fp=0 fn=1; class 1: tp=2 fp=1 fn=0; class 2: tp=0 fp=1 fn=1
    CHECK(rep.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(rep.per_class[1].precision == doctest::Approx(2.0 / 3.0));
    CHECK(rep.per_class[1].recall == doctest::Approx(1.0));
    CHECK(rep.per_class[2].f1 == 0.0);
    CHECK(rep.per_class[0].support == 2);
    // pooled: tp=3 fp=2 fn=2 -> P = R = 3/5
    CHECK(rep.micro.precision == doctest::Approx(0.6));
    CHECK(rep.micro.recall == doctest::Approx(0.6));
    CHECK(rep.micro.f1 == doctest::Approx(0.6));
    CHECK_THROWS_AS(multilabel_report({}, {}, 3), std::invalid_argument);
    CHECK_THROWS_AS(multilabel_report(preds, {{true, false, true}}, 3),
                    std::invalid_argument);
}

TEST_CASE("pr curve: hand case") {
    auto curve = pr_curve({0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0});
    REQUIRE(curve.size() == 4);
    CHECK(curve[0].threshold == doctest::Approx(0.9));
    CHECK(curve[0].precision == doctest::Approx(1.0));
    CHECK(curve[0].recall == doctest::Approx(0.5));
    CHECK(curve[1].precision == doctest::Approx(0.5));
    CHECK(curve[2].precision == doctest::Approx(2.0 / 3.0));
    CHECK(curve[2].recall == doctest::Approx(1.0));
    CHECK(curve[3].recall == doctest::Approx(1.0));  // lowest threshold admits all

    CHECK_THROWS_AS(pr_curve({0.5}, {0}), std::invalid_argument);
    CHECK_THROWS_AS(pr_curve({0.5, 0.4}, {1}), std::invalid_argument);
}

TEST_CASE("pr curve matches an exhaustive sweep on random instances") {
    Rng rng(33);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 20;
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool any_pos = false;
        for (int i = 0; i < n; ++i) {
            // coarse grid forces duplicate scores
            scores[i] = static_cast<double>(rng.index(8)) / 8.0;
            labels[i] = rng.uniform() < 0.4 ? 1 : 0;
            any_pos |= labels[i] == 1;
        }
        if (!any_pos) labels[0] = 1;
        auto curve = pr_curve(scores, labels);

        std::set<double> distinct(scores.begin(), scores.end());
        REQUIRE(curve.size() == distinct.size());
        long positives = 0;
        for (int y : labels) positives += y;
        double prev_t = 1e18;
        for (const auto& pt : curve) {
            REQUIRE(pt.threshold < prev_t);  // strictly descending
            prev_t = pt.threshold;
            long tp = 0, fp = 0;
            for (int i = 0; i < n; ++i) {
                if (scores[i] >= pt.threshold) {
                    if (labels[i]) ++tp;
                    else ++fp;
                }
            }
            const double p = (tp + fp) ? double(tp) / double(tp + fp) : 0.0;
            REQUIRE(pt.precision == doctest::Approx(p).epsilon(1e-12));
            REQUIRE(pt.recall == doctest::Approx(double(tp) / positives).epsilon(1e-12));
        }
        REQUIRE(curve.back().recall == doctest::Approx(1.0));
    }
}
