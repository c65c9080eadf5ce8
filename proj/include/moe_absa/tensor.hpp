#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "moe_absa/rng.hpp"

namespace moeabsa {

// Dense row-major 2-D tensor. Gradients live alongside the values; the
// Graph tape accumulates into `grad` during the backward pass.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;
    bool requires_grad = false;
    std::vector<double> grad;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

    static Tensor from(int r, int c, std::initializer_list<double> vals) {
        Tensor t(r, c);
        if (vals.size() != t.v.size())
            throw std::invalid_argument("Tensor::from: value count does not match shape");
        std::size_t i = 0;
        for (double x : vals) t.v[i++] = x;
        return t;
    }

    static Tensor randn(int r, int c, Rng& rng, double stddev = 0.02) {
        Tensor t(r, c);
        for (auto& x : t.v) x = rng.normal(0.0, stddev);
        return t;
    }

    std::size_t size() const { return v.size(); }

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at_grad(int r, int c) const { return grad[static_cast<std::size_t>(r) * cols + c]; }

    void set_requires_grad(bool on = true) {
        requires_grad = on;
        if (on) grad.assign(v.size(), 0.0);
    }

    void zero_grad() {
        if (!grad.empty()) grad.assign(v.size(), 0.0);
    }

    std::string shape_str() const {
        return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

}  // namespace moeabsa
