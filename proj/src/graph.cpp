#include "moe_absa/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moeabsa {

namespace {

void check_same_shape(const Tensor* a, const Tensor* b, const char* op) {
    if (a->rows != b->rows || a->cols != b->cols)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->shape_str() +
                                    " vs " + b->shape_str());
}

void check_finite(const Tensor* t, const char* op) {
    if (!t->all_finite())
        throw std::runtime_error(std::string(op) + ": non-finite value in output " +
                                 t->shape_str());
}

}  // namespace

Graph::Ref Graph::push(Tensor value, std::function<void()> back) {
    Node n;
    n.owned = std::make_unique<Tensor>(std::move(value));
    n.owned->grad.assign(n.owned->v.size(), 0.0);
    n.out = n.owned.get();
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

Graph::Ref Graph::input(Tensor t) {
    return push(std::move(t), nullptr);
}

Graph::Ref Graph::param(Tensor& t) {
    if (!t.requires_grad) t.set_requires_grad(true);
    Node n;
    n.out = &t;
    nodes_.push_back(std::move(n));
    return &t;
}

Graph::Ref Graph::matmul(Ref a, Ref b) {
    if (a->cols != b->rows)
        throw std::invalid_argument("matmul: inner dimensions disagree " + a->shape_str() +
                                    " vs " + b->shape_str());
    const int m = a->rows, k = a->cols, n = b->cols;
    Tensor out(m, n);
    for (int i = 0; i < m; ++i) {
        const double* arow = &a->v[static_cast<std::size_t>(i) * k];
        double* orow = &out.v[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &b->v[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    check_finite(&out, "matmul");
    return push(std::move(out), [this, a, b, m, k, n, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        // dA = dO * B^T
        for (int i = 0; i < m; ++i) {
            const double* grow = &o->grad[static_cast<std::size_t>(i) * n];
            double* garow = &a->grad[static_cast<std::size_t>(i) * k];
            for (int p = 0; p < k; ++p) {
                const double* brow = &b->v[static_cast<std::size_t>(p) * n];
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                garow[p] += acc;
            }
        }
        // dB = A^T * dO
        for (int p = 0; p < k; ++p) {
            double* gbrow = &b->grad[static_cast<std::size_t>(p) * n];
            for (int i = 0; i < m; ++i) {
                const double av = a->v[static_cast<std::size_t>(i) * k + p];
                if (av == 0.0) continue;
                const double* grow = &o->grad[static_cast<std::size_t>(i) * n];
                for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
        }
    });
}

Graph::Ref Graph::add(Ref a, Ref b) {
    check_same_shape(a, b, "add");
    Tensor out(a->rows, a->cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->v[i] + b->v[i];
    check_finite(&out, "add");
    return push(std::move(out), [this, a, b, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < o->size(); ++i) {
            a->grad[i] += o->grad[i];
            b->grad[i] += o->grad[i];
        }
    });
}

Graph::Ref Graph::sub(Ref a, Ref b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->rows, a->cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->v[i] - b->v[i];
    check_finite(&out, "sub");
    return push(std::move(out), [this, a, b, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < o->size(); ++i) {
            a->grad[i] += o->grad[i];
            b->grad[i] -= o->grad[i];
        }
    });
}

Graph::Ref Graph::mul(Ref a, Ref b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->rows, a->cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->v[i] * b->v[i];
    check_finite(&out, "mul");
    return push(std::move(out), [this, a, b, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < o->size(); ++i) {
            a->grad[i] += o->grad[i] * b->v[i];
            b->grad[i] += o->grad[i] * a->v[i];
        }
    });
}

Graph::Ref Graph::div(Ref a, Ref b) {
    check_same_shape(a, b, "div");
    Tensor out(a->rows, a->cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a->v[i] / b->v[i];
    check_finite(&out, "div");
    return push(std::move(out), [this, a, b, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < o->size(); ++i) {
            a->grad[i] += o->grad[i] / b->v[i];
            b->grad[i] -= o->grad[i] * a->v[i] / (b->v[i] * b->v[i]);
        }
    });
}

Graph::Ref Graph::relu(Ref x) {
    Tensor out(x->rows, x->cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = x->v[i] > 0.0 ? x->v[i] : 0.0;
    return push(std::move(out), [this, x, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        // subgradient at 0 is 0
        for (std::size_t i = 0; i < o->size(); ++i)
            if (x->v[i] > 0.0) x->grad[i] += o->grad[i];
    });
}

Graph::Ref Graph::sigmoid(Ref x) {
    Tensor out(x->rows, x->cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = 1.0 / (1.0 + std::exp(-x->v[i]));
    return push(std::move(out), [this, x, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < o->size(); ++i)
            x->grad[i] += o->grad[i] * o->v[i] * (1.0 - o->v[i]);
    });
}

Graph::Ref Graph::add_bias(Ref x, Ref bias) {
    if (bias->rows != 1 || bias->cols != x->cols)
        throw std::invalid_argument("add_bias: bias " + bias->shape_str() +
                                    " incompatible with " + x->shape_str());
    Tensor out(x->rows, x->cols);
    for (int i = 0; i < x->rows; ++i)
        for (int j = 0; j < x->cols; ++j) out.at(i, j) = x->at(i, j) + bias->v[j];
    check_finite(&out, "add_bias");
    return push(std::move(out), [this, x, bias, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (int i = 0; i < x->rows; ++i)
            for (int j = 0; j < x->cols; ++j) {
                x->grad[static_cast<std::size_t>(i) * x->cols + j] += o->at_grad(i, j);
                bias->grad[j] += o->at_grad(i, j);
            }
    });
}

Graph::Ref Graph::softmax_rows(Ref x) {
    if (x->cols < 1) throw std::invalid_argument("softmax_rows: empty rows");
    Tensor out(x->rows, x->cols);
    for (int i = 0; i < x->rows; ++i) {
        double mx = x->at(i, 0);
        for (int j = 1; j < x->cols; ++j) mx = std::max(mx, x->at(i, j));
        double sum = 0.0;
        for (int j = 0; j < x->cols; ++j) {
            out.at(i, j) = std::exp(x->at(i, j) - mx);
            sum += out.at(i, j);
        }
        for (int j = 0; j < x->cols; ++j) out.at(i, j) /= sum;
    }
    check_finite(&out, "softmax_rows");
    return push(std::move(out), [this, x, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (int i = 0; i < x->rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < x->cols; ++j) dot += o->at_grad(i, j) * o->at(i, j);
            for (int j = 0; j < x->cols; ++j)
                x->grad[static_cast<std::size_t>(i) * x->cols + j] +=
                    o->at(i, j) * (o->at_grad(i, j) - dot);
        }
    });
}

Graph::Ref Graph::scale(Ref x, double k) {
    Tensor out(x->rows, x->cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = x->v[i] * k;
    check_finite(&out, "scale");
    return push(std::move(out), [this, x, k, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < o->size(); ++i) x->grad[i] += o->grad[i] * k;
    });
}

Graph::Ref Graph::add_scalar(Ref x, double k) {
    Tensor out(x->rows, x->cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = x->v[i] + k;
    check_finite(&out, "add_scalar");
    return push(std::move(out), [this, x, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < o->size(); ++i) x->grad[i] += o->grad[i];
    });
}

Graph::Ref Graph::log_clamped(Ref x, double eps) {
    Tensor out(x->rows, x->cols);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.v[i] = std::log(std::clamp(x->v[i], eps, 1.0));
    return push(std::move(out), [this, x, eps, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < o->size(); ++i)
            if (x->v[i] > eps && x->v[i] < 1.0) x->grad[i] += o->grad[i] / x->v[i];
    });
}

Graph::Ref Graph::sum_all(Ref x) {
    Tensor out(1, 1);
    for (double xv : x->v) out.v[0] += xv;
    check_finite(&out, "sum_all");
    return push(std::move(out), [this, x, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += o->grad[0];
    });
}

Graph::Ref Graph::col_mean(Ref x) {
    if (x->rows < 1) throw std::invalid_argument("col_mean: empty input");
    Tensor out(1, x->cols);
    for (int i = 0; i < x->rows; ++i)
        for (int j = 0; j < x->cols; ++j) out.v[j] += x->at(i, j);
    for (int j = 0; j < x->cols; ++j) out.v[j] /= x->rows;
    check_finite(&out, "col_mean");
    return push(std::move(out), [this, x, id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        const double inv = 1.0 / x->rows;
        for (int i = 0; i < x->rows; ++i)
            for (int j = 0; j < x->cols; ++j)
                x->grad[static_cast<std::size_t>(i) * x->cols + j] += o->grad[j] * inv;
    });
}

Graph::Ref Graph::rows_gather(Ref x, std::vector<int> idx) {
    for (int r : idx)
        if (r < 0 || r >= x->rows)
            throw std::invalid_argument("rows_gather: row index " + std::to_string(r) +
                                        " out of range for " + x->shape_str());
    Tensor out(static_cast<int>(idx.size()), x->cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < x->cols; ++j) out.at(static_cast<int>(i), j) = x->at(idx[i], j);
    return push(std::move(out), [this, x, idx = std::move(idx), id = nodes_.size()]() {
        Tensor* o = nodes_[id].out;
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < x->cols; ++j)
                x->grad[static_cast<std::size_t>(idx[i]) * x->cols + j] +=
                    o->at_grad(static_cast<int>(i), j);
    });
}

Graph::Ref Graph::bce_with_logits(Ref logits, Tensor targets) {
    check_same_shape(logits, &targets, "bce_with_logits");
    const int n = logits->rows;
    Tensor out(1, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < logits->size(); ++i) {
        const double z = logits->v[i], y = targets.v[i];
        // max(z,0) - z*y + log(1 + exp(-|z|))
        acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    out.v[0] = acc / n;
    check_finite(&out, "bce_with_logits");
    return push(std::move(out),
                [this, logits, targets = std::move(targets), n, id = nodes_.size()]() {
                    Tensor* o = nodes_[id].out;
                    const double g = o->grad[0] / n;
                    for (std::size_t i = 0; i < logits->size(); ++i) {
                        const double s = 1.0 / (1.0 + std::exp(-logits->v[i]));
                        logits->grad[i] += g * (s - targets.v[i]);
                    }
                });
}

Graph::Ref Graph::custom(Tensor out, std::function<void(const Tensor&)> back) {
    check_finite(&out, "custom");
    const std::size_t id = nodes_.size();
    return push(std::move(out),
                [this, id, back = std::move(back)]() { back(*nodes_[id].out); });
}

void Graph::backward(Ref loss) {
    if (loss->rows != 1 || loss->cols != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + loss->shape_str());
    // fresh intermediate grads; external params keep accumulating
    for (auto& n : nodes_)
        if (n.owned) n.owned->grad.assign(n.owned->v.size(), 0.0);
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
        if (it->back) it->back();
}

GradCheckReport grad_check(const std::function<Graph::Ref(Graph&)>& build,
                           const std::vector<Tensor*>& params, double eps, double tol) {
    if (eps <= 0.0 || eps > 1e-2)
        throw std::invalid_argument("grad_check: eps must be in (0, 1e-2]");
    for (Tensor* p : params) {
        p->set_requires_grad(true);
        p->zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        Graph g;
        Graph::Ref loss = build(g);
        g.backward(loss);
    }
    for (Tensor* p : params) analytic.push_back(p->grad);

    GradCheckReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor* p = params[pi];
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double saved = p->v[i];
            p->v[i] = saved + eps;
            double fp;
            {
                Graph g;
                fp = build(g)->v[0];
            }
            p->v[i] = saved - eps;
            double fm;
            {
                Graph g;
                fm = build(g)->v[0];
            }
            p->v[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
            rep.max_rel_err = std::max(rep.max_rel_err, rel);
        }
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace moeabsa
