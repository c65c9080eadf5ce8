#include "moe_absa/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moeabsa {

double cce(const Tensor& pred_probs, const Tensor& one_hot) {
    if (pred_probs.rows != one_hot.rows || pred_probs.cols != one_hot.cols)
        throw std::invalid_argument("cce: shape mismatch " + pred_probs.shape_str() + " vs " +
                                    one_hot.shape_str());
    if (pred_probs.rows < 1) throw std::invalid_argument("cce: empty batch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred_probs.size(); ++i)
        acc -= one_hot.v[i] * std::log(std::clamp(pred_probs.v[i], 1e-12, 1.0));
    return acc / pred_probs.rows;
}

namespace {

std::pair<double, double> var_mean(const std::vector<double>& u) {
    double mean = 0.0;
    for (double x : u) mean += x;
    mean /= static_cast<double>(u.size());
    double var = 0.0;
    for (double x : u) var += (x - mean) * (x - mean);
    var /= static_cast<double>(u.size());
    return {var, mean};
}

}  // namespace

double aux_importance(const UtilizationVector& u, double lambda_aux) {
    bool all_zero = true;
    for (double x : u.u) {
        if (x < 0.0) throw std::invalid_argument("aux_importance: u must be nonnegative");
        if (x != 0.0) all_zero = false;
    }
    if (u.u.empty() || all_zero)
        throw std::invalid_argument("aux_importance: degenerate all-zero utilization");
    auto [var, mean] = var_mean(u.u);
    return lambda_aux * var / (mean * mean);
}

double mse_uniform(const UtilizationVector& u, double lambda_mse) {
    if (u.u.empty()) throw std::invalid_argument("mse_uniform: empty utilization");
    const double n = static_cast<double>(u.u.size());
    const double target = 1.0 / n;
    double acc = 0.0;
    for (double x : u.u) acc += (x - target) * (x - target);
    return lambda_mse * acc / n;
}

double total_loss(double ce, double aux, double mse, const LossWeights& w) {
    double t = ce;
    if (w.enable_aux) t += aux;
    if (w.enable_mse) t += mse;
    return t;
}

double cov2(const std::vector<double>& u) {
    for (double x : u)
        if (x < 0.0) throw std::invalid_argument("cov2: u must be nonnegative");
    auto [var, mean] = var_mean(u);
    if (mean <= 0.0) throw std::invalid_argument("cov2: zero mean utilization");
    return var / (mean * mean);
}

Graph::Ref cce_node(Graph& g, Graph::Ref pred_probs, Tensor one_hot) {
    if (pred_probs->rows != one_hot.rows || pred_probs->cols != one_hot.cols)
        throw std::invalid_argument("cce: shape mismatch " + pred_probs->shape_str() + " vs " +
                                    one_hot.shape_str());
    const int n = pred_probs->rows;
    auto logp = g.log_clamped(pred_probs, 1e-12);
    auto weighted = g.mul(g.input(std::move(one_hot)), logp);
    return g.scale(g.sum_all(weighted), -1.0 / n);
}

Graph::Ref aux_importance_node(Graph& g, Graph::Ref u, double lambda_aux) {
    const double n = static_cast<double>(u->rows) * u->cols;
    auto mean = g.scale(g.sum_all(u), 1.0 / n);
    auto mean_sq = g.mul(mean, mean);
    auto second = g.scale(g.sum_all(g.mul(u, u)), 1.0 / n);  // E[u^2]
    auto var = g.sub(second, mean_sq);
    return g.scale(g.div(var, mean_sq), lambda_aux);
}

Graph::Ref mse_uniform_node(Graph& g, Graph::Ref u, double lambda_mse) {
    const double n = static_cast<double>(u->rows) * u->cols;
    auto d = g.add_scalar(u, -1.0 / n);
    return g.scale(g.sum_all(g.mul(d, d)), lambda_mse / n);
}

}  // namespace moeabsa
