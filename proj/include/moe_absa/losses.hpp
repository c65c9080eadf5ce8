#pragma once

#include <vector>

#include "moe_absa/graph.hpp"
#include "moe_absa/moe.hpp"
#include "moe_absa/tensor.hpp"

namespace moeabsa {

struct LossWeights {
    double lambda_aux = 0.011822;
    double lambda_mse = 0.011822;
    bool enable_aux = true;
    bool enable_mse = true;
};

// --------------------------------------------------------------- values
// plain value-level formulas; the graph builders below mirror them for
// training

// -(1/N) sum y*ln(clamp(p, 1e-12, 1))
double cce(const Tensor& pred_probs, const Tensor& one_hot);

// lambda * Var(u) / Mean(u)^2, population variance
double aux_importance(const UtilizationVector& u, double lambda_aux);

// lambda * (1/E) * sum (u_e - 1/E)^2
double mse_uniform(const UtilizationVector& u, double lambda_mse);

// ce + aux + mse with toggles; lambdas are already inside the components
double total_loss(double ce, double aux, double mse, const LossWeights& w);

// Var(u) / Mean(u)^2
double cov2(const std::vector<double>& u);

// ---------------------------------------------------------------- graph

Graph::Ref cce_node(Graph& g, Graph::Ref pred_probs, Tensor one_hot);
Graph::Ref aux_importance_node(Graph& g, Graph::Ref u, double lambda_aux);
Graph::Ref mse_uniform_node(Graph& g, Graph::Ref u, double lambda_mse);

}  // namespace moeabsa
