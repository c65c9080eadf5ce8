#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "moe_absa/tensor.hpp"

namespace moeabsa {

// Reverse-mode tape over 2-D tensors. Operations append a node holding the
// forward result and a closure that scatters the node's output gradient
// into its inputs. backward() walks the tape once, in reverse insertion
// order, which is a valid reverse topological order by construction.
//
// A Graph is confined to one execution context; parameters registered via
// param() keep their gradient buffers across graphs so an optimizer can
// consume them after backward().
class Graph {
public:
    using Ref = Tensor*;

    // leaf holding a constant (gradient computed but discarded)
    Ref input(Tensor t);

    // leaf aliasing an external trainable tensor; grads accumulate into it
    Ref param(Tensor& t);

    Ref matmul(Ref a, Ref b);
    Ref add(Ref a, Ref b);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);  // elementwise
    Ref div(Ref a, Ref b);  // elementwise
    Ref relu(Ref x);
    Ref sigmoid(Ref x);
    Ref add_bias(Ref x, Ref bias);  // bias is 1xC, broadcast over rows
    Ref softmax_rows(Ref x);
    Ref scale(Ref x, double k);
    Ref add_scalar(Ref x, double k);
    Ref log_clamped(Ref x, double eps = 1e-12);
    Ref sum_all(Ref x);   // -> 1x1
    Ref col_mean(Ref x);  // BxC -> 1xC
    Ref rows_gather(Ref x, std::vector<int> idx);
    // mean over rows of [sum_c softplus-style BCE], targets constant
    Ref bce_with_logits(Ref logits, Tensor targets);

    // escape hatch for composite ops (MoE combine): the caller supplies the
    // forward value and a backward closure receiving the node's output
    // tensor (with its gradient populated)
    Ref custom(Tensor out, std::function<void(const Tensor&)> back);

    // loss must be 1x1; populates grads of every reachable param
    void backward(Ref loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor* out = nullptr;
        std::unique_ptr<Tensor> owned;
        std::function<void()> back;
    };
    std::vector<Node> nodes_;

    Ref push(Tensor value, std::function<void()> back);
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central finite differences against the tape's analytic gradients.
// `build` must reconstruct the same computation from the current parameter
// values each time it is called and return the scalar loss node.
GradCheckReport grad_check(const std::function<Graph::Ref(Graph&)>& build,
                           const std::vector<Tensor*>& params,
                           double eps = 1e-5, double tol = 1e-4);

}  // namespace moeabsa
