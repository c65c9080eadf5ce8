#pragma once

#include <vector>

#include "moe_absa/tensor.hpp"

namespace moeabsa {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction; deterministic given inputs.
class Adam {
public:
    Adam(std::vector<Tensor*> params, AdamConfig cfg);

    void step();
    void zero_grad();

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return t_; }

private:
    struct State {
        std::vector<double> m, v;
    };
    std::vector<Tensor*> params_;
    std::vector<State> state_;
    AdamConfig cfg_;
    long t_ = 0;
};

}  // namespace moeabsa
