#include "moe_absa/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace moeabsa {

Adam::Adam(std::vector<Tensor*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    state_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        params_[i]->set_requires_grad(true);
        state_[i].m.assign(params_[i]->size(), 0.0);
        state_[i].v.assign(params_[i]->size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        if (p.grad.size() != p.size())
            throw std::runtime_error("Adam::step: gradient/parameter size mismatch");
        State& s = state_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = p.grad[j];
            s.m[j] = cfg_.beta1 * s.m[j] + (1.0 - cfg_.beta1) * g;
            s.v[j] = cfg_.beta2 * s.v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = s.m[j] / bc1;
            const double vhat = s.v[j] / bc2;
            p.v[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor* p : params_) p->zero_grad();
}

}  // namespace moeabsa
