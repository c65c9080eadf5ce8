#include "moe_absa/moe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moeabsa {

void GateConfig::validate(int batch) const {
    if (top_k < 1 || top_k > n_experts)
        throw std::invalid_argument("GateConfig: need 1 <= top_k <= n_experts");
    if (capacity_factor <= 0.0)
        throw std::invalid_argument("GateConfig: capacity_factor must be > 0");
    if (noise_scale < 0.0) throw std::invalid_argument("GateConfig: noise_scale must be >= 0");
    if (n_groups < 1) throw std::invalid_argument("GateConfig: n_groups must be >= 1");
    if (batch % n_groups != 0)
        throw std::invalid_argument("GateConfig: n_groups must divide batch size");
}

GateParams GateParams::init(int in_dim, int n_experts, Rng& rng) {
    const int mid = std::max(1, in_dim / 2);
    GateParams p;
    p.w1 = Tensor::randn(in_dim, mid, rng);
    p.b1 = Tensor(1, mid);
    p.w2 = Tensor::randn(mid, n_experts, rng);
    p.b2 = Tensor(1, n_experts);
    return p;
}

std::vector<Tensor*> GateParams::parameters() { return {&w1, &b1, &w2, &b2}; }

GateScores gate_forward(Graph& g, Graph::Ref gate_in, GateParams& params) {
    if (gate_in->cols != params.w1.rows)
        throw std::invalid_argument("gate_forward: input width " + gate_in->shape_str() +
                                    " does not match gate " + params.w1.shape_str());
    auto h = g.add_bias(g.matmul(gate_in, g.param(params.w1)), g.param(params.b1));
    auto logits = g.add_bias(g.matmul(h, g.param(params.w2)), g.param(params.b2));
    GateScores s;
    s.logits = logits;
    s.probs = g.softmax_rows(logits);
    return s;
}

Graph::Ref add_gumbel_noise(Graph& g, Graph::Ref logits, double scale, Rng& rng) {
    if (scale < 0.0) throw std::invalid_argument("add_gumbel_noise: scale must be >= 0");
    if (scale == 0.0) return logits;
    Tensor noise(logits->rows, logits->cols);
    for (auto& x : noise.v) x = scale * rng.gumbel();
    return g.add(logits, g.input(std::move(noise)));
}

int capacity(const GateConfig& cfg, int group_batch) {
    if (group_batch < 1) throw std::invalid_argument("capacity: batch must be >= 1");
    const double raw = cfg.capacity_factor * group_batch * cfg.top_k / cfg.n_experts;
    return static_cast<int>(std::ceil(raw - 1e-9));
}

int GroupPlan::pad_count() const {
    int n = 0;
    for (const auto& col : slots)
        for (const auto& s : col)
            if (!s) ++n;
    return n;
}

int RoutingPlan::total_dropped() const {
    int n = 0;
    for (const auto& g : groups) {
        for (const auto& [t, c] : g.dropped) n += c;
        for (const auto& [t, c] : g.unresolved) n += c;
    }
    return n;
}

int RoutingPlan::total_pad() const {
    int n = 0;
    for (const auto& g : groups) n += g.pad_count();
    return n;
}

namespace {

// expert indices of token row sorted by descending score, ties to the
// lower expert index
std::vector<int> ranking_of_row(const Tensor& scores, int token) {
    std::vector<int> order(scores.cols);
    for (int e = 0; e < scores.cols; ++e) order[e] = e;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores.at(token, a) > scores.at(token, b);
    });
    return order;
}

}  // namespace

RoutingPlan topk_dispatch(const Tensor& probs, const GateConfig& cfg) {
    const int batch = probs.rows;
    cfg.validate(batch);
    if (probs.cols != cfg.n_experts)
        throw std::invalid_argument("topk_dispatch: scores " + probs.shape_str() +
                                    " do not match n_experts");
    if (!probs.all_finite())
        throw std::invalid_argument("topk_dispatch: scores must be finite");

    RoutingPlan plan;
    plan.batch = batch;
    plan.n_experts = cfg.n_experts;
    plan.top_k = cfg.top_k;

    const int gb = batch / cfg.n_groups;
    for (int gi = 0; gi < cfg.n_groups; ++gi) {
        GroupPlan gp;
        gp.token_begin = gi * gb;
        gp.batch = gb;
        gp.capacity = capacity(cfg, gb);
        gp.slots.assign(cfg.n_experts,
                        std::vector<std::optional<Slot>>(gp.capacity, std::nullopt));
        gp.routed.assign(gb, {});

        // top-k selections per token
        std::vector<std::vector<int>> topk(gb);
        for (int lt = 0; lt < gb; ++lt) {
            auto order = ranking_of_row(probs, gp.token_begin + lt);
            topk[lt].assign(order.begin(), order.begin() + cfg.top_k);
        }

        // per-expert admission by descending gate prob, ties by token index
        std::vector<int> drop_count(gb, 0);
        for (int e = 0; e < cfg.n_experts; ++e) {
            std::vector<std::pair<int, int>> contenders;  // (local token, rank)
            for (int lt = 0; lt < gb; ++lt)
                for (int r = 0; r < cfg.top_k; ++r)
                    if (topk[lt][r] == e) contenders.emplace_back(lt, r);
            std::stable_sort(contenders.begin(), contenders.end(),
                             [&](const auto& a, const auto& b) {
                                 return probs.at(gp.token_begin + a.first, e) >
                                        probs.at(gp.token_begin + b.first, e);
                             });
            int pos = 0;
            for (const auto& [lt, r] : contenders) {
                if (pos < gp.capacity) {
                    gp.slots[e][pos++] = Slot{gp.token_begin + lt, Slot::Source::primary, r, 1};
                    gp.routed[lt].emplace_back(e, r);
                } else {
                    ++drop_count[lt];
                }
            }
        }
        for (auto& r : gp.routed)
            std::sort(r.begin(), r.end(),
                      [](const auto& a, const auto& b) { return a.second < b.second; });
        for (int lt = 0; lt < gb; ++lt)
            if (drop_count[lt] > 0)
                gp.dropped.emplace_back(gp.token_begin + lt, drop_count[lt]);
        plan.groups.push_back(std::move(gp));
    }
    return plan;
}

void intra_group_rectify(RoutingPlan& plan, const Tensor& logits, const GateConfig& cfg) {
    for (auto& gp : plan.groups) {
        for (const auto& [token, count] : gp.dropped) {
            const int lt = token - gp.token_begin;
            int best = -1;
            double best_score = 0.0;
            for (int e = 0; e < cfg.n_experts; ++e) {
                bool in_routed = false;
                for (const auto& [re, rr] : gp.routed[lt])
                    if (re == e) in_routed = true;
                if (in_routed) continue;
                bool has_free = false;
                for (const auto& s : gp.slots[e])
                    if (!s) {
                        has_free = true;
                        break;
                    }
                if (!has_free) continue;
                const double sc = logits.at(token, e);
                if (best < 0 || sc > best_score) {
                    best = e;
                    best_score = sc;
                }
            }
            if (best < 0) {
                gp.unresolved.emplace_back(token, count);
                continue;
            }
            for (auto& s : gp.slots[best])
                if (!s) {
                    s = Slot{token, Slot::Source::ir, -1, count};
                    break;
                }
            gp.ir_reroutes.emplace_back(token, best, count);
        }
        gp.dropped.clear();
    }
}

void fill_in_rectify(RoutingPlan& plan, const Tensor& logits, const GateConfig& cfg) {
    if (cfg.top_k >= cfg.n_experts) return;  // no rank-(k+1) expert exists
    for (auto& gp : plan.groups) {
        // rank-(k+1) expert per token
        std::vector<int> next_expert(gp.batch);
        for (int lt = 0; lt < gp.batch; ++lt)
            next_expert[lt] = ranking_of_row(logits, gp.token_begin + lt)[cfg.top_k];

        for (int e = 0; e < cfg.n_experts; ++e) {
            std::vector<int> pads;
            for (int p = 0; p < gp.capacity; ++p)
                if (!gp.slots[e][p]) pads.push_back(p);
            if (pads.empty()) continue;

            std::vector<int> candidates;
            for (int lt = 0; lt < gp.batch; ++lt) {
                if (next_expert[lt] != e) continue;
                const int token = gp.token_begin + lt;
                bool occupied = false;
                for (const auto& s : gp.slots[e])
                    if (s && s->token == token) occupied = true;
                if (!occupied) candidates.push_back(token);
            }
            std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
                return logits.at(a, e) > logits.at(b, e);
            });
            const std::size_t n = std::min(pads.size(), candidates.size());
            for (std::size_t i = 0; i < n; ++i) {
                gp.slots[e][pads[i]] = Slot{candidates[i], Slot::Source::fr, cfg.top_k, 1};
                gp.fr_fills.emplace_back(candidates[i], e);
            }
        }
    }
}

ExpertStack ExpertStack::init(int n_experts, int in_dim, int hidden, Rng& rng) {
    ExpertStack s;
    s.in_dim = in_dim;
    s.hidden = hidden;
    for (int e = 0; e < n_experts; ++e) {
        Expert ex;
        ex.w1 = Tensor::randn(in_dim, hidden, rng);
        ex.b1 = Tensor(1, hidden);
        ex.w2 = Tensor::randn(hidden, kNumSentiments, rng);
        ex.b2 = Tensor(1, kNumSentiments);
        s.experts.push_back(std::move(ex));
    }
    return s;
}

std::vector<Tensor*> ExpertStack::parameters() {
    std::vector<Tensor*> out;
    for (auto& e : experts) {
        out.push_back(&e.w1);
        out.push_back(&e.b1);
        out.push_back(&e.w2);
        out.push_back(&e.b2);
    }
    return out;
}

std::vector<std::vector<int>> expert_token_lists(const RoutingPlan& plan) {
    std::vector<std::vector<int>> lists(plan.n_experts);
    for (const auto& gp : plan.groups)
        for (int e = 0; e < plan.n_experts; ++e)
            for (const auto& s : gp.slots[e])
                if (s) lists[e].push_back(s->token);
    return lists;
}

std::vector<Graph::Ref> expert_forward(Graph& g, ExpertStack& stack, Graph::Ref x,
                                       const std::vector<std::vector<int>>& tokens) {
    if (x->cols != stack.in_dim)
        throw std::invalid_argument("expert_forward: input " + x->shape_str() +
                                    " does not match expert input width " +
                                    std::to_string(stack.in_dim));
    std::vector<Graph::Ref> outs;
    for (std::size_t e = 0; e < stack.experts.size(); ++e) {
        Expert& ex = stack.experts[e];
        auto xe = g.rows_gather(x, tokens[e]);
        auto h = g.relu(g.add_bias(g.matmul(xe, g.param(ex.w1)), g.param(ex.b1)));
        outs.push_back(g.add_bias(g.matmul(h, g.param(ex.w2)), g.param(ex.b2)));
    }
    return outs;
}

Graph::Ref moe_combine(Graph& g, Graph::Ref logits, const RoutingPlan& plan,
                       const std::vector<std::vector<int>>& expert_tokens,
                       const std::vector<Graph::Ref>& expert_outputs, CombineNorms* norms_out,
                       const CombineNorms* frozen) {
    const int batch = plan.batch;
    const int n_cls = expert_outputs.empty() ? kNumSentiments : expert_outputs[0]->cols;

    struct Contribution {
        int token;
        int expert;
        int row;  // into the expert's gathered output
        double mult;
    };
    std::vector<Contribution> contribs;
    {
        std::vector<int> cursor(plan.n_experts, 0);
        for (const auto& gp : plan.groups)
            for (int e = 0; e < plan.n_experts; ++e)
                for (const auto& s : gp.slots[e])
                    if (s) {
                        contribs.push_back({s->token, e, cursor[e]++, double(s->multiplicity)});
                        if (expert_tokens[e][contribs.back().row] != s->token)
                            throw std::logic_error("moe_combine: token list out of sync");
                    }
    }

    CombineNorms norms;
    norms.shift.assign(batch, 0.0);
    norms.denom.assign(batch, 0.0);
    if (frozen) {
        norms = *frozen;
    } else {
        std::vector<bool> seen(batch, false);
        for (const auto& c : contribs) {
            const double l = logits->at(c.token, c.expert);
            if (!seen[c.token] || l > norms.shift[c.token]) norms.shift[c.token] = l;
            seen[c.token] = true;
        }
        for (const auto& c : contribs)
            norms.denom[c.token] +=
                c.mult * std::exp(logits->at(c.token, c.expert) - norms.shift[c.token]);
    }

    Tensor out(batch, n_cls);
    std::vector<double> wnorm(contribs.size());  // weight / denominator
    for (std::size_t i = 0; i < contribs.size(); ++i) {
        const auto& c = contribs[i];
        const double denom = norms.denom[c.token];
        if (denom <= 0.0) {
            wnorm[i] = 0.0;  // token with no routed mass stays zero
            continue;
        }
        wnorm[i] = c.mult * std::exp(logits->at(c.token, c.expert) - norms.shift[c.token]) /
                   denom;
        for (int j = 0; j < n_cls; ++j)
            out.at(c.token, j) += wnorm[i] * expert_outputs[c.expert]->at(c.row, j);
    }
    if (norms_out) *norms_out = norms;

    // straight-through: the denominator (and its shift) are constants in
    // the backward pass, so each logit sees only its numerator term
    const int n_experts = logits->cols;
    return g.custom(
        std::move(out),
        [logits, expert_outputs, n_experts, n_cls, contribs = std::move(contribs),
         wnorm = std::move(wnorm)](const Tensor& o) {
            for (std::size_t i = 0; i < contribs.size(); ++i) {
                const auto& c = contribs[i];
                const double w = wnorm[i];
                if (w == 0.0) continue;
                Tensor* y = expert_outputs[c.expert];
                double dot = 0.0;
                for (int j = 0; j < n_cls; ++j) {
                    const double go = o.at_grad(c.token, j);
                    y->grad[static_cast<std::size_t>(c.row) * n_cls + j] += go * w;
                    dot += go * y->at(c.row, j);
                }
                logits->grad[static_cast<std::size_t>(c.token) * n_experts + c.expert] +=
                    dot * w;
            }
        });
}

int hard_gate_route(Aspect a) {
    const int idx = static_cast<int>(a);
    if (idx < 0 || idx >= kNumAspects)
        throw std::invalid_argument("hard_gate_route: unknown aspect");
    return idx;
}

UtilizationVector utilization_soft(const std::vector<Tensor>& prob_batches) {
    if (prob_batches.empty()) throw std::invalid_argument("utilization: empty window");
    const int n_experts = prob_batches[0].cols;
    UtilizationVector u;
    u.mode = UtilizationMode::soft;
    u.u.assign(n_experts, 0.0);
    long total_rows = 0;
    for (const auto& p : prob_batches) {
        for (int i = 0; i < p.rows; ++i)
            for (int e = 0; e < n_experts; ++e) u.u[e] += p.at(i, e);
        total_rows += p.rows;
    }
    for (auto& x : u.u) x /= static_cast<double>(total_rows);
    return u;
}

UtilizationVector utilization_hard(const std::vector<RoutingPlan>& plans) {
    if (plans.empty()) throw std::invalid_argument("utilization: empty window");
    const int n_experts = plans[0].n_experts;
    UtilizationVector u;
    u.mode = UtilizationMode::hard;
    u.u.assign(n_experts, 0.0);
    double total = 0.0;
    for (const auto& plan : plans)
        for (const auto& gp : plan.groups)
            for (int e = 0; e < n_experts; ++e)
                for (const auto& s : gp.slots[e])
                    if (s) {
                        u.u[e] += 1.0;
                        total += 1.0;
                    }
    if (total > 0.0)
        for (auto& x : u.u) x /= total;
    return u;
}

}  // namespace moeabsa
