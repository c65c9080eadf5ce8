#pragma once

#include <optional>
#include <vector>

#include "moe_absa/graph.hpp"
#include "moe_absa/rng.hpp"
#include "moe_absa/tensor.hpp"
#include "moe_absa/text.hpp"

namespace moeabsa {

struct GateConfig {
    int n_experts = 6;
    int top_k = 3;
    double capacity_factor = 1.8;
    double noise_scale = 0.098323;
    int n_groups = 1;

    void validate(int batch) const;
};

// two linear layers, d -> d/2 -> E
struct GateParams {
    Tensor w1, b1, w2, b2;

    static GateParams init(int in_dim, int n_experts, Rng& rng);
    std::vector<Tensor*> parameters();
};

struct GateScores {
    Graph::Ref logits = nullptr;  // BxE
    Graph::Ref probs = nullptr;   // row softmax of logits
};

GateScores gate_forward(Graph& g, Graph::Ref gate_in, GateParams& params);

// training-time exploration noise; scale 0 leaves logits untouched
Graph::Ref add_gumbel_noise(Graph& g, Graph::Ref logits, double scale, Rng& rng);

int capacity(const GateConfig& cfg, int group_batch);

// ------------------------------------------------------------- routing

struct Slot {
    enum class Source { primary, ir, fr };
    int token = -1;  // global row index into the batch
    Source source = Source::primary;
    int rank = 0;          // top-k rank for primary; k for fr
    int multiplicity = 1;  // k - |R_i| for ir slots

    bool operator==(const Slot&) const = default;
};

// Token indices are global batch rows throughout; token_begin/batch mark
// which rows belong to this group.
struct GroupPlan {
    int token_begin = 0;
    int batch = 0;
    int capacity = 0;
    // slots[e] has exactly `capacity` entries; nullopt = PAD
    std::vector<std::vector<std::optional<Slot>>> slots;
    // per token (group-relative position): (expert, rank) admitted in top-k
    std::vector<std::vector<std::pair<int, int>>> routed;
    std::vector<std::pair<int, int>> dropped;            // (token, k - |R_i|); cleared by IR
    std::vector<std::pair<int, int>> unresolved;         // IR found no free expert
    std::vector<std::tuple<int, int, int>> ir_reroutes;  // (token, expert, mult)
    std::vector<std::pair<int, int>> fr_fills;           // (token, expert)

    int pad_count() const;

    bool operator==(const GroupPlan&) const = default;
};

struct RoutingPlan {
    int batch = 0;
    int n_experts = 0;
    int top_k = 0;
    std::vector<GroupPlan> groups;

    int total_dropped() const;  // dropped plus unresolved
    int total_pad() const;
    bool operator==(const RoutingPlan&) const = default;
};

// initial top-k selection plus capacity-limited admission; overflow tokens
// recorded as dropped, unfilled slots as PAD
RoutingPlan topk_dispatch(const Tensor& probs, const GateConfig& cfg);

// reassign dropped tokens to the best-scoring same-group expert with free
// capacity, excluding experts already in R_i
void intra_group_rectify(RoutingPlan& plan, const Tensor& logits, const GateConfig& cfg);

// fill PAD slots with rank-(k+1) candidates, highest logit first
void fill_in_rectify(RoutingPlan& plan, const Tensor& logits, const GateConfig& cfg);

// ------------------------------------------------------------- experts

struct Expert {
    Tensor w1, b1, w2, b2;  // d -> hidden -> 3
};

struct ExpertStack {
    std::vector<Expert> experts;
    int in_dim = 0;
    int hidden = 0;

    static ExpertStack init(int n_experts, int in_dim, int hidden, Rng& rng);
    std::vector<Tensor*> parameters();
};

// per-expert token lists derived from the plan's slot tables (PADs skipped),
// in slot order
std::vector<std::vector<int>> expert_token_lists(const RoutingPlan& plan);

// sparse evaluation: each expert runs only on its routed tokens
std::vector<Graph::Ref> expert_forward(Graph& g, ExpertStack& stack, Graph::Ref x,
                                       const std::vector<std::vector<int>>& tokens);

// per-token normalization recorded by combine, reusable to freeze the
// denominator (straight-through finite-difference checks)
struct CombineNorms {
    std::vector<double> shift;  // per-token max logit over contributions
    std::vector<double> denom;  // shifted denominator
};

// exp-score weighted mean over each token's contributions (primary slots,
// IR slot scaled by its multiplicity, FR slot at rank k+1). Backward treats
// the denominator as constant, so gate logits of FR-activated experts still
// receive gradient.
Graph::Ref moe_combine(Graph& g, Graph::Ref logits, const RoutingPlan& plan,
                       const std::vector<std::vector<int>>& expert_tokens,
                       const std::vector<Graph::Ref>& expert_outputs,
                       CombineNorms* norms_out = nullptr,
                       const CombineNorms* frozen = nullptr);

// ------------------------------------------------------- hard gate & stats

int hard_gate_route(Aspect a);

enum class UtilizationMode { soft, hard };

struct UtilizationVector {
    std::vector<double> u;
    UtilizationMode mode = UtilizationMode::soft;
};

// soft: mean gate probability per expert over a window of prob matrices;
// hard: normalized slot-occupancy counts over a window of plans
UtilizationVector utilization_soft(const std::vector<Tensor>& prob_batches);
UtilizationVector utilization_hard(const std::vector<RoutingPlan>& plans);

}  // namespace moeabsa
