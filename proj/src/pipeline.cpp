#include "moe_absa/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "moe_absa/checkpoint.hpp"
#include "moe_absa/graph.hpp"
#include "moe_absa/losses.hpp"
#include "moe_absa/moe.hpp"
#include "moe_absa/optimizer.hpp"

namespace moeabsa {

int eval_thread_count() {
    const char* env = std::getenv("MOE_ABSA_THREADS");
    if (!env) return 1;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) return 1;
    return static_cast<int>(std::min(n, 64l));
}

namespace {

// one embedding per distinct review text; triples of the same review share
std::vector<std::vector<double>> embed_all(const std::vector<ReviewRecord>& recs,
                                           const EmbeddingProvider& provider) {
    std::vector<std::vector<double>> out(recs.size());
    if (provider.kind() == EmbeddingProvider::Kind::precomputed_file) {
        for (std::size_t i = 0; i < recs.size(); ++i) out[i] = provider.embed_record(recs[i]);
        return out;
    }
    std::unordered_map<std::string, std::size_t> first_idx;
    std::vector<std::size_t> unique;  // representative record per distinct text
    std::vector<std::size_t> owner(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        auto [it, fresh] = first_idx.try_emplace(recs[i].text, unique.size());
        if (fresh) unique.push_back(i);
        owner[i] = it->second;
    }
    std::vector<std::vector<double>> uvecs(unique.size());
    const int threads = std::min<int>(eval_thread_count(), static_cast<int>(unique.size()));
    if (threads <= 1) {
        for (std::size_t u = 0; u < unique.size(); ++u)
            uvecs[u] = provider.embed_text(recs[unique[u]].text);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t]() {
                for (std::size_t u = t; u < unique.size(); u += threads)
                    uvecs[u] = provider.embed_text(recs[unique[u]].text);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < recs.size(); ++i) out[i] = uvecs[owner[i]];
    return out;
}

Tensor gather_matrix(const std::vector<std::vector<double>>& vecs,
                     const std::vector<std::size_t>& idx, int dim) {
    Tensor x(static_cast<int>(idx.size()), dim);
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < dim; ++c) x.at(static_cast<int>(r), c) = vecs[idx[r]][c];
    return x;
}

Tensor one_hot_rows(const std::vector<int>& labels, int n_classes) {
    Tensor y(static_cast<int>(labels.size()), n_classes);
    for (std::size_t r = 0; r < labels.size(); ++r) y.at(static_cast<int>(r), labels[r]) = 1.0;
    return y;
}

void validate_config(const StageConfig& c) {
    if (c.lr <= 0.0) throw std::invalid_argument("config: lr must be > 0");
    if (c.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (c.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (c.dim < 1 || c.hidden < 1)
        throw std::invalid_argument("config: dim and hidden must be >= 1");
}

// value-level x*W + b for prediction paths (no tape needed)
std::vector<double> linear_row(const std::vector<double>& x, const Tensor& w, const Tensor& b) {
    std::vector<double> out(static_cast<std::size_t>(w.cols));
    for (int j = 0; j < w.cols; ++j) {
        double s = b.at(0, j);
        for (int i = 0; i < w.rows; ++i) s += x[i] * w.at(i, j);
        out[j] = s;
    }
    return out;
}

void softmax_inplace(std::vector<double>& z) {
    double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) sum += (v = std::exp(v - mx));
    for (auto& v : z) v /= sum;
}

int argmax_of(const std::vector<double>& z) {
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

AdamConfig adam_for(const StageConfig& c) { return {c.lr, 0.9, 0.999, 1e-8}; }

Aspect triple_aspect(const ReviewRecord& rec) {
    if (rec.sentiments.size() != 1)
        throw std::invalid_argument("record '" + rec.id + "' is not a triple (run expand_triples)");
    return rec.sentiments.begin()->first;
}

int triple_label(const ReviewRecord& rec) {
    return static_cast<int>(rec.sentiments.begin()->second);
}

// degenerate but valid plan for the hard-gate baseline: one group, capacity
// = batch, every token in the slot table of its aspect's fixed expert
RoutingPlan hard_plan(const std::vector<Aspect>& aspects, const GateConfig& gc) {
    const int n = static_cast<int>(aspects.size());
    RoutingPlan plan;
    plan.batch = n;
    plan.n_experts = gc.n_experts;
    plan.top_k = 1;
    GroupPlan gp;
    gp.batch = n;
    gp.capacity = n;
    gp.slots.assign(gc.n_experts, std::vector<std::optional<Slot>>(n));
    gp.routed.assign(n, {});
    std::vector<int> cursor(gc.n_experts, 0);
    for (int i = 0; i < n; ++i) {
        const int e = hard_gate_route(aspects[i]);
        gp.slots[e][cursor[e]++] = Slot{i, Slot::Source::primary, 0, 1};
        gp.routed[i].emplace_back(e, 0);
    }
    plan.groups.push_back(std::move(gp));
    return plan;
}

RoutingPlan route_batch(const StageConfig& cfg, const Tensor& probs, const Tensor& logits,
                        const std::vector<Aspect>& aspects) {
    if (cfg.routing == Routing::hard_gate) return hard_plan(aspects, cfg.gate);
    RoutingPlan plan = topk_dispatch(probs, cfg.gate);
    if (cfg.enable_ir) intra_group_rectify(plan, logits, cfg.gate);
    if (cfg.enable_fr) fill_in_rectify(plan, logits, cfg.gate);
    return plan;
}

Tensor gate_input_matrix(const StageConfig& cfg, const EmbeddingProvider& provider,
                         const std::vector<std::vector<double>>& sent,
                         const std::vector<std::size_t>& idx,
                         const std::vector<Aspect>& aspects) {
    Tensor a(static_cast<int>(idx.size()), cfg.gate_in_dim());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& av = provider.aspect_embedding(aspects[r]);
        for (int c = 0; c < cfg.dim; ++c) a.at(static_cast<int>(r), c) = av[c];
        if (cfg.gate_concat_sentence)
            for (int c = 0; c < cfg.dim; ++c)
                a.at(static_cast<int>(r), cfg.dim + c) = sent[idx[r]][c];
    }
    return a;
}

struct AbsaBatchOut {
    Tensor gate_probs;   // BxE, noiseless
    RoutingPlan plan;
    Tensor class_probs;  // Bx3
};

AbsaBatchOut absa_forward_batch(AbsaModel& model, Tensor x, Tensor gate_in,
                                const std::vector<Aspect>& aspects) {
    const StageConfig& cfg = model.config;
    Graph g;
    auto xr = g.input(std::move(x));
    auto gs = gate_forward(g, g.input(std::move(gate_in)), model.gate);
    AbsaBatchOut out;
    out.gate_probs = *gs.probs;
    out.plan = route_batch(cfg, *gs.probs, *gs.logits, aspects);
    auto tokens = expert_token_lists(out.plan);
    auto expert_outs = expert_forward(g, model.experts, xr, tokens);
    auto combined = moe_combine(g, gs.logits, out.plan, tokens, expert_outs);
    out.class_probs = *g.softmax_rows(combined);
    return out;
}

PrCurveSet pr_from_scores(const std::vector<std::vector<double>>& scores_per_class,
                          const std::vector<std::vector<int>>& labels_per_class) {
    PrCurveSet pr;
    std::vector<double> all_scores;
    std::vector<int> all_labels;
    for (std::size_t c = 0; c < scores_per_class.size(); ++c) {
        const bool any_pos = std::any_of(labels_per_class[c].begin(), labels_per_class[c].end(),
                                         [](int y) { return y != 0; });
        pr.per_class.push_back(
            any_pos ? pr_curve(scores_per_class[c], labels_per_class[c]) : std::vector<PrPoint>{});
        all_scores.insert(all_scores.end(), scores_per_class[c].begin(),
                          scores_per_class[c].end());
        all_labels.insert(all_labels.end(), labels_per_class[c].begin(),
                          labels_per_class[c].end());
    }
    const bool any_pos =
        std::any_of(all_labels.begin(), all_labels.end(), [](int y) { return y != 0; });
    if (any_pos) pr.micro = pr_curve(all_scores, all_labels);
    return pr;
}

}  // namespace

// ---------------------------------------------------------------- models

std::vector<std::pair<std::string, Tensor*>> SentimentModel::named_parameters() {
    return {{"w", &w}, {"b", &b}};
}

std::vector<std::pair<std::string, Tensor*>> AcdModel::named_parameters() {
    return {{"w", &w}, {"b", &b}};
}

std::vector<std::pair<std::string, Tensor*>> AbsaModel::named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out = {
        {"gate.w1", &gate.w1}, {"gate.b1", &gate.b1}, {"gate.w2", &gate.w2}, {"gate.b2", &gate.b2}};
    for (std::size_t e = 0; e < experts.experts.size(); ++e) {
        const std::string p = "expert" + std::to_string(e) + ".";
        out.emplace_back(p + "w1", &experts.experts[e].w1);
        out.emplace_back(p + "b1", &experts.experts[e].b1);
        out.emplace_back(p + "w2", &experts.experts[e].w2);
        out.emplace_back(p + "b2", &experts.experts[e].b2);
    }
    return out;
}

SentimentModel init_sentiment_model(const StageConfig& cfg) {
    validate_config(cfg);
    Rng rng(cfg.seed);
    SentimentModel m;
    m.config = cfg;
    m.w = Tensor::randn(cfg.dim, kNumSentiments, rng);
    m.b = Tensor(1, kNumSentiments);
    return m;
}

AcdModel init_acd_model(const StageConfig& cfg) {
    validate_config(cfg);
    Rng rng(cfg.seed);
    AcdModel m;
    m.config = cfg;
    m.w = Tensor::randn(cfg.dim, kNumAspects, rng);
    m.b = Tensor(1, kNumAspects);
    return m;
}

AbsaModel init_absa_model(const StageConfig& cfg) {
    validate_config(cfg);
    cfg.gate.validate(cfg.batch_size);
    Rng rng(cfg.seed);
    AbsaModel m;
    m.config = cfg;
    m.gate = GateParams::init(cfg.gate_in_dim(), cfg.gate.n_experts, rng);
    m.experts = ExpertStack::init(cfg.gate.n_experts, cfg.dim, cfg.hidden, rng);
    // stress knob: start the gate visibly tilted toward the low experts
    for (int e = 0; e < cfg.gate.n_experts / 2; ++e) m.gate.b2.at(0, e) += cfg.gate_bias_skew;
    return m;
}

// ------------------------------------------------------------- training

std::vector<ReviewRecord> expand_triples(const std::vector<ReviewRecord>& records) {
    std::vector<ReviewRecord> out;
    for (const auto& rec : records) {
        for (const auto& [aspect, sentiment] : rec.sentiments) {
            ReviewRecord t;
            t.id = rec.id + "#" + to_string(aspect);
            t.text = rec.text;
            t.aspects = {aspect};
            t.sentiments = {{aspect, sentiment}};
            t.overall_sentiment = rec.overall_sentiment;
            out.push_back(std::move(t));
        }
    }
    return out;
}

TrainResult train_sentiment(SentimentModel& model, const DatasetSplit& split,
                            const EmbeddingProvider& provider) {
    const StageConfig& cfg = model.config;
    validate_config(cfg);

    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < split.train.size(); ++i)
        if (split.train[i].overall_sentiment) labeled.push_back(i);
    if (labeled.empty()) throw std::invalid_argument("train_sentiment: no labeled records");

    const auto train_emb = embed_all(split.train, provider);
    Adam opt({&model.w, &model.b}, adam_for(cfg));
    Rng rng(cfg.seed + 1);

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = labeled;
        shuffle(order, rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::vector<std::size_t> idx(
                order.begin() + begin,
                order.begin() + std::min(order.size(), begin + cfg.batch_size));
            std::vector<int> labels;
            for (std::size_t i : idx)
                labels.push_back(static_cast<int>(*split.train[i].overall_sentiment));

            Graph g;
            auto logits = g.add_bias(
                g.matmul(g.input(gather_matrix(train_emb, idx, cfg.dim)), g.param(model.w)),
                g.param(model.b));
            auto loss =
                cce_node(g, g.softmax_rows(logits), one_hot_rows(labels, kNumSentiments));
            g.backward(loss);
            opt.step();
            opt.zero_grad();
            loss_sum += loss->v[0];
            ++batches;
        }

        EpochReport er;
        er.epoch = epoch;
        er.mean_train_loss = loss_sum / std::max(1, batches);
        std::vector<int> preds, labels;
        for (const auto& rec : split.validation) {
            if (!rec.overall_sentiment) continue;
            auto z = linear_row(provider.embed_record(rec), model.w, model.b);
            preds.push_back(argmax_of(z));
            labels.push_back(static_cast<int>(*rec.overall_sentiment));
        }
        if (!preds.empty()) er.validation = classification_report(preds, labels, kNumSentiments);
        result.epochs.push_back(std::move(er));
    }
    return result;
}

PseudoLabelResult pseudo_label(SentimentModel& model, const EmbeddingProvider& provider,
                               const std::vector<ReviewRecord>& unlabeled, double threshold,
                               int manual_budget) {
    if (!(threshold > 0.5 && threshold <= 1.0))
        throw std::invalid_argument("pseudo_label: need 0.5 < threshold <= 1");
    if (manual_budget < 0) throw std::invalid_argument("pseudo_label: manual_budget must be >= 0");

    struct Cand {
        double confidence;
        std::size_t index;
        int pred;
    };
    std::vector<Cand> keep;
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        auto z = linear_row(provider.embed_record(unlabeled[i]), model.w, model.b);
        softmax_inplace(z);
        const int pred = argmax_of(z);
        if (z[pred] >= threshold) keep.push_back({z[pred], i, pred});
    }
    std::stable_sort(keep.begin(), keep.end(),
                     [](const Cand& a, const Cand& b) { return a.confidence > b.confidence; });

    PseudoLabelResult result;
    for (std::size_t k = 0; k < keep.size(); ++k) {
        ReviewRecord rec = unlabeled[keep[k].index];
        rec.overall_sentiment = static_cast<Sentiment>(keep[k].pred);
        auto& dst = (static_cast<int>(k) < manual_budget) ? result.flagged_for_review
                                                          : result.auto_labeled;
        dst.push_back(std::move(rec));
    }
    return result;
}

TrainResult train_acd(AcdModel& model, const DatasetSplit& split,
                      const EmbeddingProvider& provider) {
    const StageConfig& cfg = model.config;
    validate_config(cfg);
    if (split.train.empty()) throw std::invalid_argument("train_acd: no training records");

    const auto train_emb = embed_all(split.train, provider);
    Adam opt({&model.w, &model.b}, adam_for(cfg));
    Rng rng(cfg.seed + 1);

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(split.train.size());
        std::iota(order.begin(), order.end(), 0);
        shuffle(order, rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::vector<std::size_t> idx(
                order.begin() + begin,
                order.begin() + std::min(order.size(), begin + cfg.batch_size));
            Tensor targets(static_cast<int>(idx.size()), kNumAspects);
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (Aspect a : split.train[idx[r]].aspects)
                    targets.at(static_cast<int>(r), static_cast<int>(a)) = 1.0;

            Graph g;
            auto logits = g.add_bias(
                g.matmul(g.input(gather_matrix(train_emb, idx, cfg.dim)), g.param(model.w)),
                g.param(model.b));
            auto loss = g.bce_with_logits(logits, std::move(targets));
            g.backward(loss);
            opt.step();
            opt.zero_grad();
            loss_sum += loss->v[0];
            ++batches;
        }

        EpochReport er;
        er.epoch = epoch;
        er.mean_train_loss = loss_sum / std::max(1, batches);
        if (!split.validation.empty()) {
            std::vector<std::vector<bool>> preds, labels;
            for (const auto& rec : split.validation) {
                auto z = linear_row(provider.embed_record(rec), model.w, model.b);
                std::vector<bool> p(kNumAspects), y(kNumAspects);
                for (int a = 0; a < kNumAspects; ++a) p[a] = z[a] >= 0.0;  // sigmoid >= 0.5
                for (Aspect a : rec.aspects) y[static_cast<int>(a)] = true;
                preds.push_back(std::move(p));
                labels.push_back(std::move(y));
            }
            er.validation = multilabel_report(preds, labels, kNumAspects);
        }
        result.epochs.push_back(std::move(er));
    }
    return result;
}

TrainResult train_absa(AbsaModel& model, const DatasetSplit& split,
                       const EmbeddingProvider& provider, bool collect_traces) {
    const StageConfig& cfg = model.config;
    validate_config(cfg);
    cfg.gate.validate(cfg.batch_size);
    if (split.train.empty()) throw std::invalid_argument("train_absa: no training triples");

    std::vector<Aspect> aspects;
    std::vector<int> labels;
    for (const auto& rec : split.train) {
        aspects.push_back(triple_aspect(rec));
        labels.push_back(triple_label(rec));
    }
    const auto train_emb = embed_all(split.train, provider);

    std::vector<Tensor*> params;
    for (auto& [name, t] : model.named_parameters()) params.push_back(t);
    Adam opt(params, adam_for(cfg));
    Rng rng(cfg.seed + 1);

    TrainResult result;
    long step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(split.train.size());
        std::iota(order.begin(), order.end(), 0);
        shuffle(order, rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::vector<std::size_t> idx(
                order.begin() + begin,
                order.begin() + std::min(order.size(), begin + cfg.batch_size));
            std::vector<Aspect> batch_aspects;
            std::vector<int> batch_labels;
            for (std::size_t i : idx) {
                batch_aspects.push_back(aspects[i]);
                batch_labels.push_back(labels[i]);
            }

            Graph g;
            auto x = g.input(gather_matrix(train_emb, idx, cfg.dim));
            auto gate_in =
                g.input(gate_input_matrix(cfg, provider, train_emb, idx, batch_aspects));
            auto gs = gate_forward(g, gate_in, model.gate);
            auto noisy_logits = add_gumbel_noise(g, gs.logits, cfg.gate.noise_scale, rng);
            auto noisy_probs =
                noisy_logits == gs.logits ? gs.probs : g.softmax_rows(noisy_logits);

            const RoutingPlan plan =
                route_batch(cfg, *noisy_probs, *noisy_logits, batch_aspects);
            auto tokens = expert_token_lists(plan);
            auto expert_outs = expert_forward(g, model.experts, x, tokens);
            auto combined = moe_combine(g, noisy_logits, plan, tokens, expert_outs);
            auto loss = cce_node(g, g.softmax_rows(combined),
                                 one_hot_rows(batch_labels, kNumSentiments));
            if (cfg.loss.enable_aux)
                loss = g.add(loss, aux_importance_node(g, g.col_mean(noisy_probs),
                                                       cfg.loss.lambda_aux));
            if (cfg.loss.enable_mse)
                loss = g.add(loss,
                             mse_uniform_node(g, g.col_mean(noisy_probs), cfg.loss.lambda_mse));
            g.backward(loss);
            opt.step();
            opt.zero_grad();
            loss_sum += loss->v[0];
            ++batches;

            if (collect_traces) {
                for (const auto& gp : plan.groups) {
                    for (int t = 0; t < gp.batch; ++t) {
                        const int tok = gp.token_begin + t;
                        RouteTraceRow row;
                        row.step = step;
                        row.token = tok;
                        row.aspect = batch_aspects[tok];
                        for (auto [e, r] : gp.routed[t]) {
                            if (!row.routed.empty()) row.routed += '|';
                            row.routed += std::to_string(e) + ':' + std::to_string(r);
                        }
                        for (const auto& [dt, mult] : gp.dropped)
                            if (dt == tok) row.drops += mult;
                        for (const auto& [dt, mult] : gp.unresolved)
                            if (dt == tok) row.drops += mult;
                        for (const auto& [it, e, mult] : gp.ir_reroutes)
                            if (it == tok) row.ir_target = e;
                        for (const auto& [ft, e] : gp.fr_fills) {
                            if (ft != tok) continue;
                            if (!row.fr_fills.empty()) row.fr_fills += '|';
                            row.fr_fills += std::to_string(e);
                        }
                        result.traces.push_back(std::move(row));
                    }
                }
            }
            ++step;
        }

        EpochReport er;
        er.epoch = epoch;
        er.mean_train_loss = loss_sum / std::max(1, batches);
        if (!split.validation.empty()) {
            EvalResult ev = evaluate_absa(model, split.validation, provider);
            er.validation = ev.report;
            er.cov2_soft = ev.cov2_soft;
            er.cov2_hard = ev.cov2_hard;
        }
        result.epochs.push_back(std::move(er));
    }
    return result;
}

// ------------------------------------------------------------ evaluation

EvalResult evaluate_sentiment(SentimentModel& model, const std::vector<ReviewRecord>& records,
                              const EmbeddingProvider& provider) {
    std::vector<int> preds, labels;
    std::vector<std::vector<double>> scores(kNumSentiments);
    std::vector<std::vector<int>> bin_labels(kNumSentiments);
    for (const auto& rec : records) {
        if (!rec.overall_sentiment) continue;
        auto z = linear_row(provider.embed_record(rec), model.w, model.b);
        softmax_inplace(z);
        const int y = static_cast<int>(*rec.overall_sentiment);
        preds.push_back(argmax_of(z));
        labels.push_back(y);
        for (int c = 0; c < kNumSentiments; ++c) {
            scores[c].push_back(z[c]);
            bin_labels[c].push_back(y == c ? 1 : 0);
        }
    }
    if (preds.empty()) throw std::invalid_argument("evaluate_sentiment: no labeled records");
    EvalResult out;
    out.report = classification_report(preds, labels, kNumSentiments);
    out.pr = pr_from_scores(scores, bin_labels);
    return out;
}

EvalResult evaluate_acd(AcdModel& model, const std::vector<ReviewRecord>& records,
                        const EmbeddingProvider& provider) {
    if (records.empty()) throw std::invalid_argument("evaluate_acd: empty test set");
    std::vector<std::vector<bool>> preds, labels;
    std::vector<std::vector<double>> scores(kNumAspects);
    std::vector<std::vector<int>> bin_labels(kNumAspects);
    for (const auto& rec : records) {
        auto z = linear_row(provider.embed_record(rec), model.w, model.b);
        std::vector<bool> p(kNumAspects), y(kNumAspects);
        for (Aspect a : rec.aspects) y[static_cast<int>(a)] = true;
        for (int a = 0; a < kNumAspects; ++a) {
            p[a] = z[a] >= 0.0;
            scores[a].push_back(1.0 / (1.0 + std::exp(-z[a])));
            bin_labels[a].push_back(y[a] ? 1 : 0);
        }
        preds.push_back(std::move(p));
        labels.push_back(std::move(y));
    }
    EvalResult out;
    out.report = multilabel_report(preds, labels, kNumAspects);
    out.pr = pr_from_scores(scores, bin_labels);
    return out;
}

std::vector<int> predict_absa(AbsaModel& model, const std::vector<ReviewRecord>& triples,
                              const EmbeddingProvider& provider) {
    const StageConfig& cfg = model.config;
    std::vector<Aspect> aspects;
    for (const auto& rec : triples) aspects.push_back(triple_aspect(rec));
    const auto emb = embed_all(triples, provider);

    std::vector<int> preds;
    for (std::size_t begin = 0; begin < triples.size(); begin += cfg.batch_size) {
        std::vector<std::size_t> idx;
        std::vector<Aspect> batch_aspects;
        for (std::size_t i = begin; i < std::min(triples.size(), begin + cfg.batch_size); ++i) {
            idx.push_back(i);
            batch_aspects.push_back(aspects[i]);
        }
        auto out = absa_forward_batch(model, gather_matrix(emb, idx, cfg.dim),
                                      gate_input_matrix(cfg, provider, emb, idx, batch_aspects),
                                      batch_aspects);
        for (int r = 0; r < out.class_probs.rows; ++r) {
            int best = 0;
            for (int c = 1; c < out.class_probs.cols; ++c)
                if (out.class_probs.at(r, c) > out.class_probs.at(r, best)) best = c;
            preds.push_back(best);
        }
    }
    return preds;
}

EvalResult evaluate_absa(AbsaModel& model, const std::vector<ReviewRecord>& records,
                         const EmbeddingProvider& provider) {
    if (records.empty()) throw std::invalid_argument("evaluate_absa: empty test set");
    const StageConfig& cfg = model.config;
    std::vector<Aspect> aspects;
    std::vector<int> labels;
    for (const auto& rec : records) {
        aspects.push_back(triple_aspect(rec));
        labels.push_back(triple_label(rec));
    }
    const auto emb = embed_all(records, provider);

    std::vector<int> preds;
    std::vector<std::vector<double>> scores(kNumSentiments);
    std::vector<std::vector<int>> bin_labels(kNumSentiments);
    std::vector<Tensor> prob_batches;
    std::vector<RoutingPlan> plans;
    std::vector<std::vector<double>> heat_sum(
        static_cast<std::size_t>(cfg.gate.n_experts), std::vector<double>(kNumAspects, 0.0));
    std::vector<long> heat_count(kNumAspects, 0);

    for (std::size_t begin = 0; begin < records.size(); begin += cfg.batch_size) {
        std::vector<std::size_t> idx;
        std::vector<Aspect> batch_aspects;
        for (std::size_t i = begin; i < std::min(records.size(), begin + cfg.batch_size); ++i) {
            idx.push_back(i);
            batch_aspects.push_back(aspects[i]);
        }
        auto out = absa_forward_batch(model, gather_matrix(emb, idx, cfg.dim),
                                      gate_input_matrix(cfg, provider, emb, idx, batch_aspects),
                                      batch_aspects);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const int row = static_cast<int>(r);
            int best = 0;
            for (int c = 1; c < kNumSentiments; ++c)
                if (out.class_probs.at(row, c) > out.class_probs.at(row, best)) best = c;
            preds.push_back(best);
            for (int c = 0; c < kNumSentiments; ++c) {
                scores[c].push_back(out.class_probs.at(row, c));
                bin_labels[c].push_back(labels[idx[r]] == c ? 1 : 0);
            }
            const int a = static_cast<int>(batch_aspects[r]);
            ++heat_count[a];
            for (int e = 0; e < cfg.gate.n_experts; ++e)
                heat_sum[e][a] += out.gate_probs.at(row, e);
        }
        prob_batches.push_back(std::move(out.gate_probs));
        plans.push_back(std::move(out.plan));
    }

    EvalResult out;
    out.report = classification_report(preds, labels, kNumSentiments);
    out.pr = pr_from_scores(scores, bin_labels);
    out.cov2_soft = cov2(utilization_soft(prob_batches).u);
    out.cov2_hard = cov2(utilization_hard(plans).u);
    const std::size_t window = std::min<std::size_t>(10, plans.size());
    out.cov2_hard_window =
        cov2(utilization_hard({plans.begin(), plans.begin() + window}).u);
    out.heatmap.assign(static_cast<std::size_t>(cfg.gate.n_experts),
                       std::vector<double>(kNumAspects, 0.0));
    for (int e = 0; e < cfg.gate.n_experts; ++e)
        for (int a = 0; a < kNumAspects; ++a)
            if (heat_count[a] > 0)
                out.heatmap[e][a] = heat_sum[e][a] / static_cast<double>(heat_count[a]);
    return out;
}

// ----------------------------------------------------------- checkpoints

namespace {

std::vector<std::pair<std::string, const Tensor*>> as_const_list(
    const std::vector<std::pair<std::string, Tensor*>>& named) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (const auto& [name, t] : named) out.emplace_back(name, t);
    return out;
}

Tensor take_tensor(LoadedCheckpoint& lc, const std::string& name, int rows, int cols) {
    auto it = lc.tensors.find(name);
    if (it == lc.tensors.end())
        throw CheckpointError("checkpoint missing tensor '" + name + "'");
    if (it->second.rows != rows || it->second.cols != cols)
        throw CheckpointError("checkpoint tensor '" + name + "' has shape " +
                              it->second.shape_str() + ", expected " +
                              Tensor(rows, cols).shape_str());
    return std::move(it->second);
}

LoadedCheckpoint load_for_stage(const std::string& path, Stage expected) {
    LoadedCheckpoint lc = load_checkpoint(path);
    if (lc.config.stage != expected)
        throw CheckpointError(std::string("checkpoint stage mismatch: expected ") +
                              to_string(expected) + ", got " + to_string(lc.config.stage));
    return lc;
}

}  // namespace

void save_model(const std::string& path, SentimentModel& m, const std::string& rng_state) {
    save_checkpoint(path, m.config, as_const_list(m.named_parameters()), rng_state);
}

void save_model(const std::string& path, AcdModel& m, const std::string& rng_state) {
    save_checkpoint(path, m.config, as_const_list(m.named_parameters()), rng_state);
}

void save_model(const std::string& path, AbsaModel& m, const std::string& rng_state) {
    save_checkpoint(path, m.config, as_const_list(m.named_parameters()), rng_state);
}

SentimentModel load_sentiment_model(const std::string& path) {
    LoadedCheckpoint lc = load_for_stage(path, Stage::sentiment);
    SentimentModel m;
    m.config = lc.config;
    m.w = take_tensor(lc, "w", lc.config.dim, kNumSentiments);
    m.b = take_tensor(lc, "b", 1, kNumSentiments);
    return m;
}

AcdModel load_acd_model(const std::string& path) {
    LoadedCheckpoint lc = load_for_stage(path, Stage::acd);
    AcdModel m;
    m.config = lc.config;
    m.w = take_tensor(lc, "w", lc.config.dim, kNumAspects);
    m.b = take_tensor(lc, "b", 1, kNumAspects);
    return m;
}

AbsaModel load_absa_model(const std::string& path) {
    LoadedCheckpoint lc = load_for_stage(path, Stage::absa);
    const StageConfig& cfg = lc.config;
    const int mid = std::max(1, cfg.gate_in_dim() / 2);
    AbsaModel m;
    m.config = cfg;
    m.gate.w1 = take_tensor(lc, "gate.w1", cfg.gate_in_dim(), mid);
    m.gate.b1 = take_tensor(lc, "gate.b1", 1, mid);
    m.gate.w2 = take_tensor(lc, "gate.w2", mid, cfg.gate.n_experts);
    m.gate.b2 = take_tensor(lc, "gate.b2", 1, cfg.gate.n_experts);
    m.experts.in_dim = cfg.dim;
    m.experts.hidden = cfg.hidden;
    for (int e = 0; e < cfg.gate.n_experts; ++e) {
        const std::string p = "expert" + std::to_string(e) + ".";
        Expert ex;
        ex.w1 = take_tensor(lc, p + "w1", cfg.dim, cfg.hidden);
        ex.b1 = take_tensor(lc, p + "b1", 1, cfg.hidden);
        ex.w2 = take_tensor(lc, p + "w2", cfg.hidden, kNumSentiments);
        ex.b2 = take_tensor(lc, p + "b2", 1, kNumSentiments);
        m.experts.experts.push_back(std::move(ex));
    }
    return m;
}

}  // namespace moeabsa
