#pragma once

#include <optional>
#include <string>
#include <vector>

#include "moe_absa/config.hpp"
#include "moe_absa/metrics.hpp"
#include "moe_absa/text.hpp"

namespace moeabsa {

// ---------------------------------------------------------------- models

struct SentimentModel {
    StageConfig config;
    Tensor w, b;  // dim -> 3, softmax head

    std::vector<std::pair<std::string, Tensor*>> named_parameters();
};

struct AcdModel {
    StageConfig config;
    Tensor w, b;  // dim -> 6, per-aspect sigmoid

    std::vector<std::pair<std::string, Tensor*>> named_parameters();
};

struct AbsaModel {
    StageConfig config;
    GateParams gate;
    ExpertStack experts;

    std::vector<std::pair<std::string, Tensor*>> named_parameters();
};

SentimentModel init_sentiment_model(const StageConfig& cfg);
AcdModel init_acd_model(const StageConfig& cfg);
AbsaModel init_absa_model(const StageConfig& cfg);

// ------------------------------------------------------------- training

struct EpochReport {
    int epoch = 0;
    double mean_train_loss = 0.0;
    ClassificationReport validation;
    // absa only: validation-set load balance after this epoch
    std::optional<double> cov2_soft;
    std::optional<double> cov2_hard;
};

struct RouteTraceRow {
    long step = 0;
    int token = 0;
    Aspect aspect = Aspect::host;
    std::string routed;  // "expert:rank|expert:rank"
    int drops = 0;
    int ir_target = -1;
    std::string fr_fills;  // "expert|expert"
};

struct TrainResult {
    std::vector<EpochReport> epochs;
    std::vector<RouteTraceRow> traces;  // absa only, when requested
};

// one (review, aspect, sentiment) record per labeled aspect
std::vector<ReviewRecord> expand_triples(const std::vector<ReviewRecord>& records);

TrainResult train_sentiment(SentimentModel& model, const DatasetSplit& split,
                            const EmbeddingProvider& provider);
TrainResult train_acd(AcdModel& model, const DatasetSplit& split,
                      const EmbeddingProvider& provider);
// split must contain triples (expand_triples output)
TrainResult train_absa(AbsaModel& model, const DatasetSplit& split,
                       const EmbeddingProvider& provider, bool collect_traces = false);

struct PseudoLabelResult {
    std::vector<ReviewRecord> auto_labeled;
    std::vector<ReviewRecord> flagged_for_review;
};

// high-confidence predictions split into a manual-review head (by
// descending confidence) and an auto-accepted tail
PseudoLabelResult pseudo_label(SentimentModel& model, const EmbeddingProvider& provider,
                               const std::vector<ReviewRecord>& unlabeled, double threshold,
                               int manual_budget);

// ------------------------------------------------------------ evaluation

struct PrCurveSet {
    std::vector<std::vector<PrPoint>> per_class;
    std::vector<PrPoint> micro;
};

struct EvalResult {
    ClassificationReport report;
    PrCurveSet pr;
    // absa only
    std::optional<double> cov2_soft;
    std::optional<double> cov2_hard;
    std::optional<double> cov2_hard_window;  // first 10 batches
    std::vector<std::vector<double>> heatmap;  // experts x aspects, mean gate prob
};

EvalResult evaluate_sentiment(SentimentModel& model, const std::vector<ReviewRecord>& records,
                              const EmbeddingProvider& provider);
EvalResult evaluate_acd(AcdModel& model, const std::vector<ReviewRecord>& records,
                        const EmbeddingProvider& provider);
// records must be triples
EvalResult evaluate_absa(AbsaModel& model, const std::vector<ReviewRecord>& records,
                         const EmbeddingProvider& provider);

// per-triple sentiment prediction (argmax class indices), noiseless
std::vector<int> predict_absa(AbsaModel& model, const std::vector<ReviewRecord>& triples,
                              const EmbeddingProvider& provider);

// ----------------------------------------------------------- checkpoints

void save_model(const std::string& path, SentimentModel& m, const std::string& rng_state = "");
void save_model(const std::string& path, AcdModel& m, const std::string& rng_state = "");
void save_model(const std::string& path, AbsaModel& m, const std::string& rng_state = "");

SentimentModel load_sentiment_model(const std::string& path);
AcdModel load_acd_model(const std::string& path);
AbsaModel load_absa_model(const std::string& path);

// number of worker contexts for evaluation embedding, from MOE_ABSA_THREADS
int eval_thread_count();

}  // namespace moeabsa
