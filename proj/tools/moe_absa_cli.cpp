#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "moe_absa/checkpoint.hpp"
#include "moe_absa/csv.hpp"
#include "moe_absa/pipeline.hpp"

using namespace moeabsa;
using nlohmann::ordered_json;

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    f << content;
}

// ------------------------------------------------------------ config file

// flat key=value lines; '#' starts a comment; unknown keys are an error
void apply_config_file(StageConfig& cfg, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot read config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        line.erase(0, start);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config file line " + std::to_string(lineno) +
                                        ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        auto as_bool = [&] {
            if (val == "true" || val == "1") return true;
            if (val == "false" || val == "0") return false;
            throw std::invalid_argument("config key '" + key + "': expected boolean, got '" +
                                        val + "'");
        };
        try {
            if (key == "lr") cfg.lr = std::stod(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "epochs") cfg.epochs = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "dim") cfg.dim = std::stoi(val);
            else if (key == "hidden") cfg.hidden = std::stoi(val);
            else if (key == "n_experts") cfg.gate.n_experts = std::stoi(val);
            else if (key == "top_k") cfg.gate.top_k = std::stoi(val);
            else if (key == "capacity_factor") cfg.gate.capacity_factor = std::stod(val);
            else if (key == "noise_scale") cfg.gate.noise_scale = std::stod(val);
            else if (key == "n_groups") cfg.gate.n_groups = std::stoi(val);
            else if (key == "lambda_aux") cfg.loss.lambda_aux = std::stod(val);
            else if (key == "lambda_mse") cfg.loss.lambda_mse = std::stod(val);
            else if (key == "enable_aux") cfg.loss.enable_aux = as_bool();
            else if (key == "enable_mse") cfg.loss.enable_mse = as_bool();
            else if (key == "routing") cfg.routing = routing_from_string(val);
            else if (key == "gate_concat_sentence") cfg.gate_concat_sentence = as_bool();
            else if (key == "gate_bias_skew") cfg.gate_bias_skew = std::stod(val);
            else if (key == "enable_ir") cfg.enable_ir = as_bool();
            else if (key == "enable_fr") cfg.enable_fr = as_bool();
            else
                throw std::invalid_argument("config file line " + std::to_string(lineno) +
                                            ": unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config key '" + key + "': bad value '" + val + "'");
        }
    }
}

// --------------------------------------------------------------- reports

ordered_json report_json(const ClassificationReport& rep) {
    auto cm = [](const ClassMetrics& m) {
        return ordered_json{{"precision", m.precision},
                            {"recall", m.recall},
                            {"f1", m.f1},
                            {"support", m.support}};
    };
    ordered_json j;
    j["per_class"] = ordered_json::array();
    for (const auto& m : rep.per_class) j["per_class"].push_back(cm(m));
    j["weighted"] = cm(rep.weighted);
    j["micro"] = cm(rep.micro);
    if (!rep.confusion.empty()) j["confusion"] = rep.confusion;
    return j;
}

ordered_json epochs_json(const TrainResult& tr) {
    ordered_json arr = ordered_json::array();
    for (const auto& er : tr.epochs) {
        ordered_json e;
        e["epoch"] = er.epoch;
        e["mean_train_loss"] = er.mean_train_loss;
        if (!er.validation.per_class.empty()) e["validation"] = report_json(er.validation);
        if (er.cov2_soft) e["cov2_soft"] = *er.cov2_soft;
        if (er.cov2_hard) e["cov2_hard"] = *er.cov2_hard;
        arr.push_back(std::move(e));
    }
    return arr;
}

std::string heatmap_csv(const std::vector<std::vector<double>>& heatmap) {
    std::ostringstream os;
    for (int a = 0; a < kNumAspects; ++a)
        os << (a ? "," : "") << to_string(static_cast<Aspect>(a));
    os << '\n';
    for (const auto& row : heatmap) {
        for (int a = 0; a < kNumAspects; ++a) os << (a ? "," : "") << fmt(row[a]);
        os << '\n';
    }
    return os.str();
}

std::string pr_csv(const PrCurveSet& pr, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << "class,threshold,precision,recall\n";
    for (std::size_t c = 0; c < pr.per_class.size(); ++c)
        for (const auto& p : pr.per_class[c])
            os << class_names[c] << ',' << fmt(p.threshold) << ',' << fmt(p.precision) << ','
               << fmt(p.recall) << '\n';
    for (const auto& p : pr.micro)
        os << "micro," << fmt(p.threshold) << ',' << fmt(p.precision) << ',' << fmt(p.recall)
           << '\n';
    return os.str();
}

std::string trace_csv(const std::vector<RouteTraceRow>& traces) {
    std::ostringstream os;
    os << "step,token,aspect,routed,drops,ir_target,fr_fills\n";
    for (const auto& r : traces)
        os << r.step << ',' << r.token << ',' << to_string(r.aspect) << ',' << r.routed << ','
           << r.drops << ',' << r.ir_target << ',' << r.fr_fills << '\n';
    return os.str();
}

std::vector<std::string> sentiment_names() {
    std::vector<std::string> v;
    for (int s = 0; s < kNumSentiments; ++s) v.push_back(to_string(static_cast<Sentiment>(s)));
    return v;
}

std::vector<std::string> aspect_names() {
    std::vector<std::string> v;
    for (int a = 0; a < kNumAspects; ++a) v.push_back(to_string(static_cast<Aspect>(a)));
    return v;
}

// ----------------------------------------------------------- subcommands

int cmd_preprocess(const std::string& in_path, const std::string& out_path,
                   const std::string& spelling_path) {
    SpellingTable table =
        spelling_path.empty() ? SpellingTable::defaults() : SpellingTable::load(spelling_path);
    auto rows = csv::read_file(in_path);
    if (rows.empty()) throw std::runtime_error("preprocess: empty file, expected header row");
    int ci_review = -1;
    for (std::size_t j = 0; j < rows[0].size(); ++j)
        if (rows[0][j] == "review") ci_review = static_cast<int>(j);
    if (ci_review < 0) throw std::runtime_error("preprocess: missing 'review' column");

    std::ostringstream out;
    csv::write_row(out, rows[0]);
    long rows_in = 0, rows_out = 0, rejected = 0, replaced = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        auto row = rows[i];
        if (row.size() == 1 && row[0].empty()) continue;
        ++rows_in;
        if (row.size() <= static_cast<std::size_t>(ci_review)) {
            ++rejected;
            continue;
        }
        const std::string norm = normalize_text(row[ci_review], &table);
        if (norm != row[ci_review]) ++replaced;
        row[ci_review] = norm;
        csv::write_row(out, row);
        ++rows_out;
    }
    write_text(out_path, out.str());
    std::cout << "rows_in=" << rows_in << " rows_out=" << rows_out << " rejected=" << rejected
              << " normalized=" << replaced << "\n";
    return 0;
}

int cmd_synth(std::uint64_t seed, int n, double multi_aspect_prob, const std::string& out_path) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.n_records = n;
    cfg.multi_aspect_prob = multi_aspect_prob;
    auto records = synth_corpus(cfg);
    export_csv(out_path, records);

    std::array<std::array<long, 3>, kNumAspects> counts{};
    long total = 0;
    for (const auto& rec : records)
        for (const auto& [a, s] : rec.sentiments) {
            ++counts[static_cast<int>(a)][static_cast<int>(s)];
            ++total;
        }
    std::cout << "seed=" << seed << " records=" << records.size() << " labels=" << total << "\n";
    for (int a = 0; a < kNumAspects; ++a) {
        std::cout << to_string(static_cast<Aspect>(a)) << ":";
        for (int s = 0; s < kNumSentiments; ++s)
            std::cout << ' ' << to_string(static_cast<Sentiment>(s)) << '='
                      << fmt(static_cast<double>(counts[a][s]) / static_cast<double>(total));
        std::cout << "\n";
    }
    return 0;
}

struct TrainPaths {
    std::string data, checkpoint, metrics, heatmap, trace, embeddings;
};

int cmd_train(Stage stage, const StageConfig& cfg, const TrainPaths& paths) {
    auto ingest = ingest_csv(paths.data);
    if (ingest.records.empty()) throw std::runtime_error("train: no usable records in " + paths.data);
    DatasetSplit split = split_dataset(ingest.records, {0.8, 0.1, 0.1}, cfg.seed);
    EmbeddingProvider provider = paths.embeddings.empty()
                                     ? EmbeddingProvider::hashed(cfg.dim, cfg.seed)
                                     : EmbeddingProvider::precomputed(paths.embeddings);
    if (provider.dim() != cfg.dim)
        throw std::invalid_argument("embedding dim " + std::to_string(provider.dim()) +
                                    " does not match configured dim " + std::to_string(cfg.dim));

    ordered_json metrics;
    metrics["command"] = std::string("train ") + to_string(stage);
    metrics["seed"] = cfg.seed;
    metrics["config"] = config_to_json(cfg);
    metrics["data"] = paths.data;
    metrics["rejected_rows"] = ingest.rejected_rows;
    metrics["split"] = {{"train", split.train.size()},
                        {"validation", split.validation.size()},
                        {"test", split.test.size()}};

    const std::string rng_state = Rng(cfg.seed).serialize();
    TrainResult tr;
    if (stage == Stage::sentiment) {
        SentimentModel model = init_sentiment_model(cfg);
        tr = train_sentiment(model, split, provider);
        metrics["epochs"] = epochs_json(tr);
        save_model(paths.checkpoint, model, rng_state);
    } else if (stage == Stage::acd) {
        AcdModel model = init_acd_model(cfg);
        tr = train_acd(model, split, provider);
        metrics["epochs"] = epochs_json(tr);
        save_model(paths.checkpoint, model, rng_state);
    } else {
        DatasetSplit triples;
        triples.seed = split.seed;
        triples.train = expand_triples(split.train);
        triples.validation = expand_triples(split.validation);
        triples.test = expand_triples(split.test);
        metrics["triples"] = {{"train", triples.train.size()},
                              {"validation", triples.validation.size()},
                              {"test", triples.test.size()}};
        AbsaModel model = init_absa_model(cfg);
        tr = train_absa(model, triples, provider, !paths.trace.empty());
        metrics["epochs"] = epochs_json(tr);

        const auto& heat_set = !triples.validation.empty() ? triples.validation : triples.train;
        EvalResult ev = evaluate_absa(model, heat_set, provider);
        metrics["cov2_soft"] = *ev.cov2_soft;
        metrics["cov2_hard"] = *ev.cov2_hard;
        metrics["cov2_hard_10batch"] = *ev.cov2_hard_window;
        if (!paths.heatmap.empty()) write_text(paths.heatmap, heatmap_csv(ev.heatmap));
        if (!paths.trace.empty()) write_text(paths.trace, trace_csv(tr.traces));
        save_model(paths.checkpoint, model, rng_state);
    }
    write_text(paths.metrics, metrics.dump(2) + "\n");

    if (!tr.epochs.empty() && !tr.epochs.back().validation.per_class.empty())
        std::cout << "validation_weighted_f1=" << fmt(tr.epochs.back().validation.weighted.f1)
                  << "\n";
    std::cout << "checkpoint=" << paths.checkpoint << " metrics=" << paths.metrics
              << " seed=" << cfg.seed << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& metrics_path, const std::string& pr_path,
             const std::string& heatmap_path, const std::string& embeddings_path) {
    LoadedCheckpoint probe = load_checkpoint(ckpt_path);
    const StageConfig cfg = probe.config;
    auto ingest = ingest_csv(data_path);
    if (ingest.records.empty()) throw std::runtime_error("eval: no usable records in " + data_path);
    EmbeddingProvider provider = embeddings_path.empty()
                                     ? EmbeddingProvider::hashed(cfg.dim, cfg.seed)
                                     : EmbeddingProvider::precomputed(embeddings_path);

    ordered_json metrics;
    metrics["command"] = "eval";
    metrics["seed"] = cfg.seed;
    metrics["stage"] = to_string(cfg.stage);
    metrics["config"] = config_to_json(cfg);
    metrics["data"] = data_path;

    EvalResult ev;
    std::vector<std::string> names;
    if (cfg.stage == Stage::sentiment) {
        SentimentModel model = load_sentiment_model(ckpt_path);
        ev = evaluate_sentiment(model, ingest.records, provider);
        names = sentiment_names();
    } else if (cfg.stage == Stage::acd) {
        AcdModel model = load_acd_model(ckpt_path);
        ev = evaluate_acd(model, ingest.records, provider);
        names = aspect_names();
    } else {
        AbsaModel model = load_absa_model(ckpt_path);
        auto triples = expand_triples(ingest.records);
        ev = evaluate_absa(model, triples, provider);
        names = sentiment_names();
        metrics["cov2_soft"] = *ev.cov2_soft;
        metrics["cov2_hard"] = *ev.cov2_hard;
        metrics["cov2_hard_10batch"] = *ev.cov2_hard_window;
        if (!heatmap_path.empty()) write_text(heatmap_path, heatmap_csv(ev.heatmap));
    }
    metrics["report"] = report_json(ev.report);
    write_text(metrics_path, metrics.dump(2) + "\n");
    if (!pr_path.empty()) write_text(pr_path, pr_csv(ev.pr, names));

    std::cout << "weighted_f1=" << fmt(ev.report.weighted.f1);
    if (ev.cov2_soft)
        std::cout << " cov2_soft=" << fmt(*ev.cov2_soft) << " cov2_hard=" << fmt(*ev.cov2_hard)
                  << " cov2_hard_10batch=" << fmt(*ev.cov2_hard_window);
    std::cout << " seed=" << cfg.seed << "\n";
    return 0;
}

int cmd_route_stats(const std::string& trace_path, const std::string& heatmap_path) {
    auto rows = csv::read_file(trace_path);
    if (rows.empty() || rows[0].empty() || rows[0][0] != "step")
        throw std::runtime_error("route-stats: not a routing trace file");

    // slot counts per (expert, aspect) recomputed from routed + ir + fr columns
    std::map<int, std::vector<long>> counts;  // expert -> per-aspect
    std::vector<long> aspect_tokens(kNumAspects, 0);
    long drops = 0;
    auto bump = [&](int expert, int aspect, int mult) {
        auto& v = counts[expert];
        if (v.empty()) v.assign(kNumAspects, 0);
        v[aspect] += mult;
    };
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() < 7)
            throw std::runtime_error("route-stats: bad trace row " + std::to_string(i));
        auto aspect = aspect_from_string(row[2]);
        if (!aspect) throw std::runtime_error("route-stats: unknown aspect in row " +
                                              std::to_string(i));
        const int a = static_cast<int>(*aspect);
        ++aspect_tokens[a];
        drops += std::stol(row[4]);
        std::stringstream routed(row[3]);
        std::string part;
        while (std::getline(routed, part, '|')) {
            const auto colon = part.find(':');
            if (colon != std::string::npos) bump(std::stoi(part.substr(0, colon)), a, 1);
        }
        const int ir = std::stoi(row[5]);
        if (ir >= 0) bump(ir, a, 1);
        std::stringstream fr(row[6]);
        while (std::getline(fr, part, '|'))
            if (!part.empty()) bump(std::stoi(part), a, 1);
    }
    const int n_experts = counts.empty() ? 0 : counts.rbegin()->first + 1;
    std::vector<double> u(static_cast<std::size_t>(n_experts), 0.0);
    double total = 0.0;
    std::vector<std::vector<double>> heatmap(static_cast<std::size_t>(n_experts),
                                             std::vector<double>(kNumAspects, 0.0));
    for (const auto& [e, per_aspect] : counts)
        for (int a = 0; a < kNumAspects; ++a) {
            u[e] += static_cast<double>(per_aspect[a]);
            total += static_cast<double>(per_aspect[a]);
            if (aspect_tokens[a] > 0)
                heatmap[e][a] =
                    static_cast<double>(per_aspect[a]) / static_cast<double>(aspect_tokens[a]);
        }
    if (total <= 0.0) throw std::runtime_error("route-stats: trace contains no routed slots");
    for (auto& x : u) x /= total;

    if (!heatmap_path.empty()) write_text(heatmap_path, heatmap_csv(heatmap));
    std::cout << "tokens=" << rows.size() - 1 << " drops=" << drops
              << " cov2_hard=" << fmt(cov2(u)) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse mixture-of-experts pipeline for Persian aspect-based sentiment analysis"};
    app.require_subcommand(1);

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "Normalize review text in a CSV file");
    std::string pre_in, pre_out, pre_spelling;
    pre->add_option("input", pre_in, "input CSV")->required();
    pre->add_option("output", pre_out, "output CSV")->required();
    pre->add_option("--spelling", pre_spelling, "wrong,correct spelling CSV");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
    std::uint64_t synth_seed = 42;
    int synth_n = 1000;
    double synth_map = 0.25;
    std::string synth_out = "synth.csv";
    synth->add_option("--seed", synth_seed, "rng seed")->capture_default_str();
    synth->add_option("--n", synth_n, "number of records")->capture_default_str();
    synth->add_option("--multi-aspect-prob", synth_map, "chance of a second aspect")
        ->capture_default_str();
    synth->add_option("--out", synth_out, "output CSV")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "Train one pipeline stage");
    std::string train_stage;
    TrainPaths tp;
    std::string config_file;
    train->add_option("stage", train_stage, "sentiment|acd|absa")->required();
    train->add_option("--data", tp.data, "labeled CSV")->required();
    train->add_option("--checkpoint", tp.checkpoint, "checkpoint output path");
    train->add_option("--metrics", tp.metrics, "metrics JSON output path");
    train->add_option("--heatmap", tp.heatmap, "gate heatmap CSV (absa)");
    train->add_option("--trace", tp.trace, "routing trace CSV (absa)");
    train->add_option("--embeddings", tp.embeddings, "precomputed embedding CSV");
    train->add_option("--config", config_file, "flat key=value config file");
    double f_lr = 0;
    int f_batch = 0, f_epochs = 0, f_dim = 0, f_hidden = 0, f_experts = 0, f_topk = 0,
        f_groups = 0;
    std::uint64_t f_seed = 0;
    double f_cf = 0, f_noise = 0, f_laux = 0, f_lmse = 0, f_skew = 0;
    std::string f_routing;
    bool f_no_aux = false, f_no_mse = false, f_no_ir = false, f_no_fr = false,
         f_concat = false;
    train->add_option("--lr", f_lr, "learning rate (default: stage value)");
    train->add_option("--batch-size", f_batch, "batch size (default: stage value)");
    train->add_option("--epochs", f_epochs, "epochs (default: stage value)");
    train->add_option("--seed", f_seed, "rng seed (default 42)");
    train->add_option("--dim", f_dim, "embedding width (default 256)");
    train->add_option("--hidden", f_hidden, "expert hidden width (default 256)");
    train->add_option("--experts", f_experts, "number of experts (default 6)");
    train->add_option("--top-k", f_topk, "experts per token (default 3)");
    train->add_option("--capacity-factor", f_cf, "capacity factor (default 1.8)");
    train->add_option("--noise-scale", f_noise, "gate noise scale (default 0.098323)");
    train->add_option("--groups", f_groups, "routing groups (default 1)");
    train->add_option("--lambda-aux", f_laux, "importance loss weight (default 0.011822)");
    train->add_option("--lambda-mse", f_lmse, "uniform-mse loss weight (default 0.011822)");
    train->add_flag("--no-aux", f_no_aux, "disable the importance loss");
    train->add_flag("--no-mse", f_no_mse, "disable the uniform-mse loss");
    train->add_option("--routing", f_routing, "dynamic|hard_gate (default dynamic)");
    train->add_flag("--gate-concat-sentence", f_concat,
                    "gate sees aspect + sentence embedding");
    train->add_option("--gate-bias-skew", f_skew, "initial gate bias on the low experts");
    train->add_flag("--no-ir", f_no_ir, "disable intra-group rectification");
    train->add_flag("--no-fr", f_no_fr, "disable fill-in rectification");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_metrics = "eval_metrics.json", ev_pr = "pr.csv",
                                  ev_heatmap, ev_embeddings;
    eval->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
    eval->add_option("--data", ev_data, "labeled CSV")->required();
    eval->add_option("--metrics", ev_metrics, "metrics JSON output path")->capture_default_str();
    eval->add_option("--pr", ev_pr, "precision-recall CSV output path")->capture_default_str();
    eval->add_option("--heatmap", ev_heatmap, "gate heatmap CSV (absa)");
    eval->add_option("--embeddings", ev_embeddings, "precomputed embedding CSV");

    // route-stats
    auto* rs = app.add_subcommand("route-stats", "Recompute heatmap and COV2 from a trace");
    std::string rs_trace, rs_heatmap;
    rs->add_option("--trace", rs_trace, "routing trace CSV")->required();
    rs->add_option("--heatmap", rs_heatmap, "heatmap CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*pre) return cmd_preprocess(pre_in, pre_out, pre_spelling);
        if (*synth) return cmd_synth(synth_seed, synth_n, synth_map, synth_out);
        if (*train) {
            const Stage stage = stage_from_string(train_stage);
            StageConfig cfg = StageConfig::defaults(stage);
            if (!config_file.empty()) apply_config_file(cfg, config_file);
            if (train->count("--lr")) cfg.lr = f_lr;
            if (train->count("--batch-size")) cfg.batch_size = f_batch;
            if (train->count("--epochs")) cfg.epochs = f_epochs;
            if (train->count("--seed")) cfg.seed = f_seed;
            if (train->count("--dim")) cfg.dim = f_dim;
            if (train->count("--hidden")) cfg.hidden = f_hidden;
            if (train->count("--experts")) cfg.gate.n_experts = f_experts;
            if (train->count("--top-k")) cfg.gate.top_k = f_topk;
            if (train->count("--capacity-factor")) cfg.gate.capacity_factor = f_cf;
            if (train->count("--noise-scale")) cfg.gate.noise_scale = f_noise;
            if (train->count("--groups")) cfg.gate.n_groups = f_groups;
            if (train->count("--lambda-aux")) cfg.loss.lambda_aux = f_laux;
            if (train->count("--lambda-mse")) cfg.loss.lambda_mse = f_lmse;
            if (f_no_aux) cfg.loss.enable_aux = false;
            if (f_no_mse) cfg.loss.enable_mse = false;
            if (train->count("--routing")) cfg.routing = routing_from_string(f_routing);
            if (f_concat) cfg.gate_concat_sentence = true;
            if (train->count("--gate-bias-skew")) cfg.gate_bias_skew = f_skew;
            if (f_no_ir) cfg.enable_ir = false;
            if (f_no_fr) cfg.enable_fr = false;
            if (tp.checkpoint.empty()) tp.checkpoint = train_stage + ".ckpt";
            if (tp.metrics.empty()) tp.metrics = train_stage + "_metrics.json";
            return cmd_train(stage, cfg, tp);
        }
        if (*eval)
            return cmd_eval(ev_ckpt, ev_data, ev_metrics, ev_pr, ev_heatmap, ev_embeddings);
        if (*rs) return cmd_route_stats(rs_trace, rs_heatmap);
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
