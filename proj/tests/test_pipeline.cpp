#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "moe_absa/checkpoint.hpp"
#include "moe_absa/pipeline.hpp"

using namespace moeabsa;

namespace {

DatasetSplit make_split(int n, std::uint64_t seed, double multi = 0.25) {
    auto records = synth_corpus({.seed = seed, .n_records = n, .multi_aspect_prob = multi});
    records.resize(n);
    return split_dataset(std::move(records), {0.8, 0.1, 0.1}, seed);
}

DatasetSplit as_triples(DatasetSplit sp) {
    sp.train = expand_triples(sp.train);
    sp.validation = expand_triples(sp.validation);
    sp.test = expand_triples(sp.test);
    return sp;
}

StageConfig fast_absa_config() {
    StageConfig cfg = StageConfig::defaults(Stage::absa);
    cfg.dim = 64;
    cfg.hidden = 32;
    cfg.lr = 1e-3;
    cfg.epochs = 2;
    return cfg;
}

}  // namespace

TEST_CASE("expand_triples: one record per labeled aspect") {
    auto records = synth_corpus({.seed = 3, .n_records = 500, .multi_aspect_prob = 0.5});
    auto triples = expand_triples(records);
    std::size_t want = 0;
    for (const auto& r : records) want += r.sentiments.size();
    CHECK(triples.size() == want);
    CHECK(triples.size() > records.size());  // some multi-aspect records exist
    for (const auto& t : triples) {
        CHECK(t.sentiments.size() == 1);
        CHECK(t.aspects.size() == 1);
        CHECK(t.id.find('#') != std::string::npos);
    }
    // already-expanded input is a fixed point (ids gain another suffix)
    auto again = expand_triples(triples);
    CHECK(again.size() == triples.size());
}

TEST_CASE("train_sentiment: separable corpus reaches 0.95 weighted f1") {
    auto split = make_split(600, 11);
    StageConfig cfg = StageConfig::defaults(Stage::sentiment);
    cfg.lr = 0.05;  // fast head for the hashed encoder, in place of the
                    // fidelity-run setting
    cfg.seed = 11;
    auto provider = EmbeddingProvider::hashed(cfg.dim, cfg.seed);
    auto model = init_sentiment_model(cfg);
    auto result = train_sentiment(model, split, provider);
    REQUIRE(static_cast<int>(result.epochs.size()) == cfg.epochs);
    CHECK(result.epochs.back().validation.weighted.f1 >= 0.95);
    CHECK(result.epochs.back().mean_train_loss < result.epochs.front().mean_train_loss);
}

TEST_CASE("train_sentiment: determinism and config validation") {
    auto split = make_split(200, 7);
    StageConfig cfg = StageConfig::defaults(Stage::sentiment);
    cfg.lr = 0.05;
    cfg.epochs = 2;
    auto provider = EmbeddingProvider::hashed(cfg.dim, cfg.seed);

    auto m1 = init_sentiment_model(cfg);
    auto r1 = train_sentiment(m1, split, provider);
    auto m2 = init_sentiment_model(cfg);
    auto r2 = train_sentiment(m2, split, provider);
    CHECK(m1.w.v == m2.w.v);  // bit-identical
    CHECK(r1.epochs[0].mean_train_loss == r2.epochs[0].mean_train_loss);

    StageConfig bad = cfg;
    bad.epochs = 0;
    auto mb = init_sentiment_model(cfg);
    CHECK_THROWS_AS((mb.config = bad, train_sentiment(mb, split, provider)),
                    std::invalid_argument);
    bad = cfg;
    bad.lr = 0.0;
    CHECK_THROWS_AS((mb.config = bad, train_sentiment(mb, split, provider)),
                    std::invalid_argument);

    DatasetSplit empty_labels = split;
    for (auto& r : empty_labels.train) r.overall_sentiment.reset();
    auto me = init_sentiment_model(cfg);
    CHECK_THROWS_AS(train_sentiment(me, empty_labels, provider), std::invalid_argument);
}

TEST_CASE("pseudo_label: confidence partition and budget") {
    auto split = make_split(400, 13);
    StageConfig cfg = StageConfig::defaults(Stage::sentiment);
    cfg.lr = 0.05;
    auto provider = EmbeddingProvider::hashed(cfg.dim, cfg.seed);
    auto model = init_sentiment_model(cfg);
    train_sentiment(model, split, provider);

    auto unlabeled = split.test;
    for (auto& r : unlabeled) r.overall_sentiment.reset();

    auto res = pseudo_label(model, provider, unlabeled, 0.8, 5);
    CHECK(res.auto_labeled.size() + res.flagged_for_review.size() <= unlabeled.size());
    CHECK(res.flagged_for_review.size() <= 5);
    for (const auto& r : res.auto_labeled) CHECK(r.overall_sentiment.has_value());
    for (const auto& r : res.flagged_for_review) CHECK(r.overall_sentiment.has_value());
    // each output id appears exactly once and comes from the input
    std::set<std::string> ids;
    for (const auto& r : res.auto_labeled) CHECK(ids.insert(r.id).second);
    for (const auto& r : res.flagged_for_review) CHECK(ids.insert(r.id).second);

    auto none_flagged = pseudo_label(model, provider, unlabeled, 0.8, 0);
    CHECK(none_flagged.flagged_for_review.empty());
    CHECK(none_flagged.auto_labeled.size() == ids.size());

    auto strict = pseudo_label(model, provider, unlabeled, 1.0, 2);
    CHECK(strict.auto_labeled.size() + strict.flagged_for_review.size() <= ids.size());

    CHECK_THROWS_AS(pseudo_label(model, provider, unlabeled, 0.5, 2), std::invalid_argument);
    CHECK_THROWS_AS(pseudo_label(model, provider, unlabeled, 1.01, 2), std::invalid_argument);
    CHECK_THROWS_AS(pseudo_label(model, provider, unlabeled, 0.8, -1), std::invalid_argument);
}

TEST_CASE("train_acd: aspect detection reaches 0.90 weighted f1") {
    auto split = make_split(800, 17, 0.5);
    StageConfig cfg = StageConfig::defaults(Stage::acd);
    cfg.lr = 0.05;
    cfg.seed = 17;
    auto provider = EmbeddingProvider::hashed(cfg.dim, cfg.seed);
    auto model = init_acd_model(cfg);
    auto result = train_acd(model, split, provider);
    REQUIRE(static_cast<int>(result.epochs.size()) == cfg.epochs);
    CHECK(result.epochs.back().validation.weighted.f1 >= 0.90);

    // records without any aspect label still train (all-negative targets)
    DatasetSplit with_blank = split;
    with_blank.train[0].aspects.clear();
    with_blank.train[0].sentiments.clear();
    auto m2 = init_acd_model(cfg);
    CHECK_NOTHROW(train_acd(m2, with_blank, provider));
}

TEST_CASE("train_absa: epoch reports, balance diagnostics, zero drops") {
    auto split = as_triples(make_split(300, 23));
    StageConfig cfg = fast_absa_config();
    auto provider = EmbeddingProvider::hashed(cfg.dim, cfg.seed);
    auto model = init_absa_model(cfg);
    auto result = train_absa(model, split, provider, /*collect_traces=*/true);
    REQUIRE(static_cast<int>(result.epochs.size()) == cfg.epochs);
    for (const auto& er : result.epochs) {
        REQUIRE(er.cov2_soft.has_value());
        REQUIRE(er.cov2_hard.has_value());
        CHECK(*er.cov2_soft >= 0.0);
        CHECK(*er.cov2_hard >= 0.0);
    }
    REQUIRE(!result.traces.empty());
    CHECK(result.traces.size() == split.train.size() * cfg.epochs);
    for (const auto& row : result.traces) {
        CHECK(row.drops == 0);  // IR leaves nothing dropped at these settings
        CHECK(!row.routed.empty());
    }
    // traces are ordered by step, then token
    for (std::size_t i = 1; i < result.traces.size(); ++i) {
        const auto& a = result.traces[i - 1];
        const auto& b = result.traces[i];
        CHECK((a.step < b.step || (a.step == b.step && a.token < b.token)));
    }
}

TEST_CASE("train_absa: hard gate pins every triple to its aspect expert") {
    auto split = as_triples(make_split(200, 29));
    StageConfig cfg = fast_absa_config();
    cfg.routing = Routing::hard_gate;
    auto provider = EmbeddingProvider::hashed(cfg.dim, cfg.seed);
    auto model = init_absa_model(cfg);
    auto result = train_absa(model, split, provider, /*collect_traces=*/true);
    REQUIRE(!result.traces.empty());
    for (const auto& row : result.traces) {
        const std::string want = std::to_string(hard_gate_route(row.aspect)) + ":0";
        CHECK(row.routed == want);
        CHECK(row.drops == 0);
        CHECK(row.ir_target == -1);
        CHECK(row.fr_fills.empty());
    }
}

TEST_CASE("train_absa: determinism per seed and triple precondition") {
    auto split = as_triples(make_split(120, 31));
    StageConfig cfg = fast_absa_config();
    cfg.epochs = 1;
    auto provider = EmbeddingProvider::hashed(cfg.dim, cfg.seed);

    auto m1 = init_absa_model(cfg);
    auto r1 = train_absa(m1, split, provider);
    auto m2 = init_absa_model(cfg);
    auto r2 = train_absa(m2, split, provider);
    CHECK(m1.gate.w2.v == m2.gate.w2.v);
    CHECK(m1.experts.experts[0].w1.v == m2.experts.experts[0].w1.v);
    CHECK(r1.epochs[0].mean_train_loss == r2.epochs[0].mean_train_loss);

    auto unexpanded = make_split(60, 31, 0.9);
    bool has_multi = false;
    for (const auto& r : unexpanded.train) has_multi |= r.sentiments.size() > 1;
    REQUIRE(has_multi);
    auto m3 = init_absa_model(cfg);
    CHECK_THROWS_AS(train_absa(m3, unexpanded, provider), std::invalid_argument);
}

TEST_CASE("init_absa_model applies the gate bias skew knob") {
    StageConfig cfg = fast_absa_config();
    cfg.gate_bias_skew = 0.5;
    auto model = init_absa_model(cfg);
    for (int e = 0; e < cfg.gate.n_experts; ++e) {
        if (e < cfg.gate.n_experts / 2)
            CHECK(model.gate.b2.at(0, e) == doctest::Approx(0.5));
        else
            CHECK(model.gate.b2.at(0, e) == doctest::Approx(0.0));
    }
}

TEST_CASE("evaluate_absa: heatmap, pr curves, and determinism") {
    auto split = as_triples(make_split(250, 37));
    StageConfig cfg = fast_absa_config();
    auto provider = EmbeddingProvider::hashed(cfg.dim, cfg.seed);
    auto model = init_absa_model(cfg);
    train_absa(model, split, provider);

    auto ev1 = evaluate_absa(model, split.validation, provider);
    auto ev2 = evaluate_absa(model, split.validation, provider);
    CHECK(ev1.report.weighted.f1 == ev2.report.weighted.f1);
    REQUIRE(ev1.cov2_soft.has_value());
    REQUIRE(ev1.cov2_hard.has_value());
    REQUIRE(ev1.cov2_hard_window.has_value());

    REQUIRE(static_cast<int>(ev1.heatmap.size()) == cfg.gate.n_experts);
    for (const auto& row : ev1.heatmap) {
        REQUIRE(static_cast<int>(row.size()) == kNumAspects);
        for (double x : row) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }
    // each aspect column is a probability distribution over experts
    for (int a = 0; a < kNumAspects; ++a) {
        double col = 0;
        for (int e = 0; e < cfg.gate.n_experts; ++e) col += ev1.heatmap[e][a];
        if (col > 0)  // aspect present in the validation triples
            CHECK(col == doctest::Approx(1.0).epsilon(1e-9));
    }

    REQUIRE(static_cast<int>(ev1.pr.per_class.size()) == kNumSentiments);
    CHECK(!ev1.pr.micro.empty());

    long support = 0;
    for (const auto& c : ev1.report.per_class) support += c.support;
    CHECK(support == static_cast<long>(split.validation.size()));

    CHECK_THROWS_AS(evaluate_absa(model, {}, provider), std::invalid_argument);
}

TEST_CASE("predict_absa is deterministic and noiseless") {
    auto split = as_triples(make_split(150, 41));
    StageConfig cfg = fast_absa_config();
    cfg.gate.noise_scale = 0.5;  // must not affect prediction
    auto provider = EmbeddingProvider::hashed(cfg.dim, cfg.seed);
    auto model = init_absa_model(cfg);
    auto p1 = predict_absa(model, split.test, provider);
    auto p2 = predict_absa(model, split.test, provider);
    CHECK(p1 == p2);
    CHECK(p1.size() == split.test.size());
    for (int y : p1) {
        CHECK(y >= 0);
        CHECK(y < kNumSentiments);
    }
}

TEST_CASE("checkpoints: round trip across all three stages") {
    const std::string path = "ckpt_tmp.bin";
    auto provider32 = EmbeddingProvider::hashed(32, 1);

    StageConfig scfg = StageConfig::defaults(Stage::sentiment);
    scfg.dim = 32;
    auto sm = init_sentiment_model(scfg);
    save_model(path, sm, "rng:123");
    auto sm2 = load_sentiment_model(path);
    CHECK(sm2.config.stage == Stage::sentiment);
    CHECK(sm2.config.lr == scfg.lr);
    // payload is stored in 32-bit floats; the load restores exactly that
    for (std::size_t i = 0; i < sm.w.v.size(); ++i)
        CHECK(sm2.w.v[i] == static_cast<double>(static_cast<float>(sm.w.v[i])));
    // a second save of the loaded model is byte-identical (fixed point)
    const std::string path2 = "ckpt_tmp2.bin";
    save_model(path2, sm2, "rng:123");
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), {});
    std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
    CHECK(load_checkpoint(path).rng_state == "rng:123");

    StageConfig acfg = StageConfig::defaults(Stage::acd);
    acfg.dim = 32;
    auto am = init_acd_model(acfg);
    save_model(path, am);
    auto am2 = load_acd_model(path);
    CHECK(am2.w.rows == am.w.rows);
    CHECK(am2.b.v[0] == static_cast<double>(static_cast<float>(am.b.v[0])));

    StageConfig mcfg = fast_absa_config();
    auto mm = init_absa_model(mcfg);
    save_model(path, mm);
    auto mm2 = load_absa_model(path);
    CHECK(mm2.experts.experts.size() == mm.experts.experts.size());
    CHECK(mm2.gate.w1.rows == mm.gate.w1.rows);
    for (std::size_t i = 0; i < mm.gate.w2.v.size(); ++i)
        CHECK(mm2.gate.w2.v[i] == static_cast<double>(static_cast<float>(mm.gate.w2.v[i])));

    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("checkpoints: corruption and mismatch detection") {
    const std::string path = "ckpt_bad.bin";
    StageConfig scfg = StageConfig::defaults(Stage::sentiment);
    scfg.dim = 16;
    auto sm = init_sentiment_model(scfg);
    save_model(path, sm);

    // stage mismatch
    CHECK_THROWS_AS(load_acd_model(path), CheckpointError);
    CHECK_THROWS_AS(load_absa_model(path), CheckpointError);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();

    // flip one payload byte -> checksum failure
    std::string flipped = bytes;
    flipped[flipped.size() - 16] ^= 0x01;
    {
        std::ofstream out(path, std::ios::binary);
        out << flipped;
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

    // bad magic
    std::string magic = bytes;
    magic[0] = 'X';
    {
        std::ofstream out(path, std::ios::binary);
        out << magic;
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

    // truncated payload
    {
        std::ofstream out(path, std::ios::binary);
        out << bytes.substr(0, bytes.size() / 2);
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);  // missing file
}
