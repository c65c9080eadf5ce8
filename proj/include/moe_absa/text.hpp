#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace moeabsa {

// ---------------------------------------------------------------- domain

enum class Aspect { host = 0, price, location, amenities, cleanliness, connectivity };
enum class Sentiment { negative = 0, neutral, positive };

constexpr int kNumAspects = 6;
constexpr int kNumSentiments = 3;

const char* to_string(Aspect a);
const char* to_string(Sentiment s);
std::optional<Aspect> aspect_from_string(const std::string& s);
std::optional<Sentiment> sentiment_from_string(const std::string& s);

// canonical Persian surface form, used for aspect embeddings
const char* aspect_surface_form(Aspect a);

struct ReviewRecord {
    std::string id;
    std::string text;
    std::set<Aspect> aspects;
    std::map<Aspect, Sentiment> sentiments;  // keys are a subset of aspects
    std::optional<Sentiment> overall_sentiment;
};

// ------------------------------------------------------------- normalize

struct SpellingTable {
    // applied longest-match-first over the normalized string
    std::vector<std::pair<std::string, std::string>> entries;

    static SpellingTable defaults();
    static SpellingTable load(const std::string& path);  // wrong,correct CSV
};

// Idempotent cleanup for Persian review text: Arabic-presentation
// compositions, Arabic->Persian codepoint mapping, emoji stripping,
// whitespace collapse, half-space (ZWNJ) suffix joining, then the
// spelling table. Passing nullptr uses the built-in default table.
std::string normalize_text(const std::string& raw, const SpellingTable* table = nullptr);

std::vector<std::uint32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<std::uint32_t>& cps);

// ---------------------------------------------------------------- ingest

struct IngestResult {
    std::vector<ReviewRecord> records;
    int rejected_rows = 0;
};

// Columns: review,Category,sentiment. One aspect per row; rows sharing the
// review text merge into one record. Unknown aspect/sentiment -> rejected.
IngestResult ingest_csv(const std::string& path);
IngestResult ingest_rows(const std::vector<std::vector<std::string>>& rows);

void export_csv(const std::string& path, const std::vector<ReviewRecord>& records);

// ----------------------------------------------------------------- split

struct DatasetSplit {
    std::vector<ReviewRecord> train, validation, test;
    std::uint64_t seed = 0;
};

DatasetSplit split_dataset(std::vector<ReviewRecord> records,
                           std::array<double, 3> ratios = {0.8, 0.1, 0.1},
                           std::uint64_t seed = 42);

// ----------------------------------------------------------------- synth

// (aspect, sentiment) label counts the generator samples from,
// indexed [aspect][sentiment]
extern const std::array<std::array<int, 3>, kNumAspects> kLabelCounts;

struct SynthConfig {
    std::uint64_t seed = 42;
    int n_records = 1000;
    double multi_aspect_prob = 0.25;
};

// Labels are drawn i.i.d. from the empirical (aspect, sentiment)
// distribution; surface text carries recoverable aspect and sentiment
// markers plus noise tokens.
std::vector<ReviewRecord> synth_corpus(const SynthConfig& cfg);

// ------------------------------------------------------------- embedding

class EmbeddingProvider {
public:
    enum class Kind { hashed_ngram, precomputed_file };

    static EmbeddingProvider hashed(int dim, std::uint64_t seed);
    // file: header "id,<dim>", then rows "record_id,v1,...,v_dim"
    static EmbeddingProvider precomputed(const std::string& path);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }

    // hashed kind only; deterministic, empty text -> zero vector
    std::vector<double> embed_text(const std::string& text) const;
    // precomputed kind only; missing id -> lookup error
    std::vector<double> embed_id(const std::string& id) const;
    // either kind (precomputed files use ids "aspect:<name>")
    std::vector<double> embed_record(const ReviewRecord& rec) const;
    const std::vector<double>& aspect_embedding(Aspect a) const;

private:
    Kind kind_ = Kind::hashed_ngram;
    int dim_ = 256;
    std::uint64_t seed_ = 42;
    std::unordered_map<std::string, std::vector<double>> table_;
    mutable std::array<std::optional<std::vector<double>>, kNumAspects> aspect_cache_;
};

}  // namespace moeabsa
