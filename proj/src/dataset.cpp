#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "moe_absa/csv.hpp"
#include "moe_absa/rng.hpp"
#include "moe_absa/text.hpp"

namespace moeabsa {

IngestResult ingest_rows(const std::vector<std::vector<std::string>>& rows) {
    if (rows.empty()) throw std::runtime_error("ingest: empty file, expected header row");
    const auto& header = rows[0];
    int ci_review = -1, ci_category = -1, ci_sentiment = -1;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == "review") ci_review = static_cast<int>(j);
        if (header[j] == "Category") ci_category = static_cast<int>(j);
        if (header[j] == "sentiment") ci_sentiment = static_cast<int>(j);
    }
    if (ci_review < 0 || ci_category < 0 || ci_sentiment < 0)
        throw std::runtime_error(
            "ingest: missing required column; need review,Category,sentiment");

    IngestResult res;
    std::unordered_map<std::string, std::size_t> by_text;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() == 1 && row[0].empty()) continue;  // blank line
        const std::size_t need = static_cast<std::size_t>(
            std::max({ci_review, ci_category, ci_sentiment}) + 1);
        if (row.size() < need) {
            ++res.rejected_rows;
            continue;
        }
        const std::string& text = row[ci_review];
        auto aspect = aspect_from_string(row[ci_category]);
        auto sent = sentiment_from_string(row[ci_sentiment]);
        if (!aspect || !sent) {
            ++res.rejected_rows;
            continue;
        }
        auto it = by_text.find(text);
        if (it == by_text.end()) {
            ReviewRecord rec;
            rec.id = "r" + std::to_string(res.records.size());
            rec.text = text;
            by_text.emplace(text, res.records.size());
            res.records.push_back(std::move(rec));
            it = by_text.find(text);
        }
        ReviewRecord& rec = res.records[it->second];
        rec.aspects.insert(*aspect);
        rec.sentiments[*aspect] = *sent;
        if (!rec.overall_sentiment) rec.overall_sentiment = *sent;
    }
    return res;
}

IngestResult ingest_csv(const std::string& path) {
    return ingest_rows(csv::read_file(path));
}

void export_csv(const std::string& path, const std::vector<ReviewRecord>& records) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    f << "review,Category,sentiment\n";
    for (const auto& rec : records)
        for (const auto& [aspect, sent] : rec.sentiments)
            csv::write_row(f, {rec.text, to_string(aspect), to_string(sent)});
}

DatasetSplit split_dataset(std::vector<ReviewRecord> records, std::array<double, 3> ratios,
                           std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split_dataset: ratios must sum to 1");
    if (records.size() < 3)
        throw std::invalid_argument("split_dataset: need at least 3 records");

    Rng rng(seed);
    shuffle(records, rng);

    const std::size_t n = records.size();
    const std::size_t n_train = std::min(n, static_cast<std::size_t>(ratios[0] * n + 0.5));
    const std::size_t n_val =
        std::min(n - n_train, static_cast<std::size_t>(ratios[1] * n + 0.5));

    DatasetSplit split;
    split.seed = seed;
    split.train.assign(records.begin(), records.begin() + n_train);
    split.validation.assign(records.begin() + n_train, records.begin() + n_train + n_val);
    split.test.assign(records.begin() + n_train + n_val, records.end());
    return split;
}

}  // namespace moeabsa
