#include <cmath>
#include <stdexcept>

#include "moe_absa/csv.hpp"
#include "moe_absa/text.hpp"

namespace moeabsa {

namespace {

// FNV-1a over bytes, basis mixed with the provider seed
std::uint64_t hash_feature(const std::string& s, std::uint64_t seed) {
    std::uint64_t h = 14695981039346656037ull ^ (seed * 0x9E3779B97F4A7C15ull);
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

EmbeddingProvider EmbeddingProvider::hashed(int dim, std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("EmbeddingProvider: dim must be >= 1");
    EmbeddingProvider p;
    p.kind_ = Kind::hashed_ngram;
    p.dim_ = dim;
    p.seed_ = seed;
    return p;
}

EmbeddingProvider EmbeddingProvider::precomputed(const std::string& path) {
    auto rows = csv::read_file(path);
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "id")
        throw std::runtime_error("precomputed embeddings: bad header, expected id,<dim>");
    EmbeddingProvider p;
    p.kind_ = Kind::precomputed_file;
    p.dim_ = std::stoi(rows[0][1]);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() == 1 && row[0].empty()) continue;
        if (static_cast<int>(row.size()) != p.dim_ + 1)
            throw std::runtime_error("precomputed embeddings: row " + std::to_string(i) +
                                     " has wrong arity");
        std::vector<double> vec(p.dim_);
        for (int j = 0; j < p.dim_; ++j) vec[j] = std::stod(row[j + 1]);
        p.table_[row[0]] = std::move(vec);
    }
    return p;
}

std::vector<double> EmbeddingProvider::embed_text(const std::string& text) const {
    if (kind_ != Kind::hashed_ngram)
        throw std::logic_error("embed_text: provider is not hashed_ngram kind");
    std::vector<double> out(dim_, 0.0);
    std::vector<std::string> features;

    // whitespace tokens
    std::string tok;
    std::vector<std::string> tokens;
    for (char c : text) {
        if (c == ' ') {
            if (!tok.empty()) tokens.push_back(std::move(tok)), tok.clear();
        } else {
            tok += c;
        }
    }
    if (!tok.empty()) tokens.push_back(std::move(tok));

    for (const auto& t : tokens) {
        features.push_back("t:" + t);
        // codepoint n-grams, n in {2,3}
        auto cps = utf8_decode(t);
        for (int n = 2; n <= 3; ++n)
            for (std::size_t i = 0; i + n <= cps.size(); ++i)
                features.push_back(
                    std::to_string(n) + ":" +
                    utf8_encode({cps.begin() + i, cps.begin() + i + n}));
    }
    if (features.empty()) return out;

    const double scl = 1.0 / std::sqrt(static_cast<double>(features.size()));
    for (const auto& f : features) {
        const std::uint64_t h = hash_feature(f, seed_);
        const int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim_));
        const double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
        out[bucket] += sign * scl;
    }
    return out;
}

std::vector<double> EmbeddingProvider::embed_id(const std::string& id) const {
    if (kind_ != Kind::precomputed_file)
        throw std::logic_error("embed_id: provider is not precomputed_file kind");
    auto it = table_.find(id);
    if (it == table_.end())
        throw std::runtime_error("precomputed embeddings: no entry for id '" + id + "'");
    return it->second;
}

std::vector<double> EmbeddingProvider::embed_record(const ReviewRecord& rec) const {
    return kind_ == Kind::hashed_ngram ? embed_text(rec.text) : embed_id(rec.id);
}

const std::vector<double>& EmbeddingProvider::aspect_embedding(Aspect a) const {
    auto& slot = aspect_cache_[static_cast<int>(a)];
    if (!slot) {
        if (kind_ == Kind::hashed_ngram)
            slot = embed_text(aspect_surface_form(a));
        else
            slot = embed_id(std::string("aspect:") + to_string(a));
    }
    return *slot;
}

}  // namespace moeabsa
