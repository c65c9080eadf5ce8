#include <stdexcept>
#include <string>

#include "moe_absa/rng.hpp"
#include "moe_absa/text.hpp"

namespace moeabsa {

// label counts, indexed [aspect][sentiment] with the enum orders
// host, price, location, amenities, cleanliness, connectivity and
// negative, neutral, positive
const std::array<std::array<int, 3>, kNumAspects> kLabelCounts = {{
    {188, 15, 1064},   // host
    {579, 40, 128},    // price
    {187, 10, 411},    // location
    {1508, 73, 621},   // amenities
    {359, 30, 839},    // cleanliness
    {580, 40, 129},    // connectivity
}};

namespace {

const char* sentiment_marker(Sentiment s) {
    switch (s) {
        case Sentiment::negative: return "بد";
        case Sentiment::neutral: return "متوسط";
        case Sentiment::positive: return "عالی";
    }
    return "?";
}

const std::vector<std::string>& generic_words(Sentiment s) {
    static const std::vector<std::string> neg = {"بد", "افتضاح", "ناراضی"};
    static const std::vector<std::string> neu = {"معمولی", "متوسط"};
    static const std::vector<std::string> pos = {"عالی", "خوب", "راضی"};
    switch (s) {
        case Sentiment::negative: return neg;
        case Sentiment::neutral: return neu;
        case Sentiment::positive: return pos;
    }
    return neu;
}

const std::vector<std::string>& noise_words() {
    static const std::vector<std::string> v = {"اقامت", "سفر",    "ویلا",  "خانه",
                                               "شب",    "خانواده", "تجربه", "بسیار",
                                               "کاملا", "البته"};
    return v;
}

struct Label {
    Aspect aspect;
    Sentiment sentiment;
};

Label draw_label(Rng& rng) {
    int total = 0;
    for (const auto& row : kLabelCounts)
        for (int c : row) total += c;
    double u = rng.uniform() * total;
    for (int a = 0; a < kNumAspects; ++a)
        for (int s = 0; s < kNumSentiments; ++s) {
            u -= kLabelCounts[a][s];
            if (u < 0) return {static_cast<Aspect>(a), static_cast<Sentiment>(s)};
        }
    return {Aspect::connectivity, Sentiment::positive};
}

ReviewRecord make_record(const std::vector<Label>& labels, std::size_t index, Rng& rng) {
    ReviewRecord rec;
    rec.id = "s" + std::to_string(index);
    rec.overall_sentiment = labels.front().sentiment;

    std::vector<std::string> tokens;
    auto add_noise = [&](int count) {
        for (int i = 0; i < count; ++i)
            tokens.push_back(noise_words()[rng.index(noise_words().size())]);
    };
    add_noise(1 + static_cast<int>(rng.index(2)));
    for (const Label& l : labels) {
        rec.aspects.insert(l.aspect);
        rec.sentiments[l.aspect] = l.sentiment;
        const std::string marker = std::string(aspect_surface_form(l.aspect)) + "‌" +
                                   sentiment_marker(l.sentiment);
        tokens.push_back(aspect_surface_form(l.aspect));
        tokens.push_back(marker);
        tokens.push_back(marker);
    }
    const auto& gen = generic_words(*rec.overall_sentiment);
    tokens.push_back(gen[rng.index(gen.size())]);
    tokens.push_back(gen[rng.index(gen.size())]);
    add_noise(1 + static_cast<int>(rng.index(2)));

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) rec.text += ' ';
        rec.text += tokens[i];
    }
    return rec;
}

}  // namespace

std::vector<ReviewRecord> synth_corpus(const SynthConfig& cfg) {
    if (cfg.n_records < 1) throw std::invalid_argument("synth_corpus: n_records must be >= 1");
    Rng rng(cfg.seed);
    std::vector<ReviewRecord> out;
    out.reserve(cfg.n_records);
    while (static_cast<int>(out.size()) < cfg.n_records) {
        Label l1 = draw_label(rng);
        std::vector<Label> labels = {l1};
        Label extra{};
        bool have_extra = false;
        if (rng.uniform() < cfg.multi_aspect_prob) {
            Label l2 = draw_label(rng);
            if (l2.aspect != l1.aspect && l2.sentiment == l1.sentiment) {
                labels.push_back(l2);
            } else {
                // Keep every drawn label i.i.d. from the table by giving the
                // second draw its own record instead of dropping or resampling
                // it. Pairing is restricted to sentiment-consistent labels so
                // each record's surface cues stay unambiguous.
                extra = l2;
                have_extra = true;
            }
        }
        out.push_back(make_record(labels, out.size(), rng));
        if (have_extra && static_cast<int>(out.size()) < cfg.n_records)
            out.push_back(make_record({extra}, out.size(), rng));
    }
    return out;
}

}  // namespace moeabsa
