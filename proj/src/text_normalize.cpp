#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "moe_absa/csv.hpp"
#include "moe_absa/text.hpp"

namespace moeabsa {

const char* to_string(Aspect a) {
    switch (a) {
        case Aspect::host: return "host";
        case Aspect::price: return "price";
        case Aspect::location: return "location";
        case Aspect::amenities: return "amenities";
        case Aspect::cleanliness: return "cleanliness";
        case Aspect::connectivity: return "connectivity";
    }
    return "?";
}

const char* to_string(Sentiment s) {
    switch (s) {
        case Sentiment::negative: return "negative";
        case Sentiment::neutral: return "neutral";
        case Sentiment::positive: return "positive";
    }
    return "?";
}

std::optional<Aspect> aspect_from_string(const std::string& s) {
    for (int i = 0; i < kNumAspects; ++i)
        if (s == to_string(static_cast<Aspect>(i))) return static_cast<Aspect>(i);
    return std::nullopt;
}

std::optional<Sentiment> sentiment_from_string(const std::string& s) {
    for (int i = 0; i < kNumSentiments; ++i)
        if (s == to_string(static_cast<Sentiment>(i))) return static_cast<Sentiment>(i);
    return std::nullopt;
}

const char* aspect_surface_form(Aspect a) {
    switch (a) {
        case Aspect::host: return "میزبان";
        case Aspect::price: return "قیمت";
        case Aspect::location: return "موقعیت";
        case Aspect::amenities: return "امکانات";
        case Aspect::cleanliness: return "نظافت";
        case Aspect::connectivity: return "اینترنت";
    }
    return "?";
}

// ------------------------------------------------------------------ utf8

std::vector<std::uint32_t> utf8_decode(const std::string& s) {
    std::vector<std::uint32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        std::uint32_t cp = 0;
        int extra = 0;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6) {
            cp = c & 0x1F;
            extra = 1;
        } else if ((c >> 4) == 0xE) {
            cp = c & 0x0F;
            extra = 2;
        } else if ((c >> 3) == 0x1E) {
            cp = c & 0x07;
            extra = 3;
        } else {
            ++i;  // stray continuation byte, drop
            continue;
        }
        if (extra > 0 && i + extra >= s.size()) break;  // truncated sequence
        bool ok = true;
        for (int k = 1; k <= extra; ++k) {
            const unsigned char cc = static_cast<unsigned char>(s[i + k]);
            if ((cc >> 6) != 0x2) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (!ok) {
            ++i;
            continue;
        }
        out.push_back(cp);
        i += 1 + extra;
    }
    return out;
}

std::string utf8_encode(const std::vector<std::uint32_t>& cps) {
    std::string out;
    out.reserve(cps.size() * 2);
    for (std::uint32_t cp : cps) {
        if (cp < 0x80) {
            out += static_cast<char>(cp);
        } else if (cp < 0x800) {
            out += static_cast<char>(0xC0 | (cp >> 6));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else if (cp < 0x10000) {
            out += static_cast<char>(0xE0 | (cp >> 12));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else {
            out += static_cast<char>(0xF0 | (cp >> 18));
            out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        }
    }
    return out;
}

// ------------------------------------------------------------- normalize

namespace {

constexpr std::uint32_t kZwnj = 0x200C;
constexpr std::uint32_t kZwj = 0x200D;

// canonical compositions occurring in Arabic-script text
std::uint32_t compose(std::uint32_t base, std::uint32_t mark) {
    if (mark == 0x0653 && base == 0x0627) return 0x0622;  // alef + madda
    if (mark == 0x0654) {
        if (base == 0x0627) return 0x0623;  // alef + hamza above
        if (base == 0x0648) return 0x0624;  // waw + hamza above
        if (base == 0x064A) return 0x0626;  // yeh + hamza above
    }
    if (mark == 0x0655 && base == 0x0627) return 0x0625;  // alef + hamza below
    return 0;
}

std::uint32_t map_arabic_to_persian(std::uint32_t cp) {
    switch (cp) {
        case 0x064A: return 0x06CC;  // Arabic yeh -> Persian yeh
        case 0x0649: return 0x06CC;  // alef maksura -> Persian yeh
        case 0x0643: return 0x06A9;  // Arabic kaf -> Persian keheh
        case 0x0629: return 0x0647;  // teh marbuta -> heh
        default: return cp;
    }
    // Arabic-Indic digits handled by caller (contiguous range)
}

bool is_removable_mark(std::uint32_t cp) {
    if (cp == 0x0640) return true;                   // tatweel
    if (cp >= 0x064B && cp <= 0x065F) return true;   // harakat
    if (cp == 0x0670) return true;                   // superscript alef
    return false;
}

bool is_emoji(std::uint32_t cp) {
    if (cp >= 0x1F000 && cp <= 0x1FAFF) return true;  // pictographs, flags, ext
    if (cp >= 0x2600 && cp <= 0x27BF) return true;    // misc symbols, dingbats
    if (cp >= 0x2B00 && cp <= 0x2BFF) return true;    // stars, arrows
    if (cp >= 0xFE00 && cp <= 0xFE0F) return true;    // variation selectors
    if (cp == 0x20E3) return true;                    // combining keycap
    if (cp == kZwj) return true;                      // joiner used in emoji sequences
    return false;
}

bool is_space_cp(std::uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == 0x0C ||
           cp == 0x0B || cp == 0x00A0 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x202F ||
           cp == 0x3000 || cp == 0xFEFF;
}

bool is_letter(std::uint32_t cp) {
    return (cp >= 0x0600 && cp <= 0x06FF && !is_space_cp(cp)) ||
           (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

// suffixes written with a half space; joined to the previous token
const std::vector<std::string>& half_space_suffixes() {
    static const std::vector<std::string> v = {"ها", "های", "هایی", "تر", "ترین"};
    return v;
}

// prefixes joined to the following token
const std::vector<std::string>& half_space_prefixes() {
    static const std::vector<std::string> v = {"می", "نمی"};
    return v;
}

}  // namespace

SpellingTable SpellingTable::defaults() {
    SpellingTable t;
    t.entries = {
        {"میخوام", "می‌خوام"},
        {"میشه", "می‌شه"},
        {"خیلیی", "خیلی"},
        {"عاااالی", "عالی"},
        {"عاالی", "عالی"},
        {"انلاین", "آنلاین"},
        {"بلیط", "بلیت"},
        {"اطاق", "اتاق"},
    };
    std::sort(t.entries.begin(), t.entries.end(),
              [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    return t;
}

SpellingTable SpellingTable::load(const std::string& path) {
    SpellingTable t;
    auto rows = csv::read_file(path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() < 2) continue;
        if (i == 0 && rows[i][0] == "wrong") continue;  // optional header
        t.entries.emplace_back(rows[i][0], rows[i][1]);
    }
    std::sort(t.entries.begin(), t.entries.end(),
              [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    return t;
}

std::string normalize_text(const std::string& raw, const SpellingTable* table) {
    std::vector<std::uint32_t> cps = utf8_decode(raw);

    // canonical composition (Arabic subset of NFC)
    std::vector<std::uint32_t> composed;
    composed.reserve(cps.size());
    for (std::uint32_t cp : cps) {
        if (!composed.empty()) {
            if (std::uint32_t c = compose(composed.back(), cp); c != 0) {
                composed.back() = c;
                continue;
            }
        }
        composed.push_back(cp);
    }

    // character mapping and mark/emoji removal
    std::vector<std::uint32_t> mapped;
    mapped.reserve(composed.size());
    for (std::uint32_t cp : composed) {
        if (is_removable_mark(cp) || is_emoji(cp)) continue;
        if (cp >= 0x0660 && cp <= 0x0669) cp = cp - 0x0660 + 0x06F0;  // digits
        mapped.push_back(map_arabic_to_persian(cp));
    }

    // whitespace collapse into tokens; drop spaces next to ZWNJ; collapse
    // ZWNJ runs
    std::vector<std::vector<std::uint32_t>> tokens;
    std::vector<std::uint32_t> cur;
    auto flush = [&]() {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (std::uint32_t cp : mapped) {
        if (is_space_cp(cp)) {
            flush();
        } else if (cp == kZwnj) {
            if (!cur.empty() && cur.back() == kZwnj) continue;
            if (cur.empty() && !tokens.empty()) {
                // "word <space> ZWNJ..." -> rejoin to previous token
                cur = tokens.back();
                tokens.pop_back();
                if (cur.back() != kZwnj) cur.push_back(kZwnj);
            } else if (!cur.empty()) {
                cur.push_back(kZwnj);
            }
            // leading ZWNJ with no previous token is dropped
        } else {
            cur.push_back(cp);
        }
    }
    flush();
    for (auto& t : tokens)
        while (!t.empty() && t.back() == kZwnj) t.pop_back();
    std::erase_if(tokens, [](const auto& t) { return t.empty(); });

    // half-space suffix/prefix joining
    std::vector<std::vector<std::uint32_t>> joined;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string tok = utf8_encode(tokens[i]);
        bool is_suffix = std::find(half_space_suffixes().begin(), half_space_suffixes().end(),
                                   tok) != half_space_suffixes().end();
        if (is_suffix && !joined.empty() && is_letter(joined.back().back())) {
            joined.back().push_back(kZwnj);
            joined.back().insert(joined.back().end(), tokens[i].begin(), tokens[i].end());
            continue;
        }
        bool is_prefix = std::find(half_space_prefixes().begin(), half_space_prefixes().end(),
                                   tok) != half_space_prefixes().end();
        if (is_prefix && i + 1 < tokens.size() && is_letter(tokens[i + 1].front())) {
            std::vector<std::uint32_t> merged = tokens[i];
            merged.push_back(kZwnj);
            merged.insert(merged.end(), tokens[i + 1].begin(), tokens[i + 1].end());
            joined.push_back(std::move(merged));
            ++i;
            continue;
        }
        joined.push_back(tokens[i]);
    }

    std::vector<std::uint32_t> flat;
    for (std::size_t i = 0; i < joined.size(); ++i) {
        if (i) flat.push_back(' ');
        flat.insert(flat.end(), joined[i].begin(), joined[i].end());
    }
    std::string text = utf8_encode(flat);

    // spelling corrections, longest match first at each position
    static const SpellingTable kDefaultTable = SpellingTable::defaults();
    const SpellingTable& tbl = table ? *table : kDefaultTable;
    if (!tbl.entries.empty()) {
        std::string out;
        out.reserve(text.size());
        std::size_t i = 0;
        while (i < text.size()) {
            bool replaced = false;
            for (const auto& [wrong, correct] : tbl.entries) {
                if (text.compare(i, wrong.size(), wrong) == 0) {
                    out += correct;
                    i += wrong.size();
                    replaced = true;
                    break;
                }
            }
            if (!replaced) out += text[i++];
        }
        text = std::move(out);
    }
    return text;
}

}  // namespace moeabsa
