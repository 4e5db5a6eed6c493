#include "xlir/text.hpp"

#include "xlir/common.hpp"

namespace xlir::text {

namespace utf8 {

char32_t decode(std::string_view s, std::size_t& pos) {
    const unsigned char b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int extra;
    char32_t cp;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return kInvalid;
    }
    if (pos + extra >= s.size()) {
        ++pos;
        return kInvalid;
    }
    char32_t out = cp;
    for (int i = 1; i <= extra; ++i) {
        const unsigned char b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            ++pos;
            return kInvalid;
        }
        out = (out << 6) | (b & 0x3F);
    }
    pos += extra + 1;
    return out;
}

void append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

}  // namespace utf8

namespace {

bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x00A0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202F:
        case 0x205F:
        case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_arabic_punct(char32_t cp) {
    switch (cp) {
        case 0x060C:  // comma
        case 0x061B:  // semicolon
        case 0x061E:  // triple dot
        case 0x061F:  // question mark
        case 0x066A:  // percent
        case 0x066B:  // decimal separator
        case 0x066C:  // thousands separator
        case 0x066D:  // five pointed star
        case 0x06D4:  // full stop
            return true;
        default:
            return false;
    }
}

// Token characters are ASCII alphanumerics and any non-ASCII codepoint that is
// not a space or a punctuation mark from the blocks news text actually uses.
bool is_delimiter(char32_t cp) {
    if (cp == utf8::kInvalid) return true;
    if (cp < 0x80) {
        const bool alnum = (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
                           (cp >= 'A' && cp <= 'Z');
        return !alnum;
    }
    if (is_unicode_space(cp) || is_arabic_punct(cp)) return true;
    if (cp == 0x00AB || cp == 0x00BB || cp == 0x00B7) return true;  // «, », mid dot
    if (cp >= 0x2010 && cp <= 0x206F) return true;                  // general punctuation
    if (cp >= 0x2E00 && cp <= 0x2E7F) return true;                  // supplemental punctuation
    if (cp >= 0x3001 && cp <= 0x303F) return true;                  // CJK punctuation
    if (cp >= 0xFE50 && cp <= 0xFE6F) return true;                  // small form variants
    return false;
}

bool is_arabic_diacritic(char32_t cp) {
    return (cp >= 0x064B && cp <= 0x065F) || cp == 0x0670 ||
           (cp >= 0x06D6 && cp <= 0x06DC) || (cp >= 0x06DF && cp <= 0x06E8) ||
           (cp >= 0x06EA && cp <= 0x06ED);
}

char32_t to_ascii_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    return cp;
}

}  // namespace

std::string normalize_arabic(std::string_view token) {
    std::string out;
    out.reserve(token.size());
    std::size_t pos = 0;
    while (pos < token.size()) {
        char32_t cp = utf8::decode(token, pos);
        if (cp == utf8::kInvalid) continue;
        if (is_arabic_diacritic(cp) || cp == 0x0640) continue;  // tashkeel, tatweel
        switch (cp) {
            case 0x0622:  // alef madda
            case 0x0623:  // alef hamza above
            case 0x0625:  // alef hamza below
            case 0x0671:  // alef wasla
                cp = 0x0627;
                break;
            case 0x0629:  // teh marbuta -> heh
                cp = 0x0647;
                break;
            case 0x0649:  // alef maksura -> yeh
                cp = 0x064A;
                break;
            default:
                break;
        }
        utf8::append(out, cp);
    }
    return out;
}

TokenSequence tokenize(std::string_view raw, Lang lang) {
    TokenSequence seq;
    seq.lang = lang;
    std::string current;
    std::size_t pos = 0;
    auto flush = [&]() {
        if (current.empty()) return;
        std::string token = lang == Lang::ar ? normalize_arabic(current) : current;
        if (!token.empty()) seq.tokens.push_back(std::move(token));
        current.clear();
    };
    while (pos < raw.size()) {
        char32_t cp = utf8::decode(raw, pos);
        if (is_delimiter(cp)) {
            flush();
        } else {
            utf8::append(current, to_ascii_lower(cp));
        }
    }
    flush();
    return seq;
}

TokenSequence truncate(const TokenSequence& seq, std::size_t max_len) {
    if (max_len < 1) throw ContractError("truncate: max_len must be >= 1");
    if (seq.tokens.size() <= max_len) return seq;
    TokenSequence out;
    out.lang = seq.lang;
    out.tokens.assign(seq.tokens.begin(), seq.tokens.begin() + max_len);
    return out;
}

}  // namespace xlir::text
