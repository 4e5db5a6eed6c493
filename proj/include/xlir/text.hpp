#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace xlir::text {

enum class Lang { en, ar };

struct TokenSequence {
    std::vector<std::string> tokens;
    Lang lang = Lang::en;
};

// Splits on whitespace and punctuation, lowercases ASCII letters, and (for ar)
// normalizes each token via normalize_arabic. Tokens that normalize to nothing
// (e.g. bare diacritic runs) are dropped. Total function: malformed UTF-8 bytes
// act as delimiters.
TokenSequence tokenize(std::string_view raw, Lang lang);

// Arabic orthographic folding:
//   - strips tashkeel/diacritics (U+064B..U+065F, U+0670, Quranic annotation
//     marks U+06D6..U+06DC, U+06DF..U+06E8, U+06EA..U+06ED) and tatweel U+0640
//   - alef variants U+0622/U+0623/U+0625/U+0671 -> U+0627
//   - teh marbuta U+0629 -> heh U+0647
//   - alef maksura U+0649 -> yeh U+064A
// Everything else passes through unchanged. Idempotent.
std::string normalize_arabic(std::string_view token);

// First min(|seq|, max_len) tokens. max_len must be >= 1.
TokenSequence truncate(const TokenSequence& seq, std::size_t max_len);

namespace utf8 {

inline constexpr char32_t kInvalid = 0xFFFFFFFF;

// Decodes the codepoint starting at `pos`, advancing `pos` past it. Returns
// kInvalid (and advances by one byte) on malformed input.
char32_t decode(std::string_view s, std::size_t& pos);

void append(std::string& out, char32_t cp);

}  // namespace utf8

}  // namespace xlir::text
