#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "xlir/text.hpp"

using namespace xlir;
using namespace xlir::text;

TEST_CASE("english tokenization lowercases and splits on non-alphanumerics") {
    auto seq = tokenize("The Quick-Brown fox, 42 times!", Lang::en);
    std::vector<std::string> want = {"the", "quick", "brown", "fox", "42", "times"};
    CHECK(seq.tokens == want);
    CHECK(seq.lang == Lang::en);
}

TEST_CASE("tokenizing empty or all-separator input yields no tokens") {
    CHECK(tokenize("", Lang::en).tokens.empty());
    CHECK(tokenize("  \t\n ... !!", Lang::en).tokens.empty());
}

TEST_CASE("arabic tokens are normalized") {
    // alef variants fold to bare alef
    auto seq = tokenize("أحمد إلى", Lang::ar);
    REQUIRE(seq.tokens.size() == 2);
    CHECK(seq.tokens[0] == "احمد");
    // hamza-under alef folds to bare alef, final alef maqsura to yeh
    CHECK(seq.tokens[1] == "الي");
}

TEST_CASE("diacritics and tatweel are stripped from arabic text") {
    // fatHa + shadda on a word, tatweel inside another
    auto seq = tokenize("كَتّب عرـبي",
                        Lang::ar);
    REQUIRE(seq.tokens.size() == 2);
    CHECK(seq.tokens[0] == "كتب");
    CHECK(seq.tokens[1] == "عربي");
}

TEST_CASE("taa marbuta folds to haa and alef maqsura to yaa") {
    auto seq = tokenize("مدرسة مستشفى",
                        Lang::ar);
    REQUIRE(seq.tokens.size() == 2);
    CHECK(seq.tokens[0] == "مدرسه");
    CHECK(seq.tokens[1] == "مستشفي");
}

TEST_CASE("normalization is idempotent") {
    std::string once = normalize_arabic("أَكّد ةى");
    CHECK(normalize_arabic(once) == once);
}

TEST_CASE("latin text passes through the arabic tokenizer unchanged") {
    auto seq = tokenize("nato summit 2024", Lang::ar);
    std::vector<std::string> want = {"nato", "summit", "2024"};
    CHECK(seq.tokens == want);
}

TEST_CASE("truncate keeps a prefix and never grows the sequence") {
    TokenSequence seq{{"a", "b", "c", "d"}, Lang::en};
    auto cut = truncate(seq, 2);
    std::vector<std::string> want = {"a", "b"};
    CHECK(cut.tokens == want);
    CHECK(truncate(seq, 10).tokens.size() == 4);
    CHECK(truncate(seq, 1).tokens.size() == 1);
}

TEST_CASE("tokenization result is stable across repeated calls") {
    const std::string input = "Re-running the SAME text";
    auto a = tokenize(input, Lang::en);
    auto b = tokenize(input, Lang::en);
    CHECK(a.tokens == b.tokens);
}
