#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "xlir/common.hpp"
#include "xlir/embed.hpp"

using namespace xlir;
using namespace xlir::embed;

namespace {

// Writes `content` to a fresh temp file and returns its path.
std::string temp_file(const std::string& stem, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / (stem + ".txt");
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path.string();
}

}  // namespace

TEST_CASE("embedding file loads with prefixes stripped") {
    auto path = temp_file("emb_basic",
                          "3 2\n"
                          "en:cat 1.0 0.0\n"
                          "ar:qitta 0.9 0.1\n"
                          "dog 0.0 1.0\n");
    auto table = load_embeddings(path);
    CHECK(table.dim() == 2);
    CHECK(table.rows() == 3);
    REQUIRE(table.lookup("cat").has_value());
    CHECK((*table.lookup("cat"))[0] == doctest::Approx(1.0));
    CHECK(table.lookup("qitta").has_value());
    CHECK(table.lookup("dog").has_value());
    CHECK_FALSE(table.lookup("bird").has_value());
}

TEST_CASE("duplicate embedding rows keep the first and count the rest") {
    auto path = temp_file("emb_dup",
                          "2 2\n"
                          "cat 1.0 0.0\n"
                          "cat 0.0 1.0\n");
    auto table = load_embeddings(path);
    CHECK(table.duplicates_ignored() == 1);
    CHECK((*table.lookup("cat"))[0] == doctest::Approx(1.0));
}

TEST_CASE("malformed embedding files are rejected with the line number") {
    auto bad_dim = temp_file("emb_baddim",
                             "1 3\n"
                             "cat 1.0 0.0\n");
    CHECK_THROWS_AS(load_embeddings(bad_dim), ParseError);
    auto bad_num = temp_file("emb_badnum",
                             "1 2\n"
                             "cat 1.0 oops\n");
    CHECK_THROWS_AS(load_embeddings(bad_num), ParseError);
    CHECK_THROWS_AS(load_embeddings("/nonexistent/embeddings.txt"), ParseError);
}

TEST_CASE("cosine matches a hand-computed value and its edge cases") {
    std::vector<double> u = {1.0, 2.0, 2.0};
    std::vector<double> v = {2.0, 0.0, 1.0};
    // u.v = 4, |u| = 3, |v| = sqrt(5)
    CHECK(cosine(u, v) == doctest::Approx(4.0 / (3.0 * std::sqrt(5.0))).epsilon(1e-12));

    std::vector<double> zero = {0.0, 0.0, 0.0};
    CHECK(cosine(u, zero) == 0.0);
    CHECK(cosine(u, u) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> neg = {-1.0, -2.0, -2.0};
    CHECK(cosine(u, neg) == doctest::Approx(-1.0).epsilon(1e-12));

    std::vector<double> short_v = {1.0};
    CHECK_THROWS_AS(cosine(u, short_v), ContractError);
}

TEST_CASE("cosine is scale invariant") {
    std::vector<double> u = {0.3, -1.2, 0.7, 2.0};
    std::vector<double> v = {1.1, 0.4, -0.2, 0.9};
    std::vector<double> u5(u);
    for (auto& x : u5) x *= 5.0;
    CHECK(cosine(u5, v) == doctest::Approx(cosine(u, v)).epsilon(1e-12));
}

TEST_CASE("lexicon lookup returns the first candidate in file order") {
    auto path = temp_file("lex_order",
                          "strike\tdarba\n"
                          "strike\tidrab\n"
                          "war\tharb\n");
    auto lex = load_lexicon(path);
    REQUIRE(lex.first("strike") != nullptr);
    CHECK(*lex.first("strike") == "darba");
    CHECK(lex.first("peace") == nullptr);
}

TEST_CASE("translation drops out-of-lexicon tokens and keeps order") {
    auto path = temp_file("lex_translate",
                          "war\tharb\n"
                          "crisis\tazma\n");
    auto lex = load_lexicon(path);
    text::TokenSequence seq{{"the", "war", "and", "crisis"}, text::Lang::en};
    auto out = translate_tokens(lex, seq);
    std::vector<std::string> want = {"harb", "azma"};
    CHECK(out.tokens == want);
    CHECK(out.lang == text::Lang::ar);
}

TEST_CASE("lexicon entries are normalized on load") {
    // uppercase English side, arabic side carries a diacritic
    auto path = temp_file("lex_norm", "War\tحَرب\n");
    auto lex = load_lexicon(path);
    REQUIRE(lex.first("war") != nullptr);
    CHECK(*lex.first("war") == "حرب");
}
