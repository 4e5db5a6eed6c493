#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xlir/common.hpp"
#include "xlir/index.hpp"

using namespace xlir;
using namespace xlir::index;

namespace {

Document doc(std::string id, std::vector<std::string> tokens) {
    return Document{std::move(id), std::move(tokens)};
}

// Scoring formula recomputed longhand, term by term scored against one doc.
double oracle_score(double N, double df, double tf, double dl, double avgdl, double k1,
                    double b) {
    double idf = std::log(1.0 + (N - df + 0.5) / (df + 0.5));
    return idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
}

}  // namespace

TEST_CASE("scores match a hand-worked example") {
    std::vector<Document> docs = {doc("d1", {"a", "b"}), doc("d2", {"a"}), doc("d3", {"c"})};
    auto idx = InvertedIndex::build(docs);
    CHECK(idx.num_docs() == 3);
    CHECK(idx.avgdl() == doctest::Approx(4.0 / 3.0).epsilon(1e-15));

    // df(a) = 2 of 3 docs; idf = ln(1 + 1.5/2.5) = ln(1.6)
    CHECK(idx.idf("a") == doctest::Approx(std::log(1.6)).epsilon(1e-15));

    text::TokenSequence q{{"a"}, text::Lang::ar};
    // d2: tf=1, dl=1. denom = 1 + 1.2*(0.25 + 0.75*0.75) = 1.975, num = 2.2
    CHECK(idx.bm25_score(q, "d2") ==
          doctest::Approx(std::log(1.6) * 2.2 / 1.975).epsilon(1e-12));
    CHECK(idx.bm25_score(q, "d2") ==
          doctest::Approx(oracle_score(3, 2, 1, 1, 4.0 / 3.0, 1.2, 0.75)).epsilon(1e-12));
    CHECK(idx.bm25_score(q, "d1") ==
          doctest::Approx(oracle_score(3, 2, 1, 2, 4.0 / 3.0, 1.2, 0.75)).epsilon(1e-12));
    CHECK(idx.bm25_score(q, "d3") == 0.0);
}

TEST_CASE("idf never goes negative, even for terms in most documents") {
    std::vector<Document> docs;
    for (int i = 0; i < 10; ++i) docs.push_back(doc("d" + std::to_string(i), {"common"}));
    auto idx = InvertedIndex::build(docs);
    CHECK(idx.idf("common") > 0.0);
    CHECK(idx.idf("common") == doctest::Approx(std::log(1.0 + 0.5 / 10.5)).epsilon(1e-15));
    CHECK(idx.idf("absent") == doctest::Approx(std::log(1.0 + 10.5 / 0.5)).epsilon(1e-15));
}

TEST_CASE("query bag semantics: a repeated query token contributes twice") {
    std::vector<Document> docs = {doc("d1", {"a", "b"}), doc("d2", {"c"})};
    auto idx = InvertedIndex::build(docs);
    text::TokenSequence once{{"a"}, text::Lang::ar};
    text::TokenSequence twice{{"a", "a"}, text::Lang::ar};
    CHECK(idx.bm25_score(twice, "d1") ==
          doctest::Approx(2.0 * idx.bm25_score(once, "d1")).epsilon(1e-12));
}

TEST_CASE("preselect keeps only positive scores, ranked with id tiebreak") {
    std::vector<Document> docs = {doc("b", {"x"}), doc("a", {"x"}), doc("c", {"y"})};
    auto idx = InvertedIndex::build(docs);
    text::TokenSequence q{{"x"}, text::Lang::ar};
    auto list = idx.preselect(q, 10);
    REQUIRE(list.entries.size() == 2);  // "c" never matches
    // identical scores, so ascending doc id breaks the tie
    CHECK(list.entries[0].doc_id == "a");
    CHECK(list.entries[1].doc_id == "b");
    CHECK(list.entries[0].rank == 1);
    CHECK(list.entries[1].rank == 2);
    CHECK(list.entries[0].score == doctest::Approx(list.entries[1].score));
}

TEST_CASE("preselect truncation returns a prefix of the full ranking") {
    std::vector<Document> docs;
    for (int i = 0; i < 40; ++i) {
        std::vector<std::string> tokens(static_cast<std::size_t>(1 + i % 7), "t");
        tokens.push_back("w" + std::to_string(i % 3));
        docs.push_back(doc("d" + std::to_string(i), tokens));
    }
    auto idx = InvertedIndex::build(docs);
    text::TokenSequence q{{"t", "w1"}, text::Lang::ar};
    auto full = idx.preselect(q, 1000);
    for (std::size_t k : {1u, 5u, 10u}) {
        auto cut = idx.preselect(q, k);
        REQUIRE(cut.entries.size() == std::min(k, full.entries.size()));
        for (std::size_t i = 0; i < cut.entries.size(); ++i) {
            CHECK(cut.entries[i].doc_id == full.entries[i].doc_id);
            CHECK(cut.entries[i].score == full.entries[i].score);
        }
    }
}

TEST_CASE("empty queries and unknown docs are rejected or harmless") {
    std::vector<Document> docs = {doc("d1", {"a"})};
    auto idx = InvertedIndex::build(docs);
    text::TokenSequence empty{{}, text::Lang::ar};
    CHECK(idx.preselect(empty, 10).entries.empty());
    text::TokenSequence q{{"a"}, text::Lang::ar};
    CHECK_THROWS_AS(idx.bm25_score(q, "nope"), ContractError);
}

TEST_CASE("duplicate corpus ids are rejected at build time") {
    std::vector<Document> docs = {doc("d1", {"a"}), doc("d1", {"b"})};
    CHECK_THROWS_AS(InvertedIndex::build(docs), ContractError);
}

TEST_CASE("corpus loads from json lines and tokenizes as arabic") {
    auto path = std::filesystem::temp_directory_path() / "corpus_mini.jsonl";
    {
        std::ofstream out(path, std::ios::binary);
        out << R"({"id": "d1", "text": "أحمد wins"})" << "\n";
        out << R"({"id": "d2", "text": "second doc"})" << "\n";
    }
    auto docs = load_corpus(path.string());
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].id == "d1");
    REQUIRE(docs[0].tokens.size() == 2);
    // alef madda/hamza folding applied by the arabic tokenizer
    CHECK(docs[0].tokens[0] == "احمد");
    CHECK(docs[0].tokens[1] == "wins");
}

TEST_CASE("corpus loader reports the offending line") {
    auto path = std::filesystem::temp_directory_path() / "corpus_bad.jsonl";
    {
        std::ofstream out(path, std::ios::binary);
        out << R"({"id": "d1", "text": "ok"})" << "\n";
        out << "not json\n";
    }
    try {
        load_corpus(path.string());
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}
