#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xlir/common.hpp"
#include "xlir/metrics.hpp"

using namespace xlir;
using namespace xlir::metrics;

namespace {

RankedList make_run(const std::string& topic, std::vector<std::string> docs) {
    RankedList list;
    list.topic_id = topic;
    double score = static_cast<double>(docs.size());
    for (auto& id : docs) list.entries.push_back({id, 0, score--});
    sort_and_rank(list);
    return list;
}

Qrels make_qrels(const std::string& topic, std::vector<std::string> relevant,
                 std::vector<std::string> judged_zero = {}) {
    Qrels q;
    for (const auto& id : relevant) q.topics[topic][id] = 1;
    for (const auto& id : judged_zero) q.topics[topic][id] = 0;
    return q;
}

// Clean-room nDCG: DCG with gains rel_i / log2(i+1), ideal list truncated at
// the number of relevant docs.
double ndcg_oracle(const std::vector<int>& gains_in_rank_order, std::size_t n_relevant, int k) {
    double dcg = 0;
    for (std::size_t i = 0; i < gains_in_rank_order.size() && i < static_cast<std::size_t>(k);
         ++i) {
        dcg += gains_in_rank_order[i] / std::log2(static_cast<double>(i) + 2.0);
    }
    double idcg = 0;
    for (std::size_t i = 0; i < std::min<std::size_t>(n_relevant, static_cast<std::size_t>(k));
         ++i) {
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return idcg == 0 ? 0.0 : dcg / idcg;
}

std::string temp_qrels(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path.string();
}

}  // namespace

TEST_CASE("precision divides by k even when the run is shorter") {
    auto qrels = make_qrels("T1", {"d1", "d2", "d3"});
    auto run = make_run("T1", {"d1", "x1", "d2"});
    CHECK(precision_at_k(run, qrels, 10) == doctest::Approx(2.0 / 10.0));
    CHECK(precision_at_k(run, qrels, 2) == doctest::Approx(1.0 / 2.0));
    CHECK(precision_at_k(run, qrels, 3) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("recall divides by the number of relevant docs") {
    auto qrels = make_qrels("T1", {"d1", "d2", "d3", "d4"});
    auto run = make_run("T1", {"d1", "x1", "d2", "x2"});
    CHECK(recall_at_k(run, qrels, 10) == doctest::Approx(2.0 / 4.0));
    CHECK(recall_at_k(run, qrels, 1) == doctest::Approx(1.0 / 4.0));
}

TEST_CASE("ndcg matches the clean-room oracle on a mixed ranking") {
    auto qrels = make_qrels("T1", {"d1", "d2", "d3"});
    auto run = make_run("T1", {"x1", "d1", "x2", "d2", "x3"});
    // gains by rank: 0 1 0 1 0; three relevant total
    CHECK(ndcg_at_k(run, qrels, 5) ==
          doctest::Approx(ndcg_oracle({0, 1, 0, 1, 0}, 3, 5)).epsilon(1e-12));
    CHECK(ndcg_at_k(run, qrels, 2) ==
          doctest::Approx(ndcg_oracle({0, 1}, 3, 2)).epsilon(1e-12));
}

TEST_CASE("a perfect prefix scores ndcg 1 and a fully irrelevant one 0") {
    auto qrels = make_qrels("T1", {"d1", "d2"});
    auto perfect = make_run("T1", {"d1", "d2", "x1", "x2"});
    CHECK(ndcg_at_k(perfect, qrels, 10) == doctest::Approx(1.0).epsilon(1e-12));
    auto wrong = make_run("T1", {"x1", "x2", "x3"});
    CHECK(ndcg_at_k(wrong, qrels, 10) == 0.0);
}

TEST_CASE("the ideal dcg truncates at the relevant count, not at k") {
    // two relevant docs, k = 10: idcg = 1 + 1/log2(3), nothing beyond
    auto qrels = make_qrels("T1", {"d1", "d2"});
    auto run = make_run("T1", {"d1", "x1", "d2"});
    double dcg = 1.0 + 1.0 / std::log2(4.0);
    double idcg = 1.0 + 1.0 / std::log2(3.0);
    CHECK(ndcg_at_k(run, qrels, 10) == doctest::Approx(dcg / idcg).epsilon(1e-12));
}

TEST_CASE("swapping a relevant doc upward never hurts any metric") {
    auto qrels = make_qrels("T1", {"d1", "d2", "d3"});
    Rng rng(61);
    std::vector<std::string> docs;
    for (int i = 0; i < 20; ++i) docs.push_back("x" + std::to_string(i));
    docs[4] = "d1";
    docs[11] = "d2";
    docs[17] = "d3";

    for (int trial = 0; trial < 100; ++trial) {
        auto base = make_run("T1", docs);
        // pick a relevant doc and swap it one position up
        std::vector<std::size_t> rel_positions;
        for (std::size_t i = 1; i < docs.size(); ++i) {
            if (qrels.grade("T1", docs[i]) == 1) rel_positions.push_back(i);
        }
        std::size_t pick = rel_positions[rng.uniform_int(rel_positions.size())];
        auto improved_docs = docs;
        std::swap(improved_docs[pick], improved_docs[pick - 1]);
        auto improved = make_run("T1", improved_docs);

        for (int k : {5, 10, 20}) {
            CHECK(precision_at_k(improved, qrels, k) >= precision_at_k(base, qrels, k));
            CHECK(recall_at_k(improved, qrels, k) >= recall_at_k(base, qrels, k));
            CHECK(ndcg_at_k(improved, qrels, k) >= ndcg_at_k(base, qrels, k));
        }
        docs = improved_docs;  // keep walking the relevant docs upward
    }
}

TEST_CASE("duplicate docs in a run are rejected") {
    auto qrels = make_qrels("T1", {"d1"});
    auto run = make_run("T1", {"d1", "x1"});
    run.entries[1].doc_id = "d1";
    CHECK_THROWS_AS(precision_at_k(run, qrels, 10), ContractError);
}

TEST_CASE("metrics at k < 1 are rejected") {
    auto qrels = make_qrels("T1", {"d1"});
    auto run = make_run("T1", {"d1"});
    CHECK_THROWS_AS(precision_at_k(run, qrels, 0), ContractError);
}

TEST_CASE("recall and ndcg require a topic with relevant docs") {
    Qrels qrels;
    qrels.topics["T1"]["d9"] = 0;  // judged but nothing relevant
    auto run = make_run("T1", {"d1"});
    CHECK_THROWS_AS(recall_at_k(run, qrels, 10), ContractError);
    CHECK_THROWS_AS(ndcg_at_k(run, qrels, 10), ContractError);
}

TEST_CASE("qrels files parse, reject junk, and report the line") {
    auto good = temp_qrels("qrels_good.txt",
                           "T1 0 d1 1\n"
                           "T1 0 d2 0\n"
                           "\n"
                           "T2 0 d1 1\n");
    auto qrels = load_qrels(good);
    CHECK(qrels.grade("T1", "d1") == 1);
    CHECK(qrels.grade("T1", "d2") == 0);
    CHECK(qrels.grade("T1", "unjudged") == 0);
    CHECK(qrels.n_relevant("T1") == 1);
    CHECK(qrels.n_relevant("T2") == 1);

    CHECK_THROWS_AS(load_qrels(temp_qrels("qrels_grade.txt", "T1 0 d1 2\n")), ParseError);
    CHECK_THROWS_AS(load_qrels(temp_qrels("qrels_short.txt", "T1 0 d1\n")), ParseError);
    CHECK_THROWS_AS(load_qrels(temp_qrels("qrels_dup.txt", "T1 0 d1 1\nT1 0 d1 0\n")),
                    ParseError);
    try {
        load_qrels(temp_qrels("qrels_line.txt", "T1 0 d1 1\nbroken\n"));
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

TEST_CASE("evaluation counts absent topics as zero and warns about extras") {
    Qrels qrels;
    qrels.topics["T1"]["d1"] = 1;
    qrels.topics["T2"]["d1"] = 1;
    qrels.topics["T3"]["junk"] = 0;  // no relevant docs: excluded

    std::vector<RankedList> run = {
        make_run("T1", {"d1", "x1"}),
        make_run("T9", {"d1"}),  // not judged: ignored
    };
    auto report = evaluate_run(run, qrels, 10);

    // T1 scores, T2 counts as all-zero, T3 excluded, T9 ignored
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].topic_id == "T1");
    CHECK(report.rows[1].topic_id == "T2");
    CHECK(report.rows[1].precision == 0.0);
    CHECK(report.rows[1].recall == 0.0);
    CHECK(report.rows[1].ndcg == 0.0);
    CHECK(report.mean_recall == doctest::Approx(0.5));
    CHECK(report.mean_ndcg == doctest::Approx(0.5));
    REQUIRE(report.excluded.size() == 1);
    CHECK(report.excluded[0] == "T3");
    REQUIRE(report.ignored.size() == 1);
    CHECK(report.ignored[0] == "T9");
}

TEST_CASE("duplicate topics in a run are rejected") {
    Qrels qrels;
    qrels.topics["T1"]["d1"] = 1;
    std::vector<RankedList> run = {make_run("T1", {"d1"}), make_run("T1", {"d2"})};
    CHECK_THROWS_AS(evaluate_run(run, qrels, 10), ContractError);
}

TEST_CASE("the report table carries one row per topic plus the mean") {
    Qrels qrels;
    qrels.topics["T1"]["d1"] = 1;
    std::vector<RankedList> run = {make_run("T1", {"d1"})};
    auto report = evaluate_run(run, qrels, 10);
    auto text = format_report(report, "unit-test");
    CHECK(text.find("T1") != std::string::npos);
    CHECK(text.find("mean") != std::string::npos);
    CHECK(text.find("1.0000") != std::string::npos);  // perfect recall and ndcg
}
