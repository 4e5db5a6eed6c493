#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "xlir/ranked_list.hpp"

namespace xlir::metrics {

// Binary relevance judgments. Absent pairs mean grade 0. Ordered maps keep
// every report iteration deterministic.
struct Qrels {
    std::map<std::string, std::map<std::string, int>> topics;

    int grade(const std::string& topic_id, const std::string& doc_id) const;
    std::size_t n_relevant(const std::string& topic_id) const;
};

// Lines of "topic_id 0 doc_id rel"; rel must be 0 or 1.
Qrels load_qrels(const std::string& path);

// Top-k metrics over one topic's ranked entries. recall/ndcg require at
// least one relevant doc for the topic.
double precision_at_k(const RankedList& run, const Qrels& qrels, int k = 10);
double recall_at_k(const RankedList& run, const Qrels& qrels, int k = 10);
double ndcg_at_k(const RankedList& run, const Qrels& qrels, int k = 10);

struct TopicMetrics {
    std::string topic_id;
    double precision = 0.0;
    double recall = 0.0;
    double ndcg = 0.0;
};

struct Report {
    int k = 10;
    std::vector<TopicMetrics> rows;  // sorted by topic id
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_ndcg = 0.0;
    std::vector<std::string> excluded;  // qrels topics with no relevant doc
    std::vector<std::string> ignored;   // run topics absent from the qrels
};

// Macro-averaged evaluation. Qrels topics missing from the run score zero
// and count toward the mean; run-only topics are ignored and zero-relevant
// topics excluded (both with stderr warnings).
Report evaluate_run(const std::vector<RankedList>& run, const Qrels& qrels, int k = 10);

// Fixed-width text table, one row per topic plus the macro mean.
std::string format_report(const Report& report, std::string_view system_name);

}  // namespace xlir::metrics
