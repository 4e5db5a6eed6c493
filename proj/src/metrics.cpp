#include "xlir/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include "xlir/common.hpp"

namespace xlir::metrics {

namespace {

// Relevance grades of the top-min(k,n) entries, in rank order. Rejects
// duplicate doc ids, which would double-count relevance.
std::vector<int> top_grades(const RankedList& run, const Qrels& qrels, int k) {
    if (k < 1) throw ContractError("metrics: k must be positive");
    std::unordered_set<std::string> seen;
    for (const RankedEntry& e : run.entries) {
        if (!seen.insert(e.doc_id).second) {
            throw ContractError("metrics: duplicate doc '" + e.doc_id + "' in topic '" +
                                run.topic_id + "'");
        }
    }
    std::vector<int> grades;
    const std::size_t take = std::min(run.entries.size(), static_cast<std::size_t>(k));
    grades.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        grades.push_back(qrels.grade(run.topic_id, run.entries[i].doc_id));
    }
    return grades;
}

void require_relevant(const RankedList& run, const Qrels& qrels, const char* op) {
    if (qrels.n_relevant(run.topic_id) == 0) {
        throw ContractError(std::string(op) + ": topic '" + run.topic_id +
                            "' has no relevant docs");
    }
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

int Qrels::grade(const std::string& topic_id, const std::string& doc_id) const {
    auto t = topics.find(topic_id);
    if (t == topics.end()) return 0;
    auto d = t->second.find(doc_id);
    return d == t->second.end() ? 0 : d->second;
}

std::size_t Qrels::n_relevant(const std::string& topic_id) const {
    auto t = topics.find(topic_id);
    if (t == topics.end()) return 0;
    std::size_t n = 0;
    for (const auto& [doc, grade] : t->second) n += grade > 0 ? 1 : 0;
    return n;
}

Qrels load_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open qrels file");
    Qrels qrels;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string topic, zero, doc, rel_str;
        if (!(fields >> topic >> zero >> doc >> rel_str)) {
            throw ParseError(path, line_no, "expected 'topic_id 0 doc_id rel'");
        }
        std::string extra;
        if (fields >> extra) throw ParseError(path, line_no, "trailing fields");
        if (rel_str != "0" && rel_str != "1") {
            throw ParseError(path, line_no, "relevance grade must be 0 or 1, got '" + rel_str +
                                                "'");
        }
        auto [it, inserted] = qrels.topics[topic].emplace(doc, rel_str == "1" ? 1 : 0);
        if (!inserted) {
            throw ParseError(path, line_no,
                             "duplicate judgment for topic '" + topic + "' doc '" + doc + "'");
        }
    }
    return qrels;
}

double precision_at_k(const RankedList& run, const Qrels& qrels, int k) {
    const std::vector<int> grades = top_grades(run, qrels, k);
    int hits = 0;
    for (int g : grades) hits += g > 0 ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(k);
}

double recall_at_k(const RankedList& run, const Qrels& qrels, int k) {
    require_relevant(run, qrels, "recall_at_k");
    const std::vector<int> grades = top_grades(run, qrels, k);
    int hits = 0;
    for (int g : grades) hits += g > 0 ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(qrels.n_relevant(run.topic_id));
}

double ndcg_at_k(const RankedList& run, const Qrels& qrels, int k) {
    require_relevant(run, qrels, "ndcg_at_k");
    const std::vector<int> grades = top_grades(run, qrels, k);
    double dcg = 0;
    for (std::size_t i = 0; i < grades.size(); ++i) {
        if (grades[i] > 0) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    const std::size_t ideal =
        std::min(qrels.n_relevant(run.topic_id), static_cast<std::size_t>(k));
    double idcg = 0;
    for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

Report evaluate_run(const std::vector<RankedList>& run, const Qrels& qrels, int k) {
    if (k < 1) throw ContractError("evaluate_run: k must be positive");
    Report report;
    report.k = k;

    std::map<std::string, const RankedList*> by_topic;
    for (const RankedList& list : run) {
        if (!by_topic.emplace(list.topic_id, &list).second) {
            throw ContractError("evaluate_run: topic '" + list.topic_id +
                                "' appears twice in the run");
        }
    }
    for (const auto& [topic_id, unused] : by_topic) {
        if (!qrels.topics.count(topic_id)) {
            std::cerr << "warning: run topic '" << topic_id << "' has no judgments; ignored\n";
            report.ignored.push_back(topic_id);
        }
    }

    double sum_p = 0, sum_r = 0, sum_n = 0;
    for (const auto& [topic_id, unused] : qrels.topics) {
        if (qrels.n_relevant(topic_id) == 0) {
            std::cerr << "warning: topic '" << topic_id
                      << "' has no relevant docs; excluded from averages\n";
            report.excluded.push_back(topic_id);
            continue;
        }
        TopicMetrics row;
        row.topic_id = topic_id;
        auto it = by_topic.find(topic_id);
        if (it != by_topic.end()) {
            row.precision = precision_at_k(*it->second, qrels, k);
            row.recall = recall_at_k(*it->second, qrels, k);
            row.ndcg = ndcg_at_k(*it->second, qrels, k);
        }  // missing from the run: scored zero, still counted
        sum_p += row.precision;
        sum_r += row.recall;
        sum_n += row.ndcg;
        report.rows.push_back(std::move(row));
    }
    if (!report.rows.empty()) {
        const auto n = static_cast<double>(report.rows.size());
        report.mean_precision = sum_p / n;
        report.mean_recall = sum_r / n;
        report.mean_ndcg = sum_n / n;
    }
    return report;
}

std::string format_report(const Report& report, std::string_view system_name) {
    std::size_t width = 5;  // "topic" / "mean"
    for (const TopicMetrics& row : report.rows) width = std::max(width, row.topic_id.size());
    std::ostringstream out;
    const std::string k = std::to_string(report.k);
    out << "system: " << system_name << " (" << report.rows.size() << " topics)\n";
    out << std::string(width, ' ') << "  P@" << k << "    R@" << k << "    nDCG@" << k << '\n';
    auto pad = [&](const std::string& s) {
        return s + std::string(width > s.size() ? width - s.size() : 0, ' ');
    };
    for (const TopicMetrics& row : report.rows) {
        out << pad(row.topic_id) << "  " << fixed4(row.precision) << "  " << fixed4(row.recall)
            << "  " << fixed4(row.ndcg) << '\n';
    }
    out << pad("mean") << "  " << fixed4(report.mean_precision) << "  "
        << fixed4(report.mean_recall) << "  " << fixed4(report.mean_ndcg) << '\n';
    return out.str();
}

}  // namespace xlir::metrics
