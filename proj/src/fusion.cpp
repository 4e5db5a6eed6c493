#include "xlir/fusion.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <unordered_set>

#include "xlir/common.hpp"

namespace xlir::fusion {

namespace {

// Checks the RankedList invariants fusion relies on and returns the topic id
// shared by all inputs.
std::string validate_inputs(const std::vector<RankedList>& lists, const char* op) {
    if (lists.empty()) throw ContractError(std::string(op) + ": need at least one input list");
    const std::string& topic = lists.front().topic_id;
    for (const RankedList& list : lists) {
        if (list.topic_id != topic) {
            throw ContractError(std::string(op) + ": mixed topics '" + topic + "' and '" +
                                list.topic_id + "'");
        }
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i < list.entries.size(); ++i) {
            if (list.entries[i].rank != static_cast<int>(i) + 1) {
                throw ContractError(std::string(op) + ": ranks not contiguous in topic '" +
                                    topic + "'");
            }
            if (!seen.insert(list.entries[i].doc_id).second) {
                throw ContractError(std::string(op) + ": duplicate doc '" +
                                    list.entries[i].doc_id + "' in topic '" + topic + "'");
            }
        }
    }
    return topic;
}

RankedList assemble(std::string topic, const std::map<std::string, double>& scores) {
    RankedList out;
    out.topic_id = std::move(topic);
    out.component = Component::fused;
    for (const auto& [doc_id, score] : scores) out.entries.push_back({doc_id, 0, score});
    sort_and_rank(out);
    return out;
}

// Min-max normalization over the finite scores of one list; sentinel (-inf)
// scores map to 0, constant lists to 0.5.
std::vector<double> minmax_normalize(const RankedList& list) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const RankedEntry& e : list.entries) {
        if (!std::isfinite(e.score)) continue;
        lo = std::min(lo, e.score);
        hi = std::max(hi, e.score);
    }
    std::vector<double> out(list.entries.size(), 0.0);
    const bool any_finite = lo <= hi;
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
        const double s = list.entries[i].score;
        if (!std::isfinite(s)) continue;
        out[i] = (!any_finite || hi == lo) ? 0.5 : (s - lo) / (hi - lo);
    }
    return out;
}

}  // namespace

std::string_view to_string(Method m) {
    switch (m) {
        case Method::rrf: return "rrf";
        case Method::combsum: return "combsum";
        case Method::combmnz: return "combmnz";
        case Method::isr: return "isr";
    }
    throw ContractError("to_string: invalid fusion method");
}

Method method_from_string(std::string_view s) {
    if (s == "rrf") return Method::rrf;
    if (s == "combsum") return Method::combsum;
    if (s == "combmnz") return Method::combmnz;
    if (s == "isr") return Method::isr;
    throw ContractError("unknown fusion method '" + std::string(s) +
                        "' (expected rrf, combsum, combmnz or isr)");
}

RankedList rrf(const std::vector<RankedList>& lists, double k) {
    if (k <= 0) throw ContractError("rrf: k must be positive");
    std::string topic = validate_inputs(lists, "rrf");
    std::map<std::string, double> scores;
    for (const RankedList& list : lists) {
        for (const RankedEntry& e : list.entries) {
            scores[e.doc_id] += 1.0 / (static_cast<double>(e.rank) + k);
        }
    }
    return assemble(std::move(topic), scores);
}

RankedList combsum(const std::vector<RankedList>& lists) {
    std::string topic = validate_inputs(lists, "combsum");
    std::map<std::string, double> scores;
    for (const RankedList& list : lists) {
        const std::vector<double> norm = minmax_normalize(list);
        for (std::size_t i = 0; i < list.entries.size(); ++i) {
            scores[list.entries[i].doc_id] += norm[i];
        }
    }
    return assemble(std::move(topic), scores);
}

RankedList combmnz(const std::vector<RankedList>& lists) {
    std::string topic = validate_inputs(lists, "combmnz");
    std::map<std::string, double> sums;
    std::map<std::string, int> counts;
    for (const RankedList& list : lists) {
        const std::vector<double> norm = minmax_normalize(list);
        for (std::size_t i = 0; i < list.entries.size(); ++i) {
            sums[list.entries[i].doc_id] += norm[i];
            counts[list.entries[i].doc_id] += 1;
        }
    }
    std::map<std::string, double> scores;
    for (const auto& [doc_id, sum] : sums) scores[doc_id] = sum * counts[doc_id];
    return assemble(std::move(topic), scores);
}

RankedList isr(const std::vector<RankedList>& lists) {
    std::string topic = validate_inputs(lists, "isr");
    std::map<std::string, double> sums;
    std::map<std::string, int> counts;
    for (const RankedList& list : lists) {
        for (const RankedEntry& e : list.entries) {
            const double r = static_cast<double>(e.rank);
            sums[e.doc_id] += 1.0 / (r * r);
            counts[e.doc_id] += 1;
        }
    }
    std::map<std::string, double> scores;
    for (const auto& [doc_id, sum] : sums) scores[doc_id] = sum * counts[doc_id];
    return assemble(std::move(topic), scores);
}

RankedList fuse(const std::vector<RankedList>& lists, const FusionConfig& cfg) {
    switch (cfg.method) {
        case Method::rrf: return rrf(lists, cfg.rrf_k);
        case Method::combsum: return combsum(lists);
        case Method::combmnz: return combmnz(lists);
        case Method::isr: return isr(lists);
    }
    throw ContractError("fuse: invalid fusion method");
}

TwoStepResult two_step_fuse(const std::vector<RankedList>& bm25_lists,
                            const std::vector<RankedList>& neural_lists,
                            const FusionConfig& cfg) {
    if (bm25_lists.empty() && neural_lists.empty()) {
        throw ContractError("two_step_fuse: both families are empty");
    }
    TwoStepResult result;
    if (!bm25_lists.empty()) {
        result.bm25_fused = fuse(bm25_lists, cfg);
        result.bm25_fused.stage = Stage::bm25_fused;
    }
    if (!neural_lists.empty()) {
        result.neural_fused = fuse(neural_lists, cfg);
        result.neural_fused.stage = Stage::neural_fused;
    }
    if (bm25_lists.empty() || neural_lists.empty()) {
        const RankedList& present =
            bm25_lists.empty() ? result.neural_fused : result.bm25_fused;
        std::cerr << "warning: topic " << present.topic_id << ": "
                  << (bm25_lists.empty() ? "bm25" : "neural")
                  << " family is empty; final list is the other family's fusion\n";
        result.final_fused = present;
    } else {
        result.final_fused = fuse({result.bm25_fused, result.neural_fused}, cfg);
    }
    result.final_fused.stage = Stage::final_fused;
    result.final_fused.component = Component::fused;
    return result;
}

}  // namespace xlir::fusion
