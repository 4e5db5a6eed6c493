#include "xlir/ranked_list.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "xlir/common.hpp"

namespace xlir {

std::string_view to_string(Component c) {
    switch (c) {
        case Component::title: return "title";
        case Component::background: return "background";
        case Component::event_knowledge: return "event_knowledge";
        case Component::example: return "example";
        case Component::fused: return "fused";
    }
    return "?";
}

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::bm25: return "bm25";
        case Stage::neural: return "neural";
        case Stage::bm25_fused: return "bm25_fused";
        case Stage::neural_fused: return "neural_fused";
        case Stage::final_fused: return "final";
    }
    return "?";
}

Component component_from_string(std::string_view s) {
    if (s == "title") return Component::title;
    if (s == "background") return Component::background;
    if (s == "event_knowledge") return Component::event_knowledge;
    if (s == "example") return Component::example;
    if (s == "fused") return Component::fused;
    throw ContractError("unknown component '" + std::string(s) + "'");
}

void sort_and_rank(RankedList& list) {
    std::sort(list.entries.begin(), list.entries.end(),
              [](const RankedEntry& a, const RankedEntry& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return a.doc_id < b.doc_id;
              });
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
        list.entries[i].rank = static_cast<int>(i) + 1;
    }
}

namespace {

std::string format_score(double score) {
    char buf[48];
    if (std::isinf(score)) {
        return score < 0 ? "-inf" : "inf";
    }
    std::snprintf(buf, sizeof(buf), "%.6f", score);
    return buf;
}

}  // namespace

void write_run(std::ostream& out, const std::vector<RankedList>& lists, std::string_view tag) {
    for (const auto& list : lists) {
        for (const auto& e : list.entries) {
            out << list.topic_id << " Q0 " << e.doc_id << ' ' << e.rank << ' '
                << format_score(e.score) << ' ' << tag << '\n';
        }
    }
}

void write_run_file(const std::string& path, const std::vector<RankedList>& lists,
                    std::string_view tag) {
    std::ofstream out(path);
    if (!out) throw ContractError("cannot write run file " + path);
    write_run(out, lists, tag);
}

std::vector<RankedList> read_run_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");

    std::vector<RankedList> lists;
    std::map<std::string, std::size_t> topic_pos;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string topic, q0, doc, score_str, tag;
        long rank;
        if (!(ss >> topic >> q0 >> doc >> rank >> score_str >> tag)) {
            throw ParseError(path, line_no, "expected 'topic Q0 doc rank score tag'");
        }
        double score;
        if (score_str == "-inf") {
            score = -std::numeric_limits<double>::infinity();
        } else if (score_str == "inf") {
            score = std::numeric_limits<double>::infinity();
        } else {
            try {
                score = std::stod(score_str);
            } catch (const std::exception&) {
                throw ParseError(path, line_no, "bad score '" + score_str + "'");
            }
        }
        auto [it, inserted] = topic_pos.emplace(topic, lists.size());
        if (inserted) {
            RankedList list;
            list.topic_id = topic;
            lists.push_back(std::move(list));
        }
        lists[it->second].entries.push_back(
            {std::move(doc), static_cast<int>(rank), score});
    }
    for (auto& list : lists) {
        std::stable_sort(list.entries.begin(), list.entries.end(),
                         [](const RankedEntry& a, const RankedEntry& b) { return a.rank < b.rank; });
        for (std::size_t i = 0; i < list.entries.size(); ++i) {
            list.entries[i].rank = static_cast<int>(i) + 1;
        }
    }
    return lists;
}

}  // namespace xlir
