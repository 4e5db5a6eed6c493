#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace xlir {

enum class Component { title, background, event_knowledge, example, fused };
enum class Stage { bm25, neural, bm25_fused, neural_fused, final_fused };

std::string_view to_string(Component c);
std::string_view to_string(Stage s);
Component component_from_string(std::string_view s);

struct RankedEntry {
    std::string doc_id;
    int rank = 0;
    double score = 0.0;
};

// Ordered result list for one topic. Ranks are contiguous 1..n, scores
// non-increasing with rank, doc ids unique.
struct RankedList {
    std::string topic_id;
    Component component = Component::fused;
    Stage stage = Stage::bm25;
    std::vector<RankedEntry> entries;
};

// Sorts entries by (score desc, doc id asc) and reassigns ranks 1..n.
// The single deterministic ordering rule used by every stage.
void sort_and_rank(RankedList& list);

// TREC run format: "topic_id Q0 doc_id rank score tag". Lists are written in
// the given order; scores with enough digits to preserve ordering on re-read.
void write_run(std::ostream& out, const std::vector<RankedList>& lists, std::string_view tag);
void write_run_file(const std::string& path, const std::vector<RankedList>& lists,
                    std::string_view tag);

// Groups lines by topic (file order), orders each topic's entries by the rank
// column, and reassigns contiguous ranks. Accepts "-inf" scores.
std::vector<RankedList> read_run_file(const std::string& path);

}  // namespace xlir
