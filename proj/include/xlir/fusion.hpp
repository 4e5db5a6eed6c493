#pragma once

#include <string_view>
#include <vector>

#include "xlir/ranked_list.hpp"

namespace xlir::fusion {

enum class Method { rrf, combsum, combmnz, isr };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

struct FusionConfig {
    Method method = Method::rrf;
    double rrf_k = 10.0;
};

// All fusers take >= 1 list for one topic and return a list with
// component=fused; the caller sets the output stage. Docs absent from a
// list contribute nothing. Ordering is (score desc, doc id asc).

// S_d = sum over lists containing d of 1 / (rank + k).
RankedList rrf(const std::vector<RankedList>& lists, double k = 10.0);

// Per-list min-max normalization to [0,1] over finite scores (constant list
// -> 0.5 everywhere, -inf sentinel -> 0), then S_d = sum of normalized scores.
RankedList combsum(const std::vector<RankedList>& lists);

// CombSUM score times the number of lists containing the doc.
RankedList combmnz(const std::vector<RankedList>& lists);

// S_d = n_d * sum over lists of 1 / rank^2, n_d = number of lists with d.
RankedList isr(const std::vector<RankedList>& lists);

RankedList fuse(const std::vector<RankedList>& lists, const FusionConfig& cfg);

struct TwoStepResult {
    RankedList bm25_fused;
    RankedList neural_fused;
    RankedList final_fused;
};

// Fuses each family's component lists, then the two fused lists, with the
// same method throughout. An empty family passes the other side through
// (logged to stderr); both empty is an error.
TwoStepResult two_step_fuse(const std::vector<RankedList>& bm25_lists,
                            const std::vector<RankedList>& neural_lists, const FusionConfig& cfg);

}  // namespace xlir::fusion
