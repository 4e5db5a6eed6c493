#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlir/ranked_list.hpp"
#include "xlir/text.hpp"

namespace xlir::index {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Document {
    std::string id;
    std::vector<std::string> tokens;  // normalized Arabic, full length
};

// Inverted index with Okapi-style scoring. Postings per term are kept in
// document insertion order, which is also ascending internal id order.
class InvertedIndex {
public:
    struct Posting {
        std::int32_t doc = 0;  // internal id
        std::int32_t tf = 0;
    };

    static InvertedIndex build(const std::vector<Document>& docs, Bm25Params params = {});

    std::int64_t num_docs() const { return static_cast<std::int64_t>(doc_len_.size()); }
    std::int64_t num_terms() const { return static_cast<std::int64_t>(postings_.size()); }
    double avgdl() const { return avgdl_; }
    const Bm25Params& params() const { return params_; }
    bool contains(const std::string& doc_id) const { return doc_index_.count(doc_id) > 0; }

    // df is the number of documents containing the term (0 for unseen terms).
    std::int64_t doc_freq(const std::string& term) const;

    // Non-negative idf: ln(1 + (N - df + 0.5) / (df + 0.5)).
    double idf(const std::string& term) const;

    // Sum over query tokens (bag semantics) of idf * tf*(k1+1) / (tf + k1*(1-b+b*dl/avgdl)).
    // Throws ContractError if doc_id is not indexed.
    double bm25_score(const text::TokenSequence& query, const std::string& doc_id) const;

    // Top-`threshold` documents with positive score, ranks 1..n by descending
    // score, ties by ascending doc id. stage=bm25; topic/component left to the
    // caller.
    RankedList preselect(const text::TokenSequence& query, std::size_t threshold) const;

private:
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::int32_t> doc_index_;
    std::vector<std::int32_t> doc_len_;
    double avgdl_ = 0.0;
    Bm25Params params_;
};

// JSON-lines corpus, one {"id": ..., "text": ...} object per line; text is
// tokenized as Arabic.
std::vector<Document> load_corpus(const std::string& path);

}  // namespace xlir::index
