#include "xlir/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "xlir/common.hpp"

namespace xlir::index {

InvertedIndex InvertedIndex::build(const std::vector<Document>& docs, Bm25Params params) {
    if (params.k1 <= 0) throw ContractError("bm25: k1 must be > 0");
    if (params.b < 0 || params.b > 1) throw ContractError("bm25: b must be in [0, 1]");

    InvertedIndex ix;
    ix.params_ = params;
    std::int64_t total_len = 0;
    for (const auto& doc : docs) {
        auto [it, inserted] = ix.doc_index_.emplace(doc.id, static_cast<std::int32_t>(ix.doc_ids_.size()));
        if (!inserted) throw ContractError("duplicate doc id: " + doc.id);
        const std::int32_t internal = it->second;
        ix.doc_ids_.push_back(doc.id);
        ix.doc_len_.push_back(static_cast<std::int32_t>(doc.tokens.size()));
        total_len += static_cast<std::int64_t>(doc.tokens.size());

        std::unordered_map<std::string, std::int32_t> tf;
        for (const auto& token : doc.tokens) ++tf[token];
        for (const auto& [term, count] : tf) {
            ix.postings_[term].push_back({internal, count});
        }
    }
    // tf maps iterate in unspecified order; restore ascending doc order.
    for (auto& [term, plist] : ix.postings_) {
        std::sort(plist.begin(), plist.end(),
                  [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
    }
    ix.avgdl_ = ix.doc_len_.empty() ? 0.0 : static_cast<double>(total_len) / ix.doc_len_.size();
    return ix;
}

std::int64_t InvertedIndex::doc_freq(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : static_cast<std::int64_t>(it->second.size());
}

double InvertedIndex::idf(const std::string& term) const {
    const double df = static_cast<double>(doc_freq(term));
    const double n = static_cast<double>(num_docs());
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

namespace {

double tf_saturation(double tf, double dl, double avgdl, const Bm25Params& p) {
    const double norm = avgdl > 0 ? dl / avgdl : 0.0;
    return tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

}  // namespace

double InvertedIndex::bm25_score(const text::TokenSequence& query, const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw ContractError("bm25_score: unknown doc id " + doc_id);
    const std::int32_t internal = it->second;
    const double dl = doc_len_[internal];

    double score = 0.0;
    for (const auto& term : query.tokens) {
        auto pit = postings_.find(term);
        if (pit == postings_.end()) continue;
        const auto& plist = pit->second;
        auto pos = std::lower_bound(plist.begin(), plist.end(), internal,
                                    [](const Posting& p, std::int32_t d) { return p.doc < d; });
        if (pos == plist.end() || pos->doc != internal) continue;
        score += idf(term) * tf_saturation(pos->tf, dl, avgdl_, params_);
    }
    return score;
}

RankedList InvertedIndex::preselect(const text::TokenSequence& query, std::size_t threshold) const {
    if (threshold < 1) throw ContractError("preselect: threshold must be >= 1");

    // Term-at-a-time accumulation; duplicate query terms contribute once per
    // occurrence (bag semantics), folded in via the multiplicity.
    std::unordered_map<std::string, std::int32_t> multiplicity;
    for (const auto& term : query.tokens) ++multiplicity[term];

    std::vector<double> acc(doc_len_.size(), 0.0);
    std::vector<std::int32_t> touched;
    for (const auto& [term, count] : multiplicity) {
        auto pit = postings_.find(term);
        if (pit == postings_.end()) continue;
        const double term_idf = idf(term);
        for (const auto& posting : pit->second) {
            if (acc[posting.doc] == 0.0) touched.push_back(posting.doc);
            acc[posting.doc] +=
                count * term_idf * tf_saturation(posting.tf, doc_len_[posting.doc], avgdl_, params_);
        }
    }

    RankedList out;
    out.stage = Stage::bm25;
    out.entries.reserve(touched.size());
    for (std::int32_t doc : touched) {
        if (acc[doc] > 0.0) out.entries.push_back({doc_ids_[doc], 0, acc[doc]});
    }
    sort_and_rank(out);
    if (out.entries.size() > threshold) {
        out.entries.resize(threshold);
    }
    return out;
}

std::vector<Document> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    std::vector<Document> docs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path, line_no, std::string("bad JSON: ") + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("text") ||
            !obj["id"].is_string() || !obj["text"].is_string()) {
            throw ParseError(path, line_no, "expected {\"id\": string, \"text\": string}");
        }
        Document doc;
        doc.id = obj["id"].get<std::string>();
        doc.tokens = text::tokenize(obj["text"].get<std::string>(), text::Lang::ar).tokens;
        docs.push_back(std::move(doc));
    }
    return docs;
}

}  // namespace xlir::index
