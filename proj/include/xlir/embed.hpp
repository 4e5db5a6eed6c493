#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlir/text.hpp"

namespace xlir::embed {

// Shared English-Arabic vector space. One namespace for both scripts; optional
// "en:"/"ar:" token prefixes in the source file are stripped on load.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(int dim, std::vector<std::string> tokens, std::vector<double> data,
                   int duplicates_ignored = 0);

    int dim() const { return dim_; }
    int rows() const { return static_cast<int>(index_.size()); }
    int duplicates_ignored() const { return duplicates_ignored_; }

    // Exact-match lookup; callers normalize tokens through xlir::text first.
    std::optional<std::span<const double>> lookup(const std::string& token) const;

private:
    int dim_ = 0;
    int duplicates_ignored_ = 0;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<double> data_;
};

// word2vec text format: header "V D", then V lines "token v1 ... vD".
// Later duplicates of a token are skipped and counted.
EmbeddingTable load_embeddings(const std::string& path);

// u.v / (|u||v|); 0 when either norm is zero. Throws ContractError on
// dimension mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

struct Lexicon {
    // english token -> arabic candidates in file order
    std::unordered_map<std::string, std::vector<std::string>> entries;

    const std::string* first(const std::string& english) const {
        auto it = entries.find(english);
        if (it == entries.end() || it->second.empty()) return nullptr;
        return &it->second.front();
    }
};

// UTF-8 TSV, one "english<TAB>arabic" pair per line; both sides are folded
// through the module text pipeline on load. Blank lines are skipped.
Lexicon load_lexicon(const std::string& path);

// Word-by-word translation: first lexicon entry wins, out-of-lexicon tokens
// are dropped, order preserved. Input must be English.
text::TokenSequence translate_tokens(const Lexicon& lex, const text::TokenSequence& seq);

}  // namespace xlir::embed
