#include "xlir/embed.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <string_view>

#include "xlir/common.hpp"

namespace xlir::embed {

namespace {

std::string_view strip_lang_prefix(std::string_view token) {
    if (token.size() > 3 && (token.substr(0, 3) == "en:" || token.substr(0, 3) == "ar:")) {
        return token.substr(3);
    }
    return token;
}

// Splits on single spaces; embedding rows never contain runs of whitespace.
std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (start <= line.size()) {
        std::size_t end = line.find(' ', start);
        if (end == std::string_view::npos) end = line.size();
        if (end > start) fields.push_back(line.substr(start, end - start));
        start = end + 1;
    }
    return fields;
}

double parse_double(std::string_view s, const std::string& path, std::size_t line_no) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError(path, line_no, "bad number '" + std::string(s) + "'");
    }
    return v;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

EmbeddingTable::EmbeddingTable(int dim, std::vector<std::string> tokens,
                               std::vector<double> data, int duplicates_ignored)
    : dim_(dim), duplicates_ignored_(duplicates_ignored), data_(std::move(data)) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        index_.emplace(std::move(tokens[i]), i);
    }
}

std::optional<std::span<const double>> EmbeddingTable::lookup(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return std::span<const double>(data_.data() + it->second * dim_, dim_);
}

EmbeddingTable load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
    strip_cr(line);
    auto header = split_fields(line);
    if (header.size() != 2) throw ParseError(path, 1, "header must be 'V D'");
    long rows = 0, dim = 0;
    auto r1 = std::from_chars(header[0].data(), header[0].data() + header[0].size(), rows);
    auto r2 = std::from_chars(header[1].data(), header[1].data() + header[1].size(), dim);
    if (r1.ec != std::errc() || r2.ec != std::errc() || rows < 0 || dim < 1) {
        throw ParseError(path, 1, "header must be 'V D' with V >= 0, D >= 1");
    }

    std::vector<std::string> tokens;
    std::vector<double> data;
    tokens.reserve(rows);
    data.reserve(static_cast<std::size_t>(rows) * dim);
    std::unordered_map<std::string, bool> seen;
    int duplicates = 0;

    for (long r = 0; r < rows; ++r) {
        std::size_t line_no = static_cast<std::size_t>(r) + 2;
        if (!std::getline(in, line)) {
            throw ParseError(path, line_no, "expected " + std::to_string(rows) +
                                                " rows, file ended early");
        }
        strip_cr(line);
        auto fields = split_fields(line);
        if (fields.size() != static_cast<std::size_t>(dim) + 1) {
            throw ParseError(path, line_no,
                             "expected token + " + std::to_string(dim) + " values, got " +
                                 std::to_string(fields.empty() ? 0 : fields.size() - 1));
        }
        std::string token(strip_lang_prefix(fields[0]));
        if (!seen.emplace(token, true).second) {
            ++duplicates;
            continue;
        }
        tokens.push_back(std::move(token));
        for (std::size_t i = 1; i < fields.size(); ++i) {
            data.push_back(parse_double(fields[i], path, line_no));
        }
    }
    return EmbeddingTable(static_cast<int>(dim), std::move(tokens), std::move(data), duplicates);
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw ContractError("cosine: dimension mismatch " + std::to_string(u.size()) + " vs " +
                            std::to_string(v.size()));
    }
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

Lexicon load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    Lexicon lex;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw ParseError(path, line_no, "expected exactly one tab");
        }
        auto en = text::tokenize(line.substr(0, tab), text::Lang::en);
        auto ar = text::tokenize(line.substr(tab + 1), text::Lang::ar);
        if (en.tokens.size() != 1 || ar.tokens.size() != 1) {
            throw ParseError(path, line_no, "each side must be a single token");
        }
        lex.entries[en.tokens[0]].push_back(ar.tokens[0]);
    }
    return lex;
}

text::TokenSequence translate_tokens(const Lexicon& lex, const text::TokenSequence& seq) {
    if (seq.lang != text::Lang::en) {
        throw ContractError("translate_tokens: input must be English");
    }
    text::TokenSequence out;
    out.lang = text::Lang::ar;
    for (const auto& token : seq.tokens) {
        if (const std::string* ar = lex.first(token)) out.tokens.push_back(*ar);
    }
    return out;
}

}  // namespace xlir::embed
