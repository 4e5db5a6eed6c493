#include "xlir/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "xlir/text.hpp"

namespace xlir::pipeline {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ContractError("config key '" + key + "' expects true/false, got '" + value + "'");
}

std::int64_t parse_int(const std::string& value, const std::string& key) {
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ContractError("config key '" + key + "' expects an integer, got '" + value + "'");
    }
}

double parse_real(const std::string& value, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ContractError("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

std::vector<Component> parse_components(const std::string& value) {
    std::vector<Component> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(component_from_string(item));
    }
    if (out.empty()) throw ContractError("config key 'components' names no components");
    return out;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// Embedded doc matrices shared across topics and components of one run.
class EmbCache {
public:
    EmbCache(const embed::EmbeddingTable& table,
             const std::unordered_map<std::string, std::vector<std::string>>& doc_tokens,
             std::size_t d_max)
        : table_(table), doc_tokens_(doc_tokens), d_max_(d_max) {}

    const std::optional<numeric::Array>& get(const std::string& doc_id) {
        auto it = cache_.find(doc_id);
        if (it != cache_.end()) return it->second;
        auto tok = doc_tokens_.find(doc_id);
        if (tok == doc_tokens_.end()) {
            throw ContractError("rerank: doc '" + doc_id + "' is not in the corpus");
        }
        auto [ins, unused] =
            cache_.emplace(doc_id, rank::embed_matrix(table_, tok->second, d_max_));
        return ins->second;
    }

private:
    const embed::EmbeddingTable& table_;
    const std::unordered_map<std::string, std::vector<std::string>>& doc_tokens_;
    std::size_t d_max_;
    std::unordered_map<std::string, std::optional<numeric::Array>> cache_;
};

// Scores one pool against one embedded query; entries sorted by the shared
// ordering rule, sentinel scores last.
RankedList score_pool(const rank::Model& model, const numeric::Array& q_emb,
                      const RankedList& pool, EmbCache& docs) {
    RankedList out;
    out.topic_id = pool.topic_id;
    out.component = pool.component;
    out.stage = Stage::neural;
    for (const RankedEntry& e : pool.entries) {
        const std::optional<numeric::Array>& d_emb = docs.get(e.doc_id);
        const double score =
            d_emb ? rank::score_pair(model, q_emb, *d_emb) : rank::kScoreSentinel;
        out.entries.push_back({e.doc_id, 0, score});
    }
    sort_and_rank(out);
    return out;
}

void write_run_atomic(const std::string& path, const std::vector<RankedList>& lists,
                      std::string_view tag) {
    const std::string tmp = path + ".tmp";
    write_run_file(tmp, lists, tag);
    fs::rename(tmp, path);
}

}  // namespace

std::vector<Topic> load_topics(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open topics file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path, 0, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_array()) throw ParseError(path, 0, "expected a JSON array of topics");
    std::vector<Topic> topics;
    std::unordered_set<std::string> ids;
    for (const auto& entry : j) {
        if (!entry.is_object()) throw ParseError(path, 0, "topic entries must be objects");
        Topic t;
        t.id = entry.value("id", "");
        if (t.id.empty()) throw ParseError(path, 0, "topic without an 'id'");
        if (!ids.insert(t.id).second) {
            throw ParseError(path, 0, "duplicate topic id '" + t.id + "'");
        }
        t.title = entry.value("title", "");
        t.background = entry.value("background", "");
        t.event_knowledge = entry.value("event_knowledge", "");
        if (entry.contains("example_doc_ids")) {
            for (const auto& d : entry.at("example_doc_ids")) {
                t.example_doc_ids.push_back(d.get<std::string>());
            }
        }
        if (t.title.empty() && t.background.empty() && t.event_knowledge.empty() &&
            t.example_doc_ids.empty()) {
            throw ParseError(path, 0, "topic '" + t.id + "' has no non-empty component");
        }
        topics.push_back(std::move(t));
    }
    std::sort(topics.begin(), topics.end(),
              [](const Topic& a, const Topic& b) { return a.id < b.id; });
    return topics;
}

void PipelineConfig::validate() const {
    if (corpus_path.empty() || topics_path.empty() || embeddings_path.empty() ||
        lexicon_path.empty()) {
        throw ContractError("pipeline config needs corpus, topics, embeddings and lexicon paths");
    }
    if (threshold < 1) throw ContractError("pipeline config: threshold must be >= 1");
    if (mode != "engara" && mode != "fullara") {
        throw ContractError("pipeline config: mode must be engara or fullara, got '" + mode +
                            "'");
    }
    if (components.empty()) throw ContractError("pipeline config: no components enabled");
    std::unordered_set<int> seen;
    for (Component c : components) {
        if (c == Component::fused) {
            throw ContractError("pipeline config: 'fused' is not a query component");
        }
        if (!seen.insert(static_cast<int>(c)).second) {
            throw ContractError("pipeline config: duplicate component");
        }
    }
    if (q_max < 1 || d_max < 1) throw ContractError("pipeline config: q_max/d_max must be >= 1");
    if (eval_k < 1) throw ContractError("pipeline config: eval_k must be >= 1");
}

std::string resolve_path(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
    if (const char* base = std::getenv("XLIR_DATA_DIR")) {
        const fs::path joined = fs::path(base) / path;
        if (fs::exists(joined)) return joined.string();
    }
    return path;
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "corpus") cfg.corpus_path = value;
    else if (key == "topics") cfg.topics_path = value;
    else if (key == "embeddings") cfg.embeddings_path = value;
    else if (key == "lexicon") cfg.lexicon_path = value;
    else if (key == "qrels") cfg.qrels_path = value;
    else if (key == "checkpoint") cfg.checkpoint_path = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "model") cfg.model = value;
    else if (key == "mode") cfg.mode = value;
    else if (key == "threshold") cfg.threshold = static_cast<int>(parse_int(value, key));
    else if (key == "fusion") cfg.fusion.method = fusion::method_from_string(value);
    else if (key == "rrf_k") cfg.fusion.rrf_k = parse_real(value, key);
    else if (key == "components") cfg.components = parse_components(value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
    else if (key == "k1") cfg.k1 = parse_real(value, key);
    else if (key == "b") cfg.b = parse_real(value, key);
    else if (key == "q_max") cfg.q_max = static_cast<std::size_t>(parse_int(value, key));
    else if (key == "d_max") cfg.d_max = static_cast<std::size_t>(parse_int(value, key));
    else if (key == "exclude_examples") cfg.exclude_examples = parse_bool(value, key);
    else if (key == "eval_k") cfg.eval_k = static_cast<int>(parse_int(value, key));
    else throw ContractError("unknown config key '" + key + "'");
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open config file");
    PipelineConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line.substr(0, line.find('#')));
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path, line_no, "expected 'key = value'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw ParseError(path, line_no, "empty config key");
        try {
            apply_setting(cfg, key, value);
        } catch (const ContractError& e) {
            throw ParseError(path, line_no, e.what());
        }
    }
    return cfg;
}

Data load_data(const PipelineConfig& cfg) {
    Data data;
    data.docs = index::load_corpus(resolve_path(cfg.corpus_path));
    data.index = index::InvertedIndex::build(data.docs, {cfg.k1, cfg.b});
    for (const index::Document& doc : data.docs) data.doc_tokens[doc.id] = doc.tokens;
    data.table = embed::load_embeddings(resolve_path(cfg.embeddings_path));
    data.lexicon = embed::load_lexicon(resolve_path(cfg.lexicon_path));
    data.topics = load_topics(resolve_path(cfg.topics_path));
    for (const Topic& topic : data.topics) {
        for (const std::string& id : topic.example_doc_ids) {
            if (!data.doc_tokens.count(id)) {
                throw ContractError("topic '" + topic.id + "': example doc '" + id +
                                    "' is not in the corpus");
            }
        }
    }
    return data;
}

std::optional<ComponentQuery> build_query(const Data& data, const Topic& topic,
                                          Component component, const std::string& mode) {
    ComponentQuery query;
    query.component = component;
    if (component == Component::example) {
        if (topic.example_doc_ids.empty()) return std::nullopt;
        for (const std::string& id : topic.example_doc_ids) {
            const std::vector<std::string>& tokens = data.doc_tokens.at(id);
            query.bm25_tokens.insert(query.bm25_tokens.end(), tokens.begin(), tokens.end());
            query.example_queries.push_back(tokens);
        }
        return query;
    }
    const std::string* source = nullptr;
    switch (component) {
        case Component::title: source = &topic.title; break;
        case Component::background: source = &topic.background; break;
        case Component::event_knowledge: source = &topic.event_knowledge; break;
        default: throw ContractError("build_query: 'fused' is not a query component");
    }
    if (source->empty()) return std::nullopt;
    const text::TokenSequence english = text::tokenize(*source, text::Lang::en);
    if (english.tokens.empty()) return std::nullopt;
    const text::TokenSequence arabic = embed::translate_tokens(data.lexicon, english);
    query.bm25_tokens = arabic.tokens;
    query.neural_tokens = mode == "engara" ? english.tokens : arabic.tokens;
    return query;
}

RankedList preselect_component(const Data& data, const Topic& topic, const ComponentQuery& query,
                               int threshold) {
    text::TokenSequence q{query.bm25_tokens, text::Lang::ar};
    RankedList pool = data.index.preselect(q, static_cast<std::size_t>(threshold));
    pool.topic_id = topic.id;
    pool.component = query.component;
    pool.stage = Stage::bm25;
    return pool;
}

std::optional<RankedList> rerank_component(const Data& data, const rank::Model& model,
                                           const Topic& topic, const ComponentQuery& query,
                                           const RankedList& pool, std::size_t q_max,
                                           std::size_t d_max, double rrf_k) {
    EmbCache docs(data.table, data.doc_tokens, d_max);
    if (query.component == Component::example) {
        std::vector<RankedList> per_example;
        for (std::size_t e = 0; e < query.example_queries.size(); ++e) {
            auto q_emb = rank::embed_matrix(data.table, query.example_queries[e], q_max);
            if (!q_emb) {
                std::cerr << "warning: topic " << topic.id << ": example query " << e + 1
                          << " has no embeddable tokens; skipped\n";
                continue;
            }
            per_example.push_back(score_pool(model, *q_emb, pool, docs));
        }
        if (per_example.empty()) return std::nullopt;
        RankedList fused = fusion::rrf(per_example, rrf_k);
        fused.component = Component::example;
        fused.stage = Stage::neural;
        return fused;
    }
    auto q_emb = rank::embed_matrix(data.table, query.neural_tokens, q_max);
    if (!q_emb) return std::nullopt;
    return score_pool(model, *q_emb, pool, docs);
}

std::vector<train::TrainUnit> build_train_units(const Data& data,
                                                const std::vector<Component>& components,
                                                int threshold, const std::string& mode) {
    std::vector<train::TrainUnit> units;
    for (const Topic& topic : data.topics) {
        if (topic.example_doc_ids.empty()) {
            std::cerr << "warning: topic " << topic.id
                      << " has no example docs; nothing to train on\n";
            continue;
        }
        for (Component component : components) {
            auto query = build_query(data, topic, component, mode);
            if (!query) continue;
            if (query->bm25_tokens.empty()) {
                std::cerr << "warning: topic " << topic.id << " component "
                          << to_string(component) << ": no query terms survive translation\n";
                continue;
            }
            RankedList pool = preselect_component(data, topic, *query, threshold);
            if (pool.entries.empty()) {
                std::cerr << "warning: topic " << topic.id << " component "
                          << to_string(component) << ": empty pre-selection pool\n";
                continue;
            }
            if (component == Component::example) {
                for (std::size_t e = 0; e < topic.example_doc_ids.size(); ++e) {
                    train::TrainUnit unit;
                    unit.topic_id = topic.id;
                    unit.component = component;
                    unit.query_tokens = query->example_queries[e];
                    unit.positives = {topic.example_doc_ids[e]};
                    unit.exclude = topic.example_doc_ids;
                    unit.pool = pool;
                    units.push_back(std::move(unit));
                }
            } else {
                train::TrainUnit unit;
                unit.topic_id = topic.id;
                unit.component = component;
                unit.query_tokens = query->neural_tokens;
                unit.positives = topic.example_doc_ids;
                unit.exclude = topic.example_doc_ids;
                unit.pool = std::move(pool);
                units.push_back(std::move(unit));
            }
        }
    }
    return units;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    const std::string ckpt_path = resolve_path(cfg.checkpoint_path);
    if (cfg.checkpoint_path.empty() || !fs::exists(ckpt_path)) {
        throw ContractError("checkpoint not found: '" + cfg.checkpoint_path +
                            "'; train one first (train subcommand) or point --checkpoint at an "
                            "existing file");
    }
    const rank::Model model = rank::model_from_checkpoint(load_checkpoint(ckpt_path));
    if (!cfg.model.empty() && cfg.model != model.arch) {
        throw ContractError("config asks for model '" + cfg.model + "' but the checkpoint is '" +
                            model.arch + "'");
    }
    Data data = load_data(cfg);
    fs::create_directories(cfg.out_dir);

    // Per-component lists across topics, for the intermediate run files.
    std::map<std::string, std::vector<RankedList>> stage_lists;
    PipelineResult result;

    for (const Topic& topic : data.topics) {
        std::vector<RankedList> bm25_lists, neural_lists;
        for (Component component : cfg.components) {
            auto query = build_query(data, topic, component, cfg.mode);
            if (!query) continue;
            if (query->bm25_tokens.empty()) {
                std::cerr << "warning: topic " << topic.id << " component "
                          << to_string(component)
                          << ": no query terms survive translation; skipped\n";
                continue;
            }
            RankedList pool = preselect_component(data, topic, *query, cfg.threshold);
            if (pool.entries.empty()) {
                std::cerr << "warning: topic " << topic.id << " component "
                          << to_string(component) << ": no doc matches the query; skipped\n";
                continue;
            }
            auto neural = rerank_component(data, model, topic, *query, pool, cfg.q_max,
                                           cfg.d_max, cfg.fusion.rrf_k);
            stage_lists["bm25_" + std::string(to_string(component))].push_back(pool);
            bm25_lists.push_back(std::move(pool));
            if (neural) {
                stage_lists["neural_" + std::string(to_string(component))].push_back(*neural);
                neural_lists.push_back(std::move(*neural));
            } else {
                std::cerr << "warning: topic " << topic.id << " component "
                          << to_string(component)
                          << ": no query token has an embedding; neural list skipped\n";
            }
        }
        if (bm25_lists.empty() && neural_lists.empty()) {
            std::cerr << "warning: topic " << topic.id
                      << ": no usable component list; omitted from run files\n";
            continue;
        }
        fusion::TwoStepResult fused = fusion::two_step_fuse(bm25_lists, neural_lists, cfg.fusion);
        if (cfg.exclude_examples && !topic.example_doc_ids.empty()) {
            const std::unordered_set<std::string> examples(topic.example_doc_ids.begin(),
                                                           topic.example_doc_ids.end());
            auto& entries = fused.final_fused.entries;
            entries.erase(std::remove_if(entries.begin(), entries.end(),
                                         [&](const RankedEntry& e) {
                                             return examples.count(e.doc_id) > 0;
                                         }),
                          entries.end());
            for (std::size_t i = 0; i < entries.size(); ++i) {
                entries[i].rank = static_cast<int>(i) + 1;
            }
        }
        if (!bm25_lists.empty()) result.bm25_fused.push_back(std::move(fused.bm25_fused));
        if (!neural_lists.empty()) result.neural_fused.push_back(std::move(fused.neural_fused));
        result.final_fused.push_back(std::move(fused.final_fused));
    }
    if (result.final_fused.empty()) {
        throw ContractError("run_pipeline: no topic produced any ranked list");
    }

    for (const auto& [label, lists] : stage_lists) {
        const std::string path = cfg.out_dir + "/" + label + ".run";
        write_run_atomic(path, lists, label);
        result.run_files[label] = path;
    }
    auto write_stage = [&](const char* label, const std::vector<RankedList>& lists) {
        if (lists.empty()) return;
        const std::string path = cfg.out_dir + "/" + label + ".run";
        write_run_atomic(path, lists, label);
        result.run_files[label] = path;
    };
    write_stage("bm25_fused", result.bm25_fused);
    write_stage("neural_fused", result.neural_fused);
    write_stage("final", result.final_fused);

    if (!cfg.qrels_path.empty()) {
        const metrics::Qrels qrels = metrics::load_qrels(resolve_path(cfg.qrels_path));
        result.report_bm25 = metrics::evaluate_run(result.bm25_fused, qrels, cfg.eval_k);
        result.report_neural = metrics::evaluate_run(result.neural_fused, qrels, cfg.eval_k);
        result.report_final = metrics::evaluate_run(result.final_fused, qrels, cfg.eval_k);
        const std::string k = std::to_string(cfg.eval_k);
        std::ostringstream out;
        out << "stage         P@" << k << "    R@" << k << "    nDCG@" << k << '\n';
        auto row = [&](const char* label, const metrics::Report& r) {
            out << label << "  " << fixed4(r.mean_precision) << "  " << fixed4(r.mean_recall)
                << "  " << fixed4(r.mean_ndcg) << '\n';
        };
        row("bm25_fused  ", *result.report_bm25);
        row("neural_fused", *result.report_neural);
        row("final       ", *result.report_final);
        out << '\n';
        out << metrics::format_report(*result.report_bm25, "bm25_fused") << '\n';
        out << metrics::format_report(*result.report_neural, "neural_fused") << '\n';
        out << metrics::format_report(*result.report_final, "final");
        result.report_text = out.str();
        std::ofstream report(cfg.out_dir + "/report.txt", std::ios::binary);
        report << result.report_text;
    }
    return result;
}

}  // namespace xlir::pipeline
