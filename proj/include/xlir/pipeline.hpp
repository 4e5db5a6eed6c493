#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlir/embed.hpp"
#include "xlir/fusion.hpp"
#include "xlir/index.hpp"
#include "xlir/metrics.hpp"
#include "xlir/ranked_list.hpp"
#include "xlir/rankers.hpp"
#include "xlir/train.hpp"

namespace xlir::pipeline {

struct Topic {
    std::string id;
    std::string title;
    std::string background;
    std::string event_knowledge;
    std::vector<std::string> example_doc_ids;
};

// JSON array of topic objects with the four component fields. Every topic
// needs at least one non-empty component.
std::vector<Topic> load_topics(const std::string& path);

struct PipelineConfig {
    std::string corpus_path;
    std::string topics_path;
    std::string embeddings_path;
    std::string lexicon_path;
    std::string qrels_path;       // empty: skip evaluation
    std::string checkpoint_path;  // required by the rerank stage
    std::string out_dir = "out";
    std::string model;  // optional cross-check against the checkpoint arch
    std::string mode = "engara";
    int threshold = 1000;
    fusion::FusionConfig fusion;
    std::vector<Component> components = {Component::title, Component::background,
                                         Component::event_knowledge, Component::example};
    std::uint64_t seed = 0;
    double k1 = 1.2;
    double b = 0.75;
    std::size_t q_max = 150;
    std::size_t d_max = 400;
    bool exclude_examples = true;
    int eval_k = 10;

    void validate() const;
};

// key=value lines with '#' comments; unknown keys are errors. Relative data
// paths may resolve under $XLIR_DATA_DIR when not found directly.
PipelineConfig load_config(const std::string& path);
// Applies one config setting; shared by the file loader and flag overrides.
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value);
std::string resolve_path(const std::string& path);

// Everything the stages read; loaded once.
struct Data {
    std::vector<index::Document> docs;
    std::unordered_map<std::string, std::vector<std::string>> doc_tokens;
    index::InvertedIndex index;
    embed::EmbeddingTable table;
    embed::Lexicon lexicon;
    std::vector<Topic> topics;  // sorted by id
};

Data load_data(const PipelineConfig& cfg);

// Query token sets for one (topic, component). BM25 always uses translated
// (Arabic) tokens; the neural side depends on the mode except for the
// example component, whose queries are the example docs themselves.
struct ComponentQuery {
    Component component = Component::title;
    std::vector<std::string> bm25_tokens;
    std::vector<std::string> neural_tokens;
    std::vector<std::vector<std::string>> example_queries;
};

std::optional<ComponentQuery> build_query(const Data& data, const Topic& topic,
                                          Component component, const std::string& mode);

// BM25 pre-selection for one component query; empty result when no doc
// scores above zero.
RankedList preselect_component(const Data& data, const Topic& topic, const ComponentQuery& query,
                               int threshold);

// Neural re-ranking of one pre-selected pool. Example-component per-example
// lists are RRF-fused into the single component list. nullopt when no query
// side has embeddings.
std::optional<RankedList> rerank_component(const Data& data, const rank::Model& model,
                                           const Topic& topic, const ComponentQuery& query,
                                           const RankedList& pool, std::size_t q_max,
                                           std::size_t d_max, double rrf_k);

// Training units for every (topic, enabled component), pools built by BM25
// pre-selection at `threshold`.
std::vector<train::TrainUnit> build_train_units(const Data& data,
                                                const std::vector<Component>& components,
                                                int threshold, const std::string& mode);

struct PipelineResult {
    std::vector<RankedList> bm25_fused;
    std::vector<RankedList> neural_fused;
    std::vector<RankedList> final_fused;
    std::map<std::string, std::string> run_files;  // stage label -> path
    std::optional<metrics::Report> report_bm25;
    std::optional<metrics::Report> report_neural;
    std::optional<metrics::Report> report_final;
    std::string report_text;
};

// Full workflow: pre-select, re-rank, two-step fuse, persist run files per
// stage and evaluate when qrels are configured.
PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace xlir::pipeline
