#pragma once

#include <cstdint>
#include <string>

namespace xlir::synth {

// Bilingual synthetic dataset: per-topic planted token clusters, a shared
// background vocabulary, a one-to-one lexicon and an embedding space where
// translation pairs sit at cosine >= 0.9. Fully determined by `seed`.
struct SynthSpec {
    int n_docs = 1000;
    int n_topics = 5;
    int n_relevant = 20;   // judged docs per topic, disjoint from examples
    int n_examples = 2;    // example docs per topic, kept out of the qrels
    int dim = 16;
    int cluster_vocab = 30;  // planted words per topic
    int background_vocab = 400;
    int doc_len_min = 40;
    int doc_len_max = 80;
    std::uint64_t seed = 7;
};

struct SynthPaths {
    std::string corpus;      // JSONL {"id", "text"}
    std::string topics;      // JSON array of topic objects
    std::string lexicon;     // TSV "english<TAB>arabic"
    std::string embeddings;  // word2vec text format
    std::string qrels;       // "topic 0 doc rel"
};

// Writes the five files into `out_dir` (created if needed). Throws
// ContractError naming the violated minimum when the sizes are infeasible.
SynthPaths make_synthetic_corpus(const SynthSpec& spec, const std::string& out_dir);

}  // namespace xlir::synth
