#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlir/checkpoint.hpp"
#include "xlir/common.hpp"
#include "xlir/embed.hpp"
#include "xlir/ranked_list.hpp"
#include "xlir/rankers.hpp"
#include "xlir/tape.hpp"

namespace xlir::train {

struct TrainConfig {
    int list_size = 50;
    int epochs = 21;
    int checkpoint_every = 3;
    double lr = 1e-4;
    int lists_per_example_per_epoch = 8;
    std::uint64_t seed = 0;
    std::size_t q_max = 150;
    std::size_t d_max = 400;
    double val_fraction = 0.1;

    void validate() const;
};

// One listwise training instance: L candidate ids with exactly one positive.
struct CandidateList {
    std::string topic_id;
    Component component = Component::title;
    std::vector<std::string> doc_ids;
    std::vector<int> labels;
};

// One (topic, component) training source. `positives` are the docs that act
// as the single relevant candidate of their lists; `exclude` is the full
// example-doc set kept out of the negative pool (a superset of positives).
struct TrainUnit {
    std::string topic_id;
    Component component = Component::title;
    std::vector<std::string> query_tokens;
    std::vector<std::string> positives;
    std::vector<std::string> exclude;
    RankedList pool;
};

// Cross entropy between softmax(labels) and softmax(scores), log clamped
// below at 1e-10. Requires >= 2 entries.
double listnet_loss(std::span<const double> scores, std::span<const int> labels);

// Same loss as a tape subgraph over a 1-D scores var.
numeric::Var listnet_loss_graph(numeric::Tape& tape, numeric::Var scores,
                                std::span<const int> labels);

// Per positive doc, `lists_per_example` lists of one positive plus
// (list_size - 1) non-excluded pool docs sampled without replacement.
// Returns empty (with a stderr warning) when the pool is too small.
std::vector<CandidateList> sample_lists(const TrainUnit& unit, int list_size,
                                        int lists_per_example, Rng& rng);

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    double val_loss = 0.0;
    std::int64_t wall_ms = 0;
};

struct TrainResult {
    std::vector<Checkpoint> checkpoints;
    std::vector<EpochLog> log;
    std::size_t best_index = 0;
};

// Trains one model per architecture over all units jointly. Checkpoints at
// every `checkpoint_every` epochs carry epoch/train_loss/val_loss metadata.
// Deterministic given (seed, config, inputs); single-threaded. `log_out`,
// when non-null, receives one JSON line per epoch.
TrainResult train(const std::string& arch, const rank::ModelConfig& mcfg,
                  const rank::KernelBank& bank, const std::vector<TrainUnit>& units,
                  const std::unordered_map<std::string, std::vector<std::string>>& doc_tokens,
                  const embed::EmbeddingTable& table, const TrainConfig& cfg,
                  std::ostream* log_out);

// Index of the checkpoint with the lowest val_loss (earliest on ties).
std::size_t select_checkpoint(const std::vector<Checkpoint>& checkpoints);

}  // namespace xlir::train
