#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "xlir/array.hpp"
#include "xlir/checkpoint.hpp"
#include "xlir/common.hpp"
#include "xlir/embed.hpp"
#include "xlir/tape.hpp"

namespace xlir::rank {

// Score assigned to pairs with no usable similarity evidence (all query
// tokens OOV, empty doc, no n-gram order fits). Sorts last in a ranked list.
inline constexpr double kScoreSentinel = -std::numeric_limits<double>::infinity();

struct KernelBank {
    std::vector<double> mu;
    std::vector<double> sigma;

    std::size_t size() const { return mu.size(); }
    // One exact-match kernel (mu 1.0, sigma 1e-3) plus ten soft-match kernels
    // with mu from -0.9 to 0.9 in steps of 0.2, sigma 0.1.
    static KernelBank default_bank();
};

struct KnrmParams {
    numeric::Array w;  // [K]
    numeric::Array b;  // [1]
};

struct ConvKnrmParams {
    std::vector<int> orders;              // ascending n-gram orders, default {1, 2}
    std::vector<numeric::Array> filters;  // per order: [F, h, D]
    std::vector<numeric::Array> biases;   // per order: [F]
    numeric::Array w;                     // [K * |orders|^2]
    numeric::Array b;                     // [1]
};

struct MatchPyramidParams {
    std::int64_t canvas_h = 150;
    std::int64_t canvas_w = 400;
    int grid_h = 4;
    int grid_w = 10;
    std::vector<numeric::Array> conv_w;  // 3 layers: [16, C_in, 3, 3]
    std::vector<numeric::Array> conv_b;  // 3 layers: [16]
    numeric::Array dense_w;              // [16 * grid_h * grid_w, 1]
    numeric::Array dense_b;              // [1]
};

struct ModelConfig {
    std::vector<int> orders = {1, 2};
    int n_filters = 128;
    std::int64_t canvas_h = 150;
    std::int64_t canvas_w = 400;
    int grid_h = 4;
    int grid_w = 10;
};

struct Model {
    std::string arch;  // "knrm", "convknrm" or "matchpyramid"
    KernelBank bank;
    KnrmParams knrm;
    ConvKnrmParams convknrm;
    MatchPyramidParams matchpyramid;
};

// Seeded uniform(-0.1, 0.1) init; conv biases start at zero. `dim` is the
// embedding width (needed for the ConvKNRM filter banks).
Model init_model(const std::string& arch, int dim, const KernelBank& bank,
                 const ModelConfig& cfg, Rng& rng);

Checkpoint to_checkpoint(const Model& model);
Model model_from_checkpoint(const Checkpoint& ckpt);

// Plain forward helpers (no tape); these are the reference formulas.
numeric::Array sim_matrix(const numeric::Array& q, const numeric::Array& d);
std::vector<double> kernel_pool(const numeric::Array& m, const KernelBank& bank);

// Embeds tokens[0..max_len) row-wise, skipping OOV tokens after truncation.
// nullopt when nothing embeds (the caller assigns kScoreSentinel).
std::optional<numeric::Array> embed_matrix(const embed::EmbeddingTable& table,
                                           const std::vector<std::string>& tokens,
                                           std::size_t max_len);

// Tape handles for one model's parameters, in a fixed registration order.
struct ModelVars {
    std::vector<numeric::Var> all;
    std::vector<std::string> names;
    numeric::Var w;
    numeric::Var b;
    std::vector<numeric::Var> filters;  // convknrm per order, or matchpyramid conv layers
    std::vector<numeric::Var> biases;
};

ModelVars register_params(numeric::Tape& tape, const Model& model, bool requires_grad);

// Parameter arrays in registration order (the order ModelVars::all uses).
std::vector<numeric::Array> collect_params(const Model& model);
void assign_params(Model& model, const std::vector<numeric::Array>& params);

// Builds the scoring subgraph for one (query, doc) pair of embedded token
// matrices q [n,D], d [m,D]. Returns a size-1 var. Throws EmptyInputError
// when no n-gram order fits either side (ConvKNRM with short inputs).
numeric::Var score_graph(numeric::Tape& tape, const Model& model, const ModelVars& vars,
                         numeric::Var q, numeric::Var d);

// Frozen-parameter score of one embedded pair; kScoreSentinel on
// EmptyInputError. Pure, safe to call concurrently on one const Model.
double score_pair(const Model& model, const numeric::Array& q, const numeric::Array& d);

// Tokens-to-score convenience: embeds both sides (query truncated to q_max,
// doc to d_max) and scores; kScoreSentinel when either side has no vectors.
double score_tokens(const Model& model, const embed::EmbeddingTable& table,
                    const std::vector<std::string>& q_tokens,
                    const std::vector<std::string>& d_tokens, std::size_t q_max,
                    std::size_t d_max);

}  // namespace xlir::rank
