#include "xlir/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>
#include <unordered_set>

#include <json.hpp>

#include "xlir/optim.hpp"

namespace xlir::train {

namespace {

using numeric::Array;
using numeric::Tape;
using numeric::Var;

// Distinct deterministic streams derived from the one user-facing seed.
constexpr std::uint64_t kSampleStream = 0xA076'1D64'78BD'642FULL;
constexpr std::uint64_t kValStream = 0xE703'7ED1'A0B4'28DBULL;

std::vector<double> label_softmax(std::span<const int> labels) {
    int mx = labels[0];
    for (int v : labels) mx = std::max(mx, v);
    std::vector<double> p(labels.size());
    double denom = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        p[i] = std::exp(static_cast<double>(labels[i] - mx));
        denom += p[i];
    }
    for (double& v : p) v /= denom;
    return p;
}

// Embedded doc matrices, built once per doc id and shared across epochs.
class DocCache {
public:
    DocCache(const embed::EmbeddingTable& table,
             const std::unordered_map<std::string, std::vector<std::string>>& doc_tokens,
             std::size_t d_max)
        : table_(table), doc_tokens_(doc_tokens), d_max_(d_max) {}

    const std::optional<Array>& get(const std::string& doc_id) {
        auto it = cache_.find(doc_id);
        if (it != cache_.end()) return it->second;
        auto tok = doc_tokens_.find(doc_id);
        if (tok == doc_tokens_.end()) {
            throw ContractError("train: doc '" + doc_id + "' has no tokens in the corpus");
        }
        auto [ins, unused] =
            cache_.emplace(doc_id, rank::embed_matrix(table_, tok->second, d_max_));
        return ins->second;
    }

private:
    const embed::EmbeddingTable& table_;
    const std::unordered_map<std::string, std::vector<std::string>>& doc_tokens_;
    std::size_t d_max_;
    std::unordered_map<std::string, std::optional<Array>> cache_;
};

// Candidate rows that embedded successfully, with their labels. Lists whose
// positive has no embedding are unusable.
struct UsableList {
    std::vector<const Array*> docs;
    std::vector<int> labels;
};

std::optional<UsableList> usable_list(const CandidateList& list, DocCache& docs) {
    UsableList out;
    for (std::size_t i = 0; i < list.doc_ids.size(); ++i) {
        const std::optional<Array>& emb = docs.get(list.doc_ids[i]);
        if (!emb) {
            if (list.labels[i] == 1) return std::nullopt;
            continue;
        }
        out.docs.push_back(&*emb);
        out.labels.push_back(list.labels[i]);
    }
    if (out.docs.size() < 2) return std::nullopt;
    return out;
}

double checkpoint_val_loss(const Checkpoint& ckpt) {
    auto it = ckpt.meta_num.find("val_loss");
    if (it == ckpt.meta_num.end()) {
        throw ContractError("select_checkpoint: checkpoint lacks val_loss metadata");
    }
    return it->second;
}

}  // namespace

void TrainConfig::validate() const {
    if (list_size < 2) throw ContractError("TrainConfig: list_size must be >= 2");
    if (epochs < 1) throw ContractError("TrainConfig: epochs must be positive");
    if (checkpoint_every < 1 || epochs % checkpoint_every != 0) {
        throw ContractError("TrainConfig: epochs must be a multiple of checkpoint_every");
    }
    if (lr < 0) throw ContractError("TrainConfig: lr must be non-negative");
    if (lists_per_example_per_epoch < 1) {
        throw ContractError("TrainConfig: lists_per_example_per_epoch must be positive");
    }
    if (q_max < 1 || d_max < 1) throw ContractError("TrainConfig: q_max/d_max must be positive");
    if (val_fraction < 0 || val_fraction >= 1) {
        throw ContractError("TrainConfig: val_fraction must be in [0, 1)");
    }
}

double listnet_loss(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.size() < 2) {
        throw ContractError("listnet_loss: need matching score/label lists of length >= 2");
    }
    const std::vector<double> p = label_softmax(labels);
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double denom = 0;
    for (double s : scores) denom += std::exp(s - mx);
    double loss = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double q = std::exp(scores[i] - mx) / denom;
        loss -= p[i] * std::log(std::max(Tape::kLogClamp, q));
    }
    return loss;
}

numeric::Var listnet_loss_graph(numeric::Tape& tape, numeric::Var scores,
                                std::span<const int> labels) {
    const Array& sv = tape.value(scores);
    if (sv.rank() != 1 || static_cast<std::size_t>(sv.size()) != labels.size() ||
        labels.size() < 2) {
        throw ContractError("listnet_loss_graph: need a 1-D score var matching the labels");
    }
    Array p({static_cast<std::int64_t>(labels.size())}, label_softmax(labels));
    Var q = tape.softmax(scores);
    Var weighted = tape.mul(tape.log(q), tape.constant(std::move(p)));
    return tape.axpb(tape.sum_all(weighted), -1.0, 0.0);
}

std::vector<CandidateList> sample_lists(const TrainUnit& unit, int list_size,
                                        int lists_per_example, Rng& rng) {
    std::unordered_set<std::string> excluded(unit.exclude.begin(), unit.exclude.end());
    std::vector<std::string> negatives;
    for (const RankedEntry& e : unit.pool.entries) {
        if (!excluded.count(e.doc_id)) negatives.push_back(e.doc_id);
    }
    const auto need = static_cast<std::size_t>(list_size - 1);
    if (negatives.size() < need) {
        std::cerr << "warning: topic " << unit.topic_id << " component "
                  << to_string(unit.component) << ": pool has " << negatives.size()
                  << " non-example docs, need " << need << "; skipping\n";
        return {};
    }
    std::vector<CandidateList> lists;
    for (const std::string& pos : unit.positives) {
        for (int l = 0; l < lists_per_example; ++l) {
            CandidateList list;
            list.topic_id = unit.topic_id;
            list.component = unit.component;
            list.doc_ids.push_back(pos);
            list.labels.push_back(1);
            for (std::size_t idx : rng.sample_indices(negatives.size(), need)) {
                list.doc_ids.push_back(negatives[idx]);
                list.labels.push_back(0);
            }
            lists.push_back(std::move(list));
        }
    }
    return lists;
}

namespace {

std::optional<double> list_loss_value(const rank::Model& model, const UsableList& ul,
                                      const Array& q_emb) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < ul.docs.size(); ++i) {
        const double s = rank::score_pair(model, q_emb, *ul.docs[i]);
        if (s == rank::kScoreSentinel) {
            if (ul.labels[i] == 1) return std::nullopt;
            continue;
        }
        scores.push_back(s);
        labels.push_back(ul.labels[i]);
    }
    if (scores.size() < 2) return std::nullopt;
    return listnet_loss(scores, labels);
}

std::optional<double> train_step(rank::Model& model, std::vector<Array>& params,
                                 numeric::AdamState& adam, const UsableList& ul,
                                 const Array& q_emb, double lr) {
    Tape tape;
    rank::ModelVars vars = rank::register_params(tape, model, true);
    Var q = tape.constant(q_emb);
    std::vector<Var> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < ul.docs.size(); ++i) {
        try {
            scores.push_back(rank::score_graph(tape, model, vars, q, tape.constant(*ul.docs[i])));
            labels.push_back(ul.labels[i]);
        } catch (const EmptyInputError&) {
            if (ul.labels[i] == 1) return std::nullopt;
        }
    }
    if (scores.size() < 2 ||
        std::count(labels.begin(), labels.end(), 1) != 1) {
        return std::nullopt;
    }
    Var loss = listnet_loss_graph(tape, tape.stack(scores), labels);
    tape.backward(loss);
    std::vector<Array> grads;
    grads.reserve(vars.all.size());
    for (Var v : vars.all) grads.push_back(tape.grad(v));
    numeric::adam_step(params, grads, adam, lr);
    rank::assign_params(model, params);
    return tape.value(loss).item();
}

}  // namespace

TrainResult train(const std::string& arch, const rank::ModelConfig& mcfg,
                  const rank::KernelBank& bank, const std::vector<TrainUnit>& units,
                  const std::unordered_map<std::string, std::vector<std::string>>& doc_tokens,
                  const embed::EmbeddingTable& table, const TrainConfig& cfg,
                  std::ostream* log_out) {
    cfg.validate();
    if (units.empty()) throw ContractError("train: no training units");

    Rng init_rng(cfg.seed);
    rank::Model model = rank::init_model(arch, table.dim(), bank, mcfg, init_rng);
    std::vector<Array> params = rank::collect_params(model);

    DocCache docs(table, doc_tokens, cfg.d_max);

    // Per-unit query embeddings; units whose query has no vectors are skipped.
    std::vector<std::optional<Array>> queries(units.size());
    for (std::size_t u = 0; u < units.size(); ++u) {
        queries[u] = rank::embed_matrix(table, units[u].query_tokens, cfg.q_max);
        if (!queries[u]) {
            std::cerr << "warning: topic " << units[u].topic_id << " component "
                      << to_string(units[u].component)
                      << ": no query token has an embedding; skipping\n";
        }
    }

    // Fixed held-out lists, sampled before training from a separate stream.
    const int n_val = cfg.val_fraction > 0
                          ? static_cast<int>(std::ceil(cfg.val_fraction *
                                                       cfg.lists_per_example_per_epoch))
                          : 0;
    Rng val_rng(cfg.seed ^ kValStream);
    std::vector<std::pair<std::size_t, CandidateList>> val_lists;
    if (n_val > 0) {
        for (std::size_t u = 0; u < units.size(); ++u) {
            if (!queries[u]) continue;
            for (CandidateList& list : sample_lists(units[u], cfg.list_size, n_val, val_rng)) {
                val_lists.emplace_back(u, std::move(list));
            }
        }
    }

    numeric::AdamState adam;
    Rng sample_rng(cfg.seed ^ kSampleStream);
    TrainResult result;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0;
        std::int64_t n_lists = 0;
        for (std::size_t u = 0; u < units.size(); ++u) {
            if (!queries[u]) continue;
            const auto lists = sample_lists(units[u], cfg.list_size,
                                            cfg.lists_per_example_per_epoch, sample_rng);
            for (std::size_t li = 0; li < lists.size(); ++li) {
                auto ul = usable_list(lists[li], docs);
                if (!ul) {
                    std::cerr << "warning: topic " << lists[li].topic_id << " component "
                              << to_string(lists[li].component) << " list " << li
                              << ": positive doc has no usable embedding; skipping list\n";
                    continue;
                }
                auto loss = train_step(model, params, adam, *ul, *queries[u], cfg.lr);
                if (!loss) continue;
                if (!std::isfinite(*loss)) {
                    throw ContractError("train: non-finite loss at epoch " +
                                        std::to_string(epoch) + ", topic " + lists[li].topic_id +
                                        ", component " +
                                        std::string(to_string(lists[li].component)) + ", list " +
                                        std::to_string(li));
                }
                loss_sum += *loss;
                ++n_lists;
            }
        }
        if (n_lists == 0) throw ContractError("train: no usable training lists");
        const double mean_loss = loss_sum / static_cast<double>(n_lists);

        double val_loss = mean_loss;  // fallback when no held-out list is usable
        {
            double val_sum = 0;
            std::int64_t n = 0;
            for (const auto& [u, list] : val_lists) {
                auto ul = usable_list(list, docs);
                if (!ul) continue;
                auto loss = list_loss_value(model, *ul, *queries[u]);
                if (!loss) continue;
                val_sum += *loss;
                ++n;
            }
            if (n > 0) val_loss = val_sum / static_cast<double>(n);
        }

        const auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
        result.log.push_back({epoch, mean_loss, val_loss, wall_ms});
        if (log_out) {
            nlohmann::json line;
            line["epoch"] = epoch;
            line["mean_loss"] = mean_loss;
            line["val_loss"] = val_loss;
            line["wall_ms"] = wall_ms;
            *log_out << line.dump() << '\n';
        }

        if (epoch % cfg.checkpoint_every == 0) {
            Checkpoint ckpt = rank::to_checkpoint(model);
            ckpt.meta_num["epoch"] = epoch;
            ckpt.meta_num["train_loss"] = mean_loss;
            ckpt.meta_num["val_loss"] = val_loss;
            result.checkpoints.push_back(std::move(ckpt));
        }
    }

    result.best_index = select_checkpoint(result.checkpoints);
    return result;
}

std::size_t select_checkpoint(const std::vector<Checkpoint>& checkpoints) {
    if (checkpoints.empty()) throw ContractError("select_checkpoint: no checkpoints");
    std::size_t best = 0;
    double best_loss = checkpoint_val_loss(checkpoints[0]);
    for (std::size_t i = 1; i < checkpoints.size(); ++i) {
        const double loss = checkpoint_val_loss(checkpoints[i]);
        if (loss < best_loss) {
            best = i;
            best_loss = loss;
        }
    }
    return best;
}

}  // namespace xlir::train
