#include "xlir/rankers.hpp"

#include <algorithm>
#include <cmath>
#include <span>

namespace xlir::rank {

namespace {

using numeric::Array;
using numeric::Tape;
using numeric::Var;

constexpr int kMpChannels = 16;
constexpr int kMpKernel = 3;
constexpr int kMpLayers = 3;

Array uniform_array(std::vector<std::int64_t> shape, Rng& rng) {
    Array a(std::move(shape));
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-0.1, 0.1);
    return a;
}

// Spatial extent after one conv(3x3, valid) + maxpool(2x2) stage.
std::int64_t stage_out(std::int64_t x) { return (x - (kMpKernel - 1)) / 2; }

std::int64_t pyramid_out(std::int64_t x) {
    for (int i = 0; i < kMpLayers; ++i) x = stage_out(x);
    return x;
}

void validate_orders(const std::vector<int>& orders) {
    if (orders.empty()) throw ContractError("convknrm: need at least one n-gram order");
    for (std::size_t i = 0; i < orders.size(); ++i) {
        if (orders[i] < 1) throw ContractError("convknrm: n-gram orders must be positive");
        if (i > 0 && orders[i] <= orders[i - 1]) {
            throw ContractError("convknrm: n-gram orders must be strictly ascending");
        }
    }
}

}  // namespace

KernelBank KernelBank::default_bank() {
    KernelBank bank;
    bank.mu.push_back(1.0);
    bank.sigma.push_back(1e-3);
    for (int i = 0; i < 10; ++i) {
        bank.mu.push_back(-0.9 + 0.2 * i);
        bank.sigma.push_back(0.1);
    }
    return bank;
}

Model init_model(const std::string& arch, int dim, const KernelBank& bank,
                 const ModelConfig& cfg, Rng& rng) {
    if (dim < 1) throw ContractError("init_model: embedding dim must be positive");
    if (bank.size() == 0 || bank.mu.size() != bank.sigma.size()) {
        throw ContractError("init_model: malformed kernel bank");
    }
    for (double s : bank.sigma) {
        if (s <= 0) throw ContractError("init_model: kernel sigma must be positive");
    }
    const auto k = static_cast<std::int64_t>(bank.size());
    Model model;
    model.arch = arch;
    model.bank = bank;
    if (arch == "knrm") {
        model.knrm.w = uniform_array({k}, rng);
        model.knrm.b = uniform_array({1}, rng);
    } else if (arch == "convknrm") {
        validate_orders(cfg.orders);
        if (cfg.n_filters < 1) throw ContractError("init_model: filter count must be positive");
        model.convknrm.orders = cfg.orders;
        for (int h : cfg.orders) {
            model.convknrm.filters.push_back(uniform_array({cfg.n_filters, h, dim}, rng));
            model.convknrm.biases.emplace_back(std::vector<std::int64_t>{cfg.n_filters});
        }
        const auto n_orders = static_cast<std::int64_t>(cfg.orders.size());
        model.convknrm.w = uniform_array({k * n_orders * n_orders}, rng);
        model.convknrm.b = uniform_array({1}, rng);
    } else if (arch == "matchpyramid") {
        auto& mp = model.matchpyramid;
        mp.canvas_h = cfg.canvas_h;
        mp.canvas_w = cfg.canvas_w;
        mp.grid_h = cfg.grid_h;
        mp.grid_w = cfg.grid_w;
        if (mp.grid_h < 1 || mp.grid_w < 1) {
            throw ContractError("init_model: pooling grid must be positive");
        }
        if (pyramid_out(mp.canvas_h) < mp.grid_h || pyramid_out(mp.canvas_w) < mp.grid_w) {
            throw ContractError("init_model: canvas " + std::to_string(mp.canvas_h) + "x" +
                                std::to_string(mp.canvas_w) +
                                " too small for three conv/pool stages ending in a " +
                                std::to_string(mp.grid_h) + "x" + std::to_string(mp.grid_w) +
                                " grid");
        }
        std::int64_t c_in = 1;
        for (int layer = 0; layer < kMpLayers; ++layer) {
            mp.conv_w.push_back(uniform_array({kMpChannels, c_in, kMpKernel, kMpKernel}, rng));
            mp.conv_b.emplace_back(std::vector<std::int64_t>{kMpChannels});
            c_in = kMpChannels;
        }
        mp.dense_w = uniform_array({kMpChannels * mp.grid_h * mp.grid_w, 1}, rng);
        mp.dense_b = uniform_array({1}, rng);
    } else {
        throw ContractError("init_model: unknown arch '" + arch + "'");
    }
    return model;
}

Checkpoint to_checkpoint(const Model& model) {
    Checkpoint ckpt;
    ckpt.arch = model.arch;
    ckpt.mu = model.bank.mu;
    ckpt.sigma = model.bank.sigma;
    if (model.arch == "knrm") {
        ckpt.params.emplace("w", model.knrm.w);
        ckpt.params.emplace("b", model.knrm.b);
    } else if (model.arch == "convknrm") {
        const auto& p = model.convknrm;
        for (std::size_t i = 0; i < p.orders.size(); ++i) {
            const std::string tag = "order" + std::to_string(p.orders[i]);
            ckpt.params.emplace(tag + ".filters", p.filters[i]);
            ckpt.params.emplace(tag + ".bias", p.biases[i]);
        }
        ckpt.params.emplace("w", p.w);
        ckpt.params.emplace("b", p.b);
    } else if (model.arch == "matchpyramid") {
        const auto& p = model.matchpyramid;
        for (int layer = 0; layer < kMpLayers; ++layer) {
            const std::string tag = "conv" + std::to_string(layer + 1);
            ckpt.params.emplace(tag + ".w", p.conv_w[layer]);
            ckpt.params.emplace(tag + ".b", p.conv_b[layer]);
        }
        ckpt.params.emplace("dense.w", p.dense_w);
        ckpt.params.emplace("dense.b", p.dense_b);
        ckpt.meta_num["canvas_h"] = static_cast<double>(p.canvas_h);
        ckpt.meta_num["canvas_w"] = static_cast<double>(p.canvas_w);
        ckpt.meta_num["grid_h"] = p.grid_h;
        ckpt.meta_num["grid_w"] = p.grid_w;
    } else {
        throw ContractError("to_checkpoint: unknown arch '" + model.arch + "'");
    }
    return ckpt;
}

namespace {

const Array& require_param(const Checkpoint& ckpt, const std::string& name) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) {
        throw ContractError("checkpoint missing parameter '" + name + "'");
    }
    return it->second;
}

double require_meta(const Checkpoint& ckpt, const std::string& name) {
    auto it = ckpt.meta_num.find(name);
    if (it == ckpt.meta_num.end()) {
        throw ContractError("checkpoint missing metadata '" + name + "'");
    }
    return it->second;
}

}  // namespace

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model model;
    model.arch = ckpt.arch;
    model.bank.mu = ckpt.mu;
    model.bank.sigma = ckpt.sigma;
    const auto k = static_cast<std::int64_t>(model.bank.size());
    if (k == 0) throw ContractError("checkpoint has an empty kernel bank");
    if (ckpt.arch == "knrm") {
        model.knrm.w = require_param(ckpt, "w");
        model.knrm.b = require_param(ckpt, "b");
        if (model.knrm.w.size() != k || model.knrm.b.size() != 1) {
            throw ContractError("knrm checkpoint parameter shapes do not match the kernel bank");
        }
    } else if (ckpt.arch == "convknrm") {
        auto& p = model.convknrm;
        p.orders.clear();
        for (const auto& [name, arr] : ckpt.params) {
            if (name.rfind("order", 0) == 0 && name.size() > 5 &&
                name.find(".filters") != std::string::npos) {
                if (arr.rank() != 3) {
                    throw ContractError("checkpoint parameter '" + name + "' must be rank 3");
                }
                p.orders.push_back(static_cast<int>(arr.shape()[1]));
            }
        }
        std::sort(p.orders.begin(), p.orders.end());
        validate_orders(p.orders);
        for (int h : p.orders) {
            const std::string tag = "order" + std::to_string(h);
            const Array& f = require_param(ckpt, tag + ".filters");
            const Array& b = require_param(ckpt, tag + ".bias");
            if (f.shape()[1] != h || b.rank() != 1 || b.shape()[0] != f.shape()[0]) {
                throw ContractError("checkpoint filter bank '" + tag + "' is inconsistent");
            }
            p.filters.push_back(f);
            p.biases.push_back(b);
        }
        p.w = require_param(ckpt, "w");
        p.b = require_param(ckpt, "b");
        const auto n_orders = static_cast<std::int64_t>(p.orders.size());
        if (p.w.size() != k * n_orders * n_orders || p.b.size() != 1) {
            throw ContractError("convknrm checkpoint weight length does not match bank/orders");
        }
    } else if (ckpt.arch == "matchpyramid") {
        auto& p = model.matchpyramid;
        p.canvas_h = static_cast<std::int64_t>(require_meta(ckpt, "canvas_h"));
        p.canvas_w = static_cast<std::int64_t>(require_meta(ckpt, "canvas_w"));
        p.grid_h = static_cast<int>(require_meta(ckpt, "grid_h"));
        p.grid_w = static_cast<int>(require_meta(ckpt, "grid_w"));
        std::int64_t c_in = 1;
        for (int layer = 0; layer < kMpLayers; ++layer) {
            const std::string tag = "conv" + std::to_string(layer + 1);
            const Array& w = require_param(ckpt, tag + ".w");
            const Array& b = require_param(ckpt, tag + ".b");
            const std::vector<std::int64_t> want{kMpChannels, c_in, kMpKernel, kMpKernel};
            if (w.shape() != want || b.size() != kMpChannels) {
                throw ContractError("checkpoint conv layer '" + tag + "' has unexpected shape");
            }
            p.conv_w.push_back(w);
            p.conv_b.push_back(b);
            c_in = kMpChannels;
        }
        p.dense_w = require_param(ckpt, "dense.w");
        p.dense_b = require_param(ckpt, "dense.b");
        const std::int64_t flat = kMpChannels * p.grid_h * p.grid_w;
        if (p.dense_w.rank() != 2 || p.dense_w.shape()[0] != flat || p.dense_w.shape()[1] != 1 ||
            p.dense_b.size() != 1) {
            throw ContractError("matchpyramid checkpoint dense layer has unexpected shape");
        }
    } else {
        throw ContractError("model_from_checkpoint: unknown arch '" + ckpt.arch + "'");
    }
    return model;
}

numeric::Array sim_matrix(const numeric::Array& q, const numeric::Array& d) {
    if (q.rank() != 2 || d.rank() != 2 || q.shape()[1] != d.shape()[1]) {
        throw ContractError("sim_matrix: incompatible shapes " + numeric::shape_string(q.shape()) +
                            " and " + numeric::shape_string(d.shape()));
    }
    const std::int64_t n = q.shape()[0], m = d.shape()[0], dim = q.shape()[1];
    std::vector<double> nq(static_cast<std::size_t>(n)), nd(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::int64_t c = 0; c < dim; ++c) s += q.at(i, c) * q.at(i, c);
        nq[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
    for (std::int64_t j = 0; j < m; ++j) {
        double s = 0;
        for (std::int64_t c = 0; c < dim; ++c) s += d.at(j, c) * d.at(j, c);
        nd[static_cast<std::size_t>(j)] = std::sqrt(s);
    }
    Array out({n, m});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) {
            if (nq[static_cast<std::size_t>(i)] <= Tape::kNormEps ||
                nd[static_cast<std::size_t>(j)] <= Tape::kNormEps) {
                out.at(i, j) = 0.0;
                continue;
            }
            double dot = 0;
            for (std::int64_t c = 0; c < dim; ++c) dot += q.at(i, c) * d.at(j, c);
            out.at(i, j) = dot / (nq[static_cast<std::size_t>(i)] * nd[static_cast<std::size_t>(j)]);
        }
    return out;
}

std::vector<double> kernel_pool(const numeric::Array& m, const KernelBank& bank) {
    if (m.rank() != 2) throw ContractError("kernel_pool: need a 2-D similarity matrix");
    const std::int64_t rows = m.shape()[0], cols = m.shape()[1];
    std::vector<double> phi(bank.size());
    for (std::size_t k = 0; k < bank.size(); ++k) {
        const double mu = bank.mu[k];
        const double inv_two_s2 = 1.0 / (2.0 * bank.sigma[k] * bank.sigma[k]);
        double acc = 0;
        for (std::int64_t i = 0; i < rows; ++i) {
            double s = 0;
            for (std::int64_t j = 0; j < cols; ++j) {
                const double diff = m.at(i, j) - mu;
                s += std::exp(-diff * diff * inv_two_s2);
            }
            acc += std::log(std::max(Tape::kLogClamp, s));
        }
        phi[k] = acc;
    }
    return phi;
}

std::optional<numeric::Array> embed_matrix(const embed::EmbeddingTable& table,
                                           const std::vector<std::string>& tokens,
                                           std::size_t max_len) {
    if (max_len < 1) throw ContractError("embed_matrix: max_len must be positive");
    std::vector<double> rows;
    std::int64_t n = 0;
    const std::size_t take = std::min(max_len, tokens.size());
    for (std::size_t i = 0; i < take; ++i) {
        auto vec = table.lookup(tokens[i]);
        if (!vec) continue;
        rows.insert(rows.end(), vec->begin(), vec->end());
        ++n;
    }
    if (n == 0) return std::nullopt;
    return Array({n, static_cast<std::int64_t>(table.dim())}, std::move(rows));
}

ModelVars register_params(numeric::Tape& tape, const Model& model, bool requires_grad) {
    ModelVars vars;
    auto reg = [&](const std::string& name, const Array& value) {
        Var v = tape.leaf(value, requires_grad);
        vars.all.push_back(v);
        vars.names.push_back(name);
        return v;
    };
    if (model.arch == "knrm") {
        vars.w = reg("w", model.knrm.w);
        vars.b = reg("b", model.knrm.b);
    } else if (model.arch == "convknrm") {
        const auto& p = model.convknrm;
        for (std::size_t i = 0; i < p.orders.size(); ++i) {
            const std::string tag = "order" + std::to_string(p.orders[i]);
            vars.filters.push_back(reg(tag + ".filters", p.filters[i]));
            vars.biases.push_back(reg(tag + ".bias", p.biases[i]));
        }
        vars.w = reg("w", p.w);
        vars.b = reg("b", p.b);
    } else if (model.arch == "matchpyramid") {
        const auto& p = model.matchpyramid;
        for (int layer = 0; layer < kMpLayers; ++layer) {
            const std::string tag = "conv" + std::to_string(layer + 1);
            vars.filters.push_back(reg(tag + ".w", p.conv_w[layer]));
            vars.biases.push_back(reg(tag + ".b", p.conv_b[layer]));
        }
        vars.w = reg("dense.w", p.dense_w);
        vars.b = reg("dense.b", p.dense_b);
    } else {
        throw ContractError("register_params: unknown arch '" + model.arch + "'");
    }
    return vars;
}

std::vector<numeric::Array> collect_params(const Model& model) {
    std::vector<Array> params;
    auto take = [&](const Array& a) { params.push_back(a); };
    if (model.arch == "knrm") {
        take(model.knrm.w);
        take(model.knrm.b);
    } else if (model.arch == "convknrm") {
        for (std::size_t i = 0; i < model.convknrm.orders.size(); ++i) {
            take(model.convknrm.filters[i]);
            take(model.convknrm.biases[i]);
        }
        take(model.convknrm.w);
        take(model.convknrm.b);
    } else if (model.arch == "matchpyramid") {
        for (int layer = 0; layer < kMpLayers; ++layer) {
            take(model.matchpyramid.conv_w[layer]);
            take(model.matchpyramid.conv_b[layer]);
        }
        take(model.matchpyramid.dense_w);
        take(model.matchpyramid.dense_b);
    } else {
        throw ContractError("collect_params: unknown arch '" + model.arch + "'");
    }
    return params;
}

void assign_params(Model& model, const std::vector<numeric::Array>& params) {
    std::size_t i = 0;
    auto put = [&](Array& dst) {
        if (i >= params.size() || !params[i].same_shape(dst)) {
            throw ContractError("assign_params: parameter list does not match the model");
        }
        dst = params[i++];
    };
    if (model.arch == "knrm") {
        put(model.knrm.w);
        put(model.knrm.b);
    } else if (model.arch == "convknrm") {
        for (std::size_t o = 0; o < model.convknrm.orders.size(); ++o) {
            put(model.convknrm.filters[o]);
            put(model.convknrm.biases[o]);
        }
        put(model.convknrm.w);
        put(model.convknrm.b);
    } else if (model.arch == "matchpyramid") {
        for (int layer = 0; layer < kMpLayers; ++layer) {
            put(model.matchpyramid.conv_w[layer]);
            put(model.matchpyramid.conv_b[layer]);
        }
        put(model.matchpyramid.dense_w);
        put(model.matchpyramid.dense_b);
    } else {
        throw ContractError("assign_params: unknown arch '" + model.arch + "'");
    }
    if (i != params.size()) {
        throw ContractError("assign_params: parameter list does not match the model");
    }
}

namespace {

Var pooled_features(Tape& tape, const KernelBank& bank, Var m) {
    return tape.gaussian_kernel_pool(m, bank.mu, bank.sigma);
}

Var knrm_graph(Tape& tape, const Model& model, const ModelVars& vars, Var q, Var d) {
    Var m = tape.cosine_matrix(q, d);
    Var phi = pooled_features(tape, model.bank, m);
    const auto k = static_cast<std::int64_t>(model.bank.size());
    Var s = tape.affine(phi, tape.reshape(vars.w, {k, 1}), vars.b);
    return tape.tanh(s);
}

Var convknrm_graph(Tape& tape, const Model& model, const ModelVars& vars, Var q, Var d) {
    const auto& p = model.convknrm;
    const std::int64_t qn = tape.value(q).shape()[0];
    const std::int64_t dn = tape.value(d).shape()[0];
    const auto k = static_cast<std::int64_t>(model.bank.size());
    // Composed n-gram matrices per usable order; unusable orders stay unset.
    std::vector<std::optional<Var>> q_comp(p.orders.size()), d_comp(p.orders.size());
    bool any_q = false, any_d = false;
    for (std::size_t i = 0; i < p.orders.size(); ++i) {
        const int h = p.orders[i];
        if (h <= qn) {
            q_comp[i] = tape.relu(tape.conv1d(q, vars.filters[i], vars.biases[i]));
            any_q = true;
        }
        if (h <= dn) {
            d_comp[i] = tape.relu(tape.conv1d(d, vars.filters[i], vars.biases[i]));
            any_d = true;
        }
    }
    if (!any_q || !any_d) {
        throw EmptyInputError("convknrm: no n-gram order fits the input lengths");
    }
    std::vector<Var> segments;
    for (std::size_t iq = 0; iq < p.orders.size(); ++iq) {
        for (std::size_t id = 0; id < p.orders.size(); ++id) {
            if (q_comp[iq] && d_comp[id]) {
                Var m = tape.cosine_matrix(*q_comp[iq], *d_comp[id]);
                segments.push_back(pooled_features(tape, model.bank, m));
            } else {
                segments.push_back(tape.constant(Array({k})));
            }
        }
    }
    Var phi = tape.concat(segments);
    const auto total = static_cast<std::int64_t>(p.w.size());
    Var s = tape.affine(phi, tape.reshape(vars.w, {total, 1}), vars.b);
    return tape.tanh(s);
}

Var matchpyramid_graph(Tape& tape, const Model& model, const ModelVars& vars, Var q, Var d) {
    const auto& p = model.matchpyramid;
    Var m = tape.cosine_matrix(q, d);
    Var canvas = tape.pad2d(m, p.canvas_h, p.canvas_w);
    Var x = tape.reshape(canvas, {1, p.canvas_h, p.canvas_w});
    for (int layer = 0; layer < kMpLayers; ++layer) {
        x = tape.relu(tape.conv2d(x, vars.filters[layer], vars.biases[layer]));
        x = tape.maxpool2d(x, 2, 2);
    }
    x = tape.adaptive_maxpool2d(x, p.grid_h, p.grid_w);
    x = tape.reshape(x, {kMpChannels * p.grid_h * p.grid_w});
    return tape.affine(x, vars.w, vars.b);
}

}  // namespace

numeric::Var score_graph(numeric::Tape& tape, const Model& model, const ModelVars& vars,
                         numeric::Var q, numeric::Var d) {
    const Array& qv = tape.value(q);
    const Array& dv = tape.value(d);
    if (qv.rank() != 2 || dv.rank() != 2 || qv.shape()[1] != dv.shape()[1]) {
        throw ContractError("score_graph: incompatible embedded shapes " +
                            numeric::shape_string(qv.shape()) + " and " +
                            numeric::shape_string(dv.shape()));
    }
    if (model.arch == "knrm") return knrm_graph(tape, model, vars, q, d);
    if (model.arch == "convknrm") return convknrm_graph(tape, model, vars, q, d);
    if (model.arch == "matchpyramid") return matchpyramid_graph(tape, model, vars, q, d);
    throw ContractError("score_graph: unknown arch '" + model.arch + "'");
}

double score_pair(const Model& model, const numeric::Array& q, const numeric::Array& d) {
    try {
        Tape tape;
        ModelVars vars = register_params(tape, model, false);
        Var score = score_graph(tape, model, vars, tape.constant(q), tape.constant(d));
        return tape.value(score).item();
    } catch (const EmptyInputError&) {
        return kScoreSentinel;
    }
}

double score_tokens(const Model& model, const embed::EmbeddingTable& table,
                    const std::vector<std::string>& q_tokens,
                    const std::vector<std::string>& d_tokens, std::size_t q_max,
                    std::size_t d_max) {
    auto q = embed_matrix(table, q_tokens, q_max);
    if (!q) return kScoreSentinel;
    auto d = embed_matrix(table, d_tokens, d_max);
    if (!d) return kScoreSentinel;
    return score_pair(model, *q, *d);
}

}  // namespace xlir::rank
