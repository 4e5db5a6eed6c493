#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "xlir/common.hpp"
#include "xlir/embed.hpp"
#include "xlir/optim.hpp"
#include "xlir/rankers.hpp"

using namespace xlir;
using namespace xlir::rank;
using numeric::Array;
using numeric::Tape;
using numeric::Var;

namespace {

Array rand_matrix(std::int64_t n, std::int64_t d, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a({n, d});
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

// Per-pair cosine recomputed from scratch.
double pair_cosine(const Array& a, std::int64_t i, const Array& b, std::int64_t j) {
    double dot = 0, na = 0, nb = 0;
    for (std::int64_t c = 0; c < a.shape()[1]; ++c) {
        dot += a.at(i, c) * b.at(j, c);
        na += a.at(i, c) * a.at(i, c);
        nb += b.at(j, c) * b.at(j, c);
    }
    if (std::sqrt(na) <= Tape::kNormEps || std::sqrt(nb) <= Tape::kNormEps) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Pooled features recomputed with the brute-force double loop.
std::vector<double> pool_oracle(const Array& m, const KernelBank& bank) {
    std::vector<double> phi(bank.size(), 0.0);
    for (std::size_t k = 0; k < bank.size(); ++k) {
        for (std::int64_t i = 0; i < m.shape()[0]; ++i) {
            double row = 0;
            for (std::int64_t j = 0; j < m.shape()[1]; ++j) {
                double diff = m.at(i, j) - bank.mu[k];
                row += std::exp(-diff * diff / (2.0 * bank.sigma[k] * bank.sigma[k]));
            }
            phi[k] += std::log(std::max(Tape::kLogClamp, row));
        }
    }
    return phi;
}

embed::EmbeddingTable tiny_table() {
    // 3-dim space; "void" is deliberately absent
    std::vector<std::string> tokens = {"alpha", "beta", "gamma", "delta"};
    std::vector<double> data = {
        1.0, 0.2, 0.0,   // alpha
        0.1, 1.0, 0.3,   // beta
        0.0, 0.4, 1.0,   // gamma
        0.7, 0.7, 0.1,   // delta
    };
    return embed::EmbeddingTable(3, tokens, data);
}

ModelConfig small_mp_config() {
    ModelConfig cfg;
    cfg.canvas_h = 30;
    cfg.canvas_w = 30;
    cfg.grid_h = 2;
    cfg.grid_w = 2;
    return cfg;
}

}  // namespace

TEST_CASE("default kernel bank: one exact-match kernel plus ten soft ones") {
    auto bank = KernelBank::default_bank();
    REQUIRE(bank.size() == 11);
    CHECK(bank.mu[0] == 1.0);
    CHECK(bank.sigma[0] == 1e-3);
    for (int k = 1; k <= 10; ++k) {
        CHECK(bank.mu[static_cast<std::size_t>(k)] ==
              doctest::Approx(-0.9 + 0.2 * (k - 1)).epsilon(1e-12));
        CHECK(bank.sigma[static_cast<std::size_t>(k)] == 0.1);
    }
}

TEST_CASE("sim_matrix matches the per-pair cosine oracle") {
    Rng rng(31);
    Array q = rand_matrix(3, 5, rng);
    Array d = rand_matrix(4, 5, rng);
    Array m = sim_matrix(q, d);
    REQUIRE(m.shape() == (std::vector<std::int64_t>{3, 4}));
    for (std::int64_t i = 0; i < 3; ++i)
        for (std::int64_t j = 0; j < 4; ++j)
            CHECK(m.at(i, j) == doctest::Approx(pair_cosine(q, i, d, j)).epsilon(1e-12));
}

TEST_CASE("kernel_pool helper agrees with the brute-force oracle") {
    Rng rng(32);
    Array m = rand_matrix(4, 7, rng);
    auto bank = KernelBank::default_bank();
    auto phi = kernel_pool(m, bank);
    auto want = pool_oracle(m, bank);
    REQUIRE(phi.size() == want.size());
    for (std::size_t k = 0; k < phi.size(); ++k)
        CHECK(phi[k] == doctest::Approx(want[k]).epsilon(1e-12));
}

TEST_CASE("init_model draws in (-0.1, 0.1), zeroes conv biases, and is seeded") {
    auto bank = KernelBank::default_bank();
    ModelConfig cfg;
    cfg.n_filters = 8;
    Rng r1(5), r2(5), r3(6);
    Model a = init_model("convknrm", 4, bank, cfg, r1);
    Model b = init_model("convknrm", 4, bank, cfg, r2);
    Model c = init_model("convknrm", 4, bank, cfg, r3);

    for (const Array& f : a.convknrm.filters)
        for (std::int64_t i = 0; i < f.size(); ++i) CHECK(std::abs(f[i]) <= 0.1);
    for (const Array& bias : a.convknrm.biases)
        for (std::int64_t i = 0; i < bias.size(); ++i) CHECK(bias[i] == 0.0);
    CHECK(a.convknrm.w.size() == 11 * 2 * 2);

    CHECK(a.convknrm.w.vec() == b.convknrm.w.vec());        // same seed, same draw
    CHECK(a.convknrm.w.vec() != c.convknrm.w.vec());        // different seed differs

    Rng r4(5);
    Model mp = init_model("matchpyramid", 4, bank, small_mp_config(), r4);
    for (const Array& bias : mp.matchpyramid.conv_b)
        for (std::int64_t i = 0; i < bias.size(); ++i) CHECK(bias[i] == 0.0);
    CHECK(mp.matchpyramid.dense_w.shape() ==
          (std::vector<std::int64_t>{16 * 2 * 2, 1}));

    Rng r5(5);
    CHECK_THROWS_AS(init_model("mlp", 4, bank, cfg, r5), ContractError);
}

TEST_CASE("matchpyramid canvases too small for the pooling grid are rejected") {
    auto bank = KernelBank::default_bank();
    ModelConfig cfg;
    cfg.canvas_h = 45;  // 45 -> 21 -> 9 -> 3 after three conv+pool stages, below grid_h=4
    cfg.canvas_w = 94;
    Rng rng(1);
    CHECK_THROWS_AS(init_model("matchpyramid", 4, bank, cfg, rng), ContractError);
    cfg.canvas_h = 46;  // 46 -> 22 -> 10 -> 4, exactly enough
    Rng rng2(1);
    CHECK_NOTHROW(init_model("matchpyramid", 4, bank, cfg, rng2));
}

TEST_CASE("knrm score is tanh of the pooled features' affine map") {
    auto bank = KernelBank::default_bank();
    Rng rng(33);
    Model model = init_model("knrm", 3, bank, {}, rng);
    Array q = rand_matrix(2, 3, rng);
    Array d = rand_matrix(5, 3, rng);

    auto phi = pool_oracle(sim_matrix(q, d), bank);
    double z = model.knrm.b[0];
    for (std::size_t k = 0; k < phi.size(); ++k)
        z += model.knrm.w[static_cast<std::int64_t>(k)] * phi[k];
    double want = std::tanh(z);

    CHECK(score_pair(model, q, d) == doctest::Approx(want).epsilon(1e-12));
    CHECK(std::abs(score_pair(model, q, d)) < 1.0);
}

TEST_CASE("knrm score is invariant to rescaling the embeddings") {
    auto bank = KernelBank::default_bank();
    Rng rng(34);
    Model model = init_model("knrm", 4, bank, {}, rng);
    Array q = rand_matrix(3, 4, rng);
    Array d = rand_matrix(6, 4, rng);
    Array q5 = q, d5 = d;
    for (std::int64_t i = 0; i < q5.size(); ++i) q5[i] *= 5.0;
    for (std::int64_t i = 0; i < d5.size(); ++i) d5[i] *= 0.25;
    CHECK(score_pair(model, q5, d5) == doctest::Approx(score_pair(model, q, d)).epsilon(1e-12));
}

TEST_CASE("convknrm with identity unigram filters reduces to knrm") {
    // Identity composition plus non-negative inputs make relu a no-op, so the
    // composed similarity matrix equals the raw one.
    auto bank = KernelBank::default_bank();
    const int D = 3;
    Rng rng(35);
    Model knrm = init_model("knrm", D, bank, {}, rng);

    Model ck;
    ck.arch = "convknrm";
    ck.bank = bank;
    ck.convknrm.orders = {1};
    Array ident({D, 1, D});
    for (int i = 0; i < D; ++i) ident.at(i, 0, i) = 1.0;
    ck.convknrm.filters = {ident};
    ck.convknrm.biases = {Array({D})};
    ck.convknrm.w = knrm.knrm.w;  // 11 features either way when |orders| = 1
    ck.convknrm.b = knrm.knrm.b;

    Array q = rand_matrix(2, D, rng, 0.05, 1.0);
    Array d = rand_matrix(4, D, rng, 0.05, 1.0);
    CHECK(score_pair(ck, q, d) == doctest::Approx(score_pair(knrm, q, d)).epsilon(1e-12));
}

TEST_CASE("convknrm signals unusable inputs instead of inventing a score") {
    auto bank = KernelBank::default_bank();
    ModelConfig cfg;
    cfg.orders = {2, 3};
    cfg.n_filters = 4;
    Rng rng(36);
    Model model = init_model("convknrm", 3, bank, cfg, rng);
    Array one = rand_matrix(1, 3, rng);
    Array three = rand_matrix(3, 3, rng);

    // no order fits a single-token side
    CHECK(score_pair(model, one, three) == kScoreSentinel);
    CHECK(score_pair(model, three, one) == kScoreSentinel);
    CHECK(std::isfinite(score_pair(model, three, three)));

    Tape t;
    ModelVars vars = register_params(t, model, false);
    CHECK_THROWS_AS(score_graph(t, model, vars, t.constant(one), t.constant(three)),
                    EmptyInputError);
}

TEST_CASE("convknrm degrades gracefully when only some orders fit") {
    auto bank = KernelBank::default_bank();
    ModelConfig cfg;
    cfg.orders = {1, 2};
    cfg.n_filters = 4;
    Rng rng(37);
    Model model = init_model("convknrm", 3, bank, cfg, rng);
    Array one = rand_matrix(1, 3, rng);
    Array four = rand_matrix(4, 3, rng);
    double s = score_pair(model, one, four);  // bigram side of the query is empty
    CHECK(std::isfinite(s));
    CHECK(std::abs(s) < 1.0);
}

TEST_CASE("matchpyramid scores are finite and sensitive to the inputs") {
    auto bank = KernelBank::default_bank();
    Rng rng(38);
    Model model = init_model("matchpyramid", 4, bank, small_mp_config(), rng);
    Array q = rand_matrix(5, 4, rng);
    Array d1 = rand_matrix(20, 4, rng);
    Array d2 = rand_matrix(20, 4, rng);
    double s1 = score_pair(model, q, d1);
    double s2 = score_pair(model, q, d2);
    CHECK(std::isfinite(s1));
    CHECK(std::isfinite(s2));
    CHECK(s1 != s2);
}

TEST_CASE("embed_matrix truncates before dropping unknown tokens") {
    auto table = tiny_table();
    std::vector<std::string> tokens = {"alpha", "void", "beta"};
    auto m = embed_matrix(table, tokens, 2);
    REQUIRE(m.has_value());
    // cap of 2 keeps {alpha, void}; the unknown token then drops out
    REQUIRE(m->shape()[0] == 1);
    CHECK(m->at(0, 0) == doctest::Approx(1.0));

    auto full = embed_matrix(table, tokens, 10);
    REQUIRE(full.has_value());
    CHECK(full->shape()[0] == 2);

    std::vector<std::string> oov = {"void", "nada"};
    CHECK_FALSE(embed_matrix(table, oov, 10).has_value());
}

TEST_CASE("score_tokens falls back to the sentinel when a side has no vectors") {
    auto bank = KernelBank::default_bank();
    auto table = tiny_table();
    Rng rng(39);
    Model model = init_model("knrm", 3, bank, {}, rng);
    std::vector<std::string> good = {"alpha", "beta"};
    std::vector<std::string> oov = {"void"};
    CHECK(score_tokens(model, table, oov, good, 10, 10) == kScoreSentinel);
    CHECK(score_tokens(model, table, good, oov, 10, 10) == kScoreSentinel);
    CHECK(std::isfinite(score_tokens(model, table, good, good, 10, 10)));
}

TEST_CASE("checkpoint roundtrip preserves scores for every architecture") {
    auto bank = KernelBank::default_bank();
    auto dir = std::filesystem::temp_directory_path();
    Rng data_rng(40);
    Array q = rand_matrix(3, 4, data_rng);
    Array d = rand_matrix(8, 4, data_rng);

    for (const std::string arch : {"knrm", "convknrm", "matchpyramid"}) {
        ModelConfig cfg = small_mp_config();
        cfg.n_filters = 4;
        Rng rng(41);
        Model model = init_model(arch, 4, bank, cfg, rng);
        auto path = (dir / ("ckpt_" + arch + ".json")).string();
        Checkpoint ckpt = to_checkpoint(model);
        ckpt.meta_num["epoch"] = 3;
        save_checkpoint(ckpt, path);
        Model back = model_from_checkpoint(load_checkpoint(path));
        CHECK(back.arch == arch);
        CHECK(score_pair(back, q, d) == doctest::Approx(score_pair(model, q, d)).epsilon(1e-15));
        CHECK(load_checkpoint(path).meta_num.at("epoch") == 3);
    }
}

TEST_CASE("corrupted checkpoints are rejected") {
    auto dir = std::filesystem::temp_directory_path();
    auto bank = KernelBank::default_bank();
    Rng rng(42);
    Model model = init_model("knrm", 4, bank, {}, rng);

    Checkpoint ckpt = to_checkpoint(model);
    ckpt.params.at("w") = Array({3}, {1, 2, 3});  // wrong width for the bank
    auto path = (dir / "ckpt_badshape.json").string();
    save_checkpoint(ckpt, path);
    CHECK_THROWS_AS(model_from_checkpoint(load_checkpoint(path)), ContractError);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), ParseError);
}

TEST_CASE("collect/assign roundtrip restores every parameter") {
    auto bank = KernelBank::default_bank();
    ModelConfig cfg;
    cfg.n_filters = 3;
    Rng rng(43);
    Model model = init_model("convknrm", 4, bank, cfg, rng);
    auto params = collect_params(model);
    REQUIRE(!params.empty());
    for (Array& p : params)
        for (std::int64_t i = 0; i < p.size(); ++i) p[i] += 0.5;
    assign_params(model, params);
    auto again = collect_params(model);
    REQUIRE(again.size() == params.size());
    for (std::size_t p = 0; p < params.size(); ++p) CHECK(again[p].vec() == params[p].vec());
}

TEST_CASE("score graphs differentiate: finite-difference check per architecture") {
    // The exact-match kernel (sigma 1e-3) is sharply curved, so the step must
    // stay well inside it; h = 1e-5 keeps truncation under the 1e-3 bound.
    auto bank = KernelBank::default_bank();
    const int dim = 8;
    Rng data_rng(44);

    for (const std::string arch : {"knrm", "convknrm", "matchpyramid"}) {
        ModelConfig cfg = small_mp_config();
        cfg.n_filters = 3;
        // fill the canvas exactly: no padded zeros, so no relu kinks at zero
        std::int64_t q_len = arch == "matchpyramid" ? cfg.canvas_h : 3;
        std::int64_t d_len = arch == "matchpyramid" ? cfg.canvas_w : 6;
        Array q = rand_matrix(q_len, dim, data_rng);
        Array d = rand_matrix(d_len, dim, data_rng);

        Rng rng(45);
        Model base = init_model(arch, dim, bank, cfg, rng);
        if (arch == "matchpyramid") {
            // zero-initialized conv biases sit on the relu kink; nudge them off
            for (Array& bias : base.matchpyramid.conv_b)
                for (std::int64_t i = 0; i < bias.size(); ++i)
                    bias[i] = 0.02 + 0.01 * static_cast<double>(i % 5);
        }
        numeric::LossFn fn = [&](std::span<const Array> ps, std::vector<Array>* gout) {
            Model m = base;
            assign_params(m, std::vector<Array>(ps.begin(), ps.end()));
            Tape t;
            ModelVars vars = register_params(t, m, true);
            Var s = score_graph(t, m, vars, t.constant(q), t.constant(d));
            t.backward(s);
            if (gout) {
                gout->clear();
                for (Var v : vars.all) gout->push_back(t.grad(v));
            }
            return t.value(s).item();
        };
        // sample a handful of coordinates per parameter to keep this quick
        double err = numeric::grad_check(fn, collect_params(base), 1e-5, 8, 7);
        INFO("arch ", arch);
        CHECK(err < 1e-3);
    }
}
