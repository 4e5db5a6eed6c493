#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "xlir/common.hpp"
#include "xlir/embed.hpp"
#include "xlir/train.hpp"

using namespace xlir;
using namespace xlir::train;
using numeric::Array;
using numeric::Tape;
using numeric::Var;

namespace {

// Loss recomputed longhand: cross entropy between the two softmaxes.
double loss_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
    auto softmax = [](const std::vector<double>& x) {
        double mx = x[0];
        for (double v : x) mx = std::max(mx, v);
        std::vector<double> out(x.size());
        double z = 0;
        for (std::size_t i = 0; i < x.size(); ++i) z += (out[i] = std::exp(x[i] - mx));
        for (double& v : out) v /= z;
        return out;
    };
    std::vector<double> lab(labels.begin(), labels.end());
    auto p = softmax(lab);
    auto q = softmax(scores);
    double loss = 0;
    for (std::size_t i = 0; i < p.size(); ++i) loss -= p[i] * std::log(std::max(1e-10, q[i]));
    return loss;
}

// Small word space where every token embeds.
embed::EmbeddingTable toy_table() {
    std::vector<std::string> tokens;
    std::vector<double> data;
    Rng rng(77);
    for (int i = 0; i < 30; ++i) {
        tokens.push_back("w" + std::to_string(i));
        for (int c = 0; c < 4; ++c) data.push_back(rng.uniform(-1.0, 1.0));
    }
    return embed::EmbeddingTable(4, tokens, data);
}

// One unit whose pool references docs w-token docs; doc ids name their tokens.
TrainUnit toy_unit(int pool_size, std::unordered_map<std::string, std::vector<std::string>>& docs,
                   Rng& rng) {
    TrainUnit unit;
    unit.topic_id = "T1";
    unit.component = Component::title;
    unit.query_tokens = {"w0", "w1", "w2"};
    unit.positives = {"pos"};
    unit.exclude = {"pos"};
    docs["pos"] = {"w0", "w1", "w2", "w3"};
    unit.pool.topic_id = "T1";
    for (int i = 0; i < pool_size; ++i) {
        std::string id = "n" + std::to_string(i);
        std::vector<std::string> tokens;
        for (int t = 0; t < 5; ++t)
            tokens.push_back("w" + std::to_string(rng.uniform_int(30)));
        docs[id] = tokens;
        unit.pool.entries.push_back({id, i + 1, 100.0 - i});
    }
    return unit;
}

}  // namespace

TEST_CASE("listnet loss matches the oracle and its uniform-score closed form") {
    std::vector<int> labels(50, 0);
    labels[7] = 1;
    std::vector<double> uniform(50, 0.25);
    // equal scores spread q uniformly: loss = ln(50)
    CHECK(listnet_loss(uniform, labels) == doctest::Approx(std::log(50.0)).epsilon(1e-12));
    CHECK(std::log(50.0) == doctest::Approx(3.9120).epsilon(1e-4));

    Rng rng(51);
    std::vector<double> scores(50);
    for (double& s : scores) s = rng.uniform(-2.0, 2.0);
    CHECK(listnet_loss(scores, labels) ==
          doctest::Approx(loss_oracle(scores, labels)).epsilon(1e-12));
}

TEST_CASE("the loss bottoms out where the score softmax matches the label softmax") {
    // cross entropy H(p, q) >= H(p, p), with equality at q = p, which for
    // integer labels means scores = labels up to a shared constant
    std::vector<int> labels = {0, 1, 0};
    std::vector<double> p = {std::exp(0.0), std::exp(1.0), std::exp(0.0)};
    double z = p[0] + p[1] + p[2];
    double entropy = 0;
    for (double v : p) entropy -= v / z * std::log(v / z);

    CHECK(listnet_loss(std::vector<double>{0.0, 1.0, 0.0}, labels) == doctest::Approx(entropy).epsilon(1e-12));
    CHECK(listnet_loss(std::vector<double>{5.0, 6.0, 5.0}, labels) == doctest::Approx(entropy).epsilon(1e-12));
    for (const auto& other : std::vector<std::vector<double>>{
             {0, 0, 0}, {0, 2, 0}, {-1, 4, 0.5}, {-30, 30, -30}}) {
        CHECK(listnet_loss(other, labels) > entropy);
    }
}

TEST_CASE("loss decreases as the positive's score rises toward the optimum") {
    std::vector<int> labels = {0, 1, 0, 0};
    double prev = listnet_loss(std::vector<double>{0, 0, 0, 0}, labels);
    for (double boost : {0.25, 0.5, 0.75, 1.0}) {
        double cur = listnet_loss(std::vector<double>{0, boost, 0, 0}, labels);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("loss graph gradient equals softmax(scores) minus softmax(labels)") {
    std::vector<int> labels = {0, 1, 0, 0, 0};
    std::vector<double> scores = {0.3, -0.2, 0.9, -1.1, 0.4};

    Tape t;
    Var s = t.param(Array({5}, scores));
    Var loss = listnet_loss_graph(t, s, labels);
    CHECK(t.value(loss).item() == doctest::Approx(loss_oracle(scores, labels)).epsilon(1e-12));
    t.backward(loss);

    auto softmax = [](std::vector<double> x) {
        double mx = *std::max_element(x.begin(), x.end());
        double z = 0;
        for (double& v : x) z += (v = std::exp(v - mx));
        for (double& v : x) v /= z;
        return x;
    };
    auto q = softmax(scores);
    auto p = softmax(std::vector<double>(labels.begin(), labels.end()));
    for (std::size_t i = 0; i < scores.size(); ++i) {
        CHECK(t.grad(s)[static_cast<std::int64_t>(i)] ==
              doctest::Approx(q[i] - p[i]).epsilon(1e-9));
    }
}

TEST_CASE("degenerate lists are rejected") {
    CHECK_THROWS_AS(listnet_loss(std::vector<double>{1.0}, std::vector<int>{1}), ContractError);
    std::vector<double> two = {1.0, 2.0};
    std::vector<int> mismatched = {1};
    CHECK_THROWS_AS(listnet_loss(two, mismatched), ContractError);
}

TEST_CASE("sampled lists start with the positive and draw distinct negatives") {
    std::unordered_map<std::string, std::vector<std::string>> docs;
    Rng pool_rng(52);
    TrainUnit unit = toy_unit(30, docs, pool_rng);
    Rng rng(53);
    auto lists = sample_lists(unit, 10, 4, rng);
    REQUIRE(lists.size() == 4);  // one positive, four lists each
    for (const auto& list : lists) {
        REQUIRE(list.doc_ids.size() == 10);
        REQUIRE(list.labels.size() == 10);
        CHECK(list.doc_ids[0] == "pos");
        CHECK(list.labels[0] == 1);
        std::set<std::string> distinct(list.doc_ids.begin(), list.doc_ids.end());
        CHECK(distinct.size() == 10);
        for (std::size_t i = 1; i < list.doc_ids.size(); ++i) {
            CHECK(list.labels[i] == 0);
            CHECK(list.doc_ids[i] != "pos");  // excluded from the negative pool
        }
    }
}

TEST_CASE("sampling is deterministic in the seed and pools that are too small warn") {
    std::unordered_map<std::string, std::vector<std::string>> docs;
    Rng pool_rng(54);
    TrainUnit unit = toy_unit(30, docs, pool_rng);
    Rng r1(9), r2(9);
    auto a = sample_lists(unit, 8, 3, r1);
    auto b = sample_lists(unit, 8, 3, r2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].doc_ids == b[i].doc_ids);

    std::unordered_map<std::string, std::vector<std::string>> docs2;
    Rng pool_rng2(55);
    TrainUnit tiny = toy_unit(3, docs2, pool_rng2);  // 3 negatives < list_size - 1
    Rng r3(9);
    CHECK(sample_lists(tiny, 10, 2, r3).empty());
}

TEST_CASE("config validation names the broken field") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.epochs = 20;  // not a multiple of checkpoint_every = 3
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = TrainConfig{};
    cfg.list_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = TrainConfig{};
    cfg.val_fraction = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("training runs, logs epochs, checkpoints on schedule, and improves") {
    auto table = toy_table();
    std::unordered_map<std::string, std::vector<std::string>> docs;
    Rng pool_rng(56);
    std::vector<TrainUnit> units = {toy_unit(25, docs, pool_rng)};

    TrainConfig cfg;
    cfg.list_size = 6;
    cfg.epochs = 6;
    cfg.checkpoint_every = 3;
    cfg.lr = 5e-3;
    cfg.lists_per_example_per_epoch = 4;
    cfg.seed = 3;
    cfg.q_max = 10;
    cfg.d_max = 10;

    std::ostringstream log;
    auto result = xlir::train::train("knrm", {}, rank::KernelBank::default_bank(), units, docs, table, cfg,
                        &log);

    REQUIRE(result.checkpoints.size() == 2);  // epochs 3 and 6
    CHECK(result.checkpoints[0].meta_num.at("epoch") == 3);
    CHECK(result.checkpoints[1].meta_num.at("epoch") == 6);
    CHECK(result.best_index < result.checkpoints.size());
    REQUIRE(result.log.size() == 6);
    for (const auto& e : result.log) CHECK(std::isfinite(e.mean_loss));
    // the optimizer should be making headway on a tiny separable problem
    CHECK(result.log.back().mean_loss < result.log.front().mean_loss);

    // one JSON line per epoch
    int lines = 0;
    std::string line;
    std::istringstream in(log.str());
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 6);
    CHECK(log.str().find("\"epoch\"") != std::string::npos);
    CHECK(log.str().find("\"val_loss\"") != std::string::npos);
}

TEST_CASE("training is bit-deterministic in the seed") {
    auto table = toy_table();
    std::unordered_map<std::string, std::vector<std::string>> docs;
    Rng pool_rng(57);
    std::vector<TrainUnit> units = {toy_unit(20, docs, pool_rng)};

    TrainConfig cfg;
    cfg.list_size = 5;
    cfg.epochs = 3;
    cfg.checkpoint_every = 3;
    cfg.lists_per_example_per_epoch = 3;
    cfg.seed = 11;
    cfg.q_max = 8;
    cfg.d_max = 8;

    auto r1 = xlir::train::train("knrm", {}, rank::KernelBank::default_bank(), units, docs, table, cfg,
                    nullptr);
    auto r2 = xlir::train::train("knrm", {}, rank::KernelBank::default_bank(), units, docs, table, cfg,
                    nullptr);
    REQUIRE(r1.checkpoints.size() == r2.checkpoints.size());
    const auto& p1 = r1.checkpoints.back().params;
    const auto& p2 = r2.checkpoints.back().params;
    REQUIRE(p1.size() == p2.size());
    for (const auto& [name, arr] : p1) {
        CHECK(arr.vec() == p2.at(name).vec());
    }

    cfg.seed = 12;
    auto r3 = xlir::train::train("knrm", {}, rank::KernelBank::default_bank(), units, docs, table, cfg,
                    nullptr);
    CHECK(r3.checkpoints.back().params.at("w").vec() != p1.at("w").vec());
}

TEST_CASE("checkpoint selection takes the lowest validation loss, earliest tie") {
    std::vector<Checkpoint> ckpts(3);
    for (int i = 0; i < 3; ++i) {
        ckpts[static_cast<std::size_t>(i)].meta_num["epoch"] = 3 * (i + 1);
    }
    ckpts[0].meta_num["val_loss"] = 2.0;
    ckpts[1].meta_num["val_loss"] = 1.0;
    ckpts[2].meta_num["val_loss"] = 1.5;
    CHECK(select_checkpoint(ckpts) == 1);

    ckpts[2].meta_num["val_loss"] = 1.0;  // tie with index 1
    CHECK(select_checkpoint(ckpts) == 1);

    CHECK_THROWS_AS(select_checkpoint({}), ContractError);
}
