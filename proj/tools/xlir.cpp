// Command-line front end: every pipeline stage as a subcommand, plus the
// synthetic dataset generator used by the test suite and demos.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xlir/checkpoint.hpp"
#include "xlir/common.hpp"
#include "xlir/fusion.hpp"
#include "xlir/index.hpp"
#include "xlir/metrics.hpp"
#include "xlir/pipeline.hpp"
#include "xlir/ranked_list.hpp"
#include "xlir/rankers.hpp"
#include "xlir/synthetic.hpp"
#include "xlir/train.hpp"

namespace {

using namespace xlir;

struct CommonPaths {
    std::string corpus, topics, embeddings, lexicon;
};

pipeline::PipelineConfig data_config(const CommonPaths& paths, double k1, double b) {
    pipeline::PipelineConfig cfg;
    cfg.corpus_path = paths.corpus;
    cfg.topics_path = paths.topics;
    cfg.embeddings_path = paths.embeddings;
    cfg.lexicon_path = paths.lexicon;
    cfg.k1 = k1;
    cfg.b = b;
    return cfg;
}

int cmd_index(const std::string& corpus) {
    const auto docs = index::load_corpus(pipeline::resolve_path(corpus));
    const auto idx = index::InvertedIndex::build(docs);
    nlohmann::json stats;
    stats["docs"] = idx.num_docs();
    stats["terms"] = idx.num_terms();
    stats["avgdl"] = idx.avgdl();
    std::cout << stats.dump(2) << '\n';
    return 0;
}

int cmd_preselect(const CommonPaths& paths, const std::string& component_name, int threshold,
                  double k1, double b, const std::string& out) {
    const Component component = component_from_string(component_name);
    pipeline::PipelineConfig cfg = data_config(paths, k1, b);
    cfg.embeddings_path.clear();
    // Pre-selection needs no embeddings; load the rest by hand.
    pipeline::Data data;
    data.docs = index::load_corpus(pipeline::resolve_path(cfg.corpus_path));
    data.index = index::InvertedIndex::build(data.docs, {k1, b});
    for (const auto& doc : data.docs) data.doc_tokens[doc.id] = doc.tokens;
    data.lexicon = embed::load_lexicon(pipeline::resolve_path(cfg.lexicon_path));
    data.topics = pipeline::load_topics(pipeline::resolve_path(cfg.topics_path));

    std::vector<RankedList> lists;
    for (const auto& topic : data.topics) {
        auto query = pipeline::build_query(data, topic, component, "engara");
        if (!query || query->bm25_tokens.empty()) {
            std::cerr << "warning: topic " << topic.id << ": component unusable; skipped\n";
            continue;
        }
        RankedList pool = pipeline::preselect_component(data, topic, *query, threshold);
        if (pool.entries.empty()) {
            std::cerr << "warning: topic " << topic.id << ": nothing matches; skipped\n";
            continue;
        }
        lists.push_back(std::move(pool));
    }
    if (lists.empty()) throw ContractError("preselect: no topic produced a pool");
    write_run_file(out, lists, "bm25_" + std::string(to_string(component)));
    std::cout << "wrote " << out << " (" << lists.size() << " topics)\n";
    return 0;
}

int cmd_train(const CommonPaths& paths, const std::string& arch, const std::string& mode,
              const std::string& components_csv, int threshold, double k1, double b,
              train::TrainConfig tcfg, rank::ModelConfig mcfg, const std::string& out_dir) {
    pipeline::PipelineConfig cfg = data_config(paths, k1, b);
    cfg.mode = mode;
    pipeline::Data data = pipeline::load_data(cfg);

    std::vector<Component> components;
    {
        std::stringstream ss(components_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) components.push_back(component_from_string(item));
        }
    }
    if (components.empty()) throw ContractError("train: no components enabled");

    const auto units = pipeline::build_train_units(data, components, threshold, mode);
    if (units.empty()) throw ContractError("train: no usable training units");

    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir + "/train_log.jsonl", std::ios::binary);
    if (!log) throw ContractError("train: cannot write " + out_dir + "/train_log.jsonl");

    const auto result = train::train(arch, mcfg, rank::KernelBank::default_bank(), units,
                                     data.doc_tokens, data.table, tcfg, &log);
    for (const Checkpoint& ckpt : result.checkpoints) {
        const int epoch = static_cast<int>(ckpt.meta_num.at("epoch"));
        save_checkpoint(ckpt, out_dir + "/ckpt_epoch" + std::to_string(epoch) + ".json");
    }
    const Checkpoint& best = result.checkpoints[result.best_index];
    save_checkpoint(best, out_dir + "/ckpt_best.json");
    std::cout << "best checkpoint: epoch " << static_cast<int>(best.meta_num.at("epoch"))
              << " (val_loss " << best.meta_num.at("val_loss") << ") -> " << out_dir
              << "/ckpt_best.json\n";
    return 0;
}

int cmd_rerank(const CommonPaths& paths, const std::string& checkpoint, const std::string& mode,
               const std::string& component_name, const std::string& run_path, std::size_t q_max,
               std::size_t d_max, double rrf_k, const std::string& out) {
    const Component component = component_from_string(component_name);
    pipeline::PipelineConfig cfg = data_config(paths, 1.2, 0.75);
    pipeline::Data data = pipeline::load_data(cfg);
    const rank::Model model =
        rank::model_from_checkpoint(load_checkpoint(pipeline::resolve_path(checkpoint)));

    std::map<std::string, const pipeline::Topic*> topics;
    for (const auto& topic : data.topics) topics[topic.id] = &topic;

    std::vector<RankedList> out_lists;
    for (RankedList& pool : read_run_file(pipeline::resolve_path(run_path))) {
        auto it = topics.find(pool.topic_id);
        if (it == topics.end()) {
            std::cerr << "warning: run topic " << pool.topic_id << " not in topics file; skipped\n";
            continue;
        }
        auto query = pipeline::build_query(data, *it->second, component, mode);
        if (!query) {
            std::cerr << "warning: topic " << pool.topic_id << ": empty component; skipped\n";
            continue;
        }
        pool.component = component;
        auto neural = pipeline::rerank_component(data, model, *it->second, *query, pool, q_max,
                                                 d_max, rrf_k);
        if (!neural) {
            std::cerr << "warning: topic " << pool.topic_id
                      << ": query has no embeddings; skipped\n";
            continue;
        }
        out_lists.push_back(std::move(*neural));
    }
    if (out_lists.empty()) throw ContractError("rerank: no topic produced a list");
    write_run_file(out, out_lists, "neural_" + std::string(to_string(component)));
    std::cout << "wrote " << out << " (" << out_lists.size() << " topics)\n";
    return 0;
}

int cmd_fuse(const std::string& method_name, double k, const std::vector<std::string>& run_paths,
             const std::string& out) {
    fusion::FusionConfig fcfg;
    fcfg.method = fusion::method_from_string(method_name);
    fcfg.rrf_k = k;

    std::vector<std::vector<RankedList>> runs;
    for (const std::string& path : run_paths) {
        runs.push_back(read_run_file(pipeline::resolve_path(path)));
    }
    std::set<std::string> topic_ids;
    for (const auto& run : runs) {
        for (const auto& list : run) topic_ids.insert(list.topic_id);
    }
    std::vector<RankedList> fused_all;
    for (const std::string& topic_id : topic_ids) {
        std::vector<RankedList> inputs;
        for (const auto& run : runs) {
            for (const auto& list : run) {
                if (list.topic_id == topic_id) inputs.push_back(list);
            }
        }
        fused_all.push_back(fusion::fuse(inputs, fcfg));
    }
    if (out.empty()) {
        write_run(std::cout, fused_all, method_name);
    } else {
        write_run_file(out, fused_all, method_name);
        std::cout << "wrote " << out << " (" << fused_all.size() << " topics)\n";
    }
    return 0;
}

int cmd_eval(const std::string& qrels_path, int k, const std::string& run_path) {
    const auto qrels = metrics::load_qrels(pipeline::resolve_path(qrels_path));
    const auto run = read_run_file(pipeline::resolve_path(run_path));
    const auto report = metrics::evaluate_run(run, qrels, k);
    std::cout << metrics::format_report(report, run_path);
    return 0;
}

int cmd_synth(const synth::SynthSpec& spec, const std::string& out_dir) {
    const auto paths = synth::make_synthetic_corpus(spec, out_dir);
    std::cout << "corpus:     " << paths.corpus << '\n'
              << "topics:     " << paths.topics << '\n'
              << "lexicon:    " << paths.lexicon << '\n'
              << "embeddings: " << paths.embeddings << '\n'
              << "qrels:      " << paths.qrels << '\n';
    return 0;
}

int cmd_pipeline(const pipeline::PipelineConfig& cfg) {
    const auto result = pipeline::run_pipeline(cfg);
    for (const auto& [label, path] : result.run_files) {
        std::cout << label << ": " << path << '\n';
    }
    if (!result.report_text.empty()) {
        std::cout << '\n' << result.report_text;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-lingual query-by-example retrieval pipeline"};
    app.require_subcommand(1);

    CommonPaths paths;
    auto add_data_flags = [&paths](CLI::App* sub, bool embeddings) {
        sub->add_option("--corpus", paths.corpus, "corpus JSONL path")->required();
        sub->add_option("--topics", paths.topics, "topics JSON path")->required();
        sub->add_option("--lexicon", paths.lexicon, "lexicon TSV path")->required();
        if (embeddings) {
            sub->add_option("--embeddings", paths.embeddings, "embeddings text path")->required();
        }
    };

    // index
    auto* sub_index = app.add_subcommand("index", "build the BM25 index and print stats");
    std::string index_corpus;
    sub_index->add_option("--corpus", index_corpus, "corpus JSONL path")->required();

    // preselect
    auto* sub_pre = app.add_subcommand("preselect", "BM25 pre-selection for one component");
    std::string pre_component = "title", pre_out = "bm25.run";
    int pre_threshold = 1000;
    double pre_k1 = 1.2, pre_b = 0.75;
    add_data_flags(sub_pre, false);
    sub_pre->add_option("--component", pre_component, "title|background|event_knowledge|example");
    sub_pre->add_option("--threshold", pre_threshold, "pool size");
    sub_pre->add_option("--k1", pre_k1, "BM25 k1");
    sub_pre->add_option("--b", pre_b, "BM25 b");
    sub_pre->add_option("--out", pre_out, "output run file")->required();

    // train
    auto* sub_train = app.add_subcommand("train", "train a re-ranker over all topics");
    std::string train_arch = "knrm", train_mode = "engara";
    std::string train_components = "title,background,event_knowledge,example";
    std::string train_out = "ckpts";
    int train_threshold = 1000;
    double train_k1 = 1.2, train_b = 0.75;
    train::TrainConfig tcfg;
    rank::ModelConfig mcfg;
    add_data_flags(sub_train, true);
    sub_train->add_option("--arch", train_arch, "knrm|convknrm|matchpyramid");
    sub_train->add_option("--mode", train_mode, "engara|fullara");
    sub_train->add_option("--components", train_components, "comma-separated component list");
    sub_train->add_option("--threshold", train_threshold, "pre-selection pool size");
    sub_train->add_option("--k1", train_k1, "BM25 k1");
    sub_train->add_option("--b", train_b, "BM25 b");
    sub_train->add_option("--list-size", tcfg.list_size, "candidates per list");
    sub_train->add_option("--epochs", tcfg.epochs, "training epochs");
    sub_train->add_option("--checkpoint-every", tcfg.checkpoint_every, "epochs per checkpoint");
    sub_train->add_option("--lr", tcfg.lr, "Adam learning rate");
    sub_train->add_option("--lists-per-example", tcfg.lists_per_example_per_epoch,
                          "lists sampled per example per epoch");
    sub_train->add_option("--seed", tcfg.seed, "rng seed");
    sub_train->add_option("--q-max", tcfg.q_max, "query token cap");
    sub_train->add_option("--d-max", tcfg.d_max, "doc token cap");
    sub_train->add_option("--val-fraction", tcfg.val_fraction, "held-out list fraction");
    sub_train->add_option("--filters", mcfg.n_filters, "convknrm filters per order");
    sub_train->add_option("--canvas-h", mcfg.canvas_h, "matchpyramid canvas height");
    sub_train->add_option("--canvas-w", mcfg.canvas_w, "matchpyramid canvas width");
    sub_train->add_option("--grid-h", mcfg.grid_h, "matchpyramid pooled grid height");
    sub_train->add_option("--grid-w", mcfg.grid_w, "matchpyramid pooled grid width");
    sub_train->add_option("--out-dir", train_out, "checkpoint output directory");

    // rerank
    auto* sub_rerank = app.add_subcommand("rerank", "neurally re-rank a pre-selected run");
    std::string rr_checkpoint, rr_mode = "engara", rr_component = "title", rr_run, rr_out;
    std::size_t rr_qmax = 150, rr_dmax = 400;
    double rr_rrfk = 10.0;
    add_data_flags(sub_rerank, true);
    sub_rerank->add_option("--checkpoint", rr_checkpoint, "model checkpoint")->required();
    sub_rerank->add_option("--mode", rr_mode, "engara|fullara");
    sub_rerank->add_option("--component", rr_component, "component of the input run");
    sub_rerank->add_option("--run", rr_run, "input run file (BM25 pool)")->required();
    sub_rerank->add_option("--q-max", rr_qmax, "query token cap");
    sub_rerank->add_option("--d-max", rr_dmax, "doc token cap");
    sub_rerank->add_option("--rrf-k", rr_rrfk, "k for per-example fusion");
    sub_rerank->add_option("--out", rr_out, "output run file")->required();

    // fuse
    auto* sub_fuse = app.add_subcommand("fuse", "fuse two or more run files");
    std::string fuse_method = "rrf", fuse_out;
    double fuse_k = 10.0;
    std::vector<std::string> fuse_runs;
    sub_fuse->add_option("--method", fuse_method, "rrf|combsum|combmnz|isr");
    sub_fuse->add_option("--k", fuse_k, "RRF k constant");
    sub_fuse->add_option("--out", fuse_out, "output run file (default: stdout)");
    sub_fuse->add_option("runs", fuse_runs, "input run files")->expected(-2);

    // eval
    auto* sub_eval = app.add_subcommand("eval", "evaluate a run against qrels");
    std::string eval_qrels, eval_run;
    int eval_k = 10;
    sub_eval->add_option("--qrels", eval_qrels, "qrels file")->required();
    sub_eval->add_option("--k", eval_k, "metric cutoff");
    sub_eval->add_option("run", eval_run, "run file")->required();

    // pipeline
    auto* sub_pipe = app.add_subcommand("pipeline", "run the full retrieval workflow");
    std::string pipe_config;
    sub_pipe->add_option("--config", pipe_config, "key=value config file");
    std::map<std::string, std::string> overrides;
    for (const char* key :
         {"corpus", "topics", "embeddings", "lexicon", "qrels", "checkpoint", "out_dir", "model",
          "mode", "threshold", "fusion", "rrf_k", "components", "seed", "k1", "b", "q_max",
          "d_max", "exclude_examples", "eval_k"}) {
        std::string flag = "--";
        for (const char* p = key; *p; ++p) flag += *p == '_' ? '-' : *p;
        sub_pipe->add_option_function<std::string>(
            flag, [&overrides, key](const std::string& v) { overrides[key] = v; },
            std::string("config override: ") + key);
    }

    // synth
    auto* sub_synth = app.add_subcommand("synth", "generate a synthetic bilingual dataset");
    synth::SynthSpec spec;
    std::string synth_out = "synth";
    sub_synth->add_option("--docs", spec.n_docs, "corpus size");
    sub_synth->add_option("--topics", spec.n_topics, "number of topics");
    sub_synth->add_option("--relevant", spec.n_relevant, "judged docs per topic");
    sub_synth->add_option("--examples", spec.n_examples, "example docs per topic");
    sub_synth->add_option("--dim", spec.dim, "embedding dimension");
    sub_synth->add_option("--cluster-vocab", spec.cluster_vocab, "planted words per topic");
    sub_synth->add_option("--background-vocab", spec.background_vocab, "shared vocabulary size");
    sub_synth->add_option("--len-min", spec.doc_len_min, "min doc length");
    sub_synth->add_option("--len-max", spec.doc_len_max, "max doc length");
    sub_synth->add_option("--seed", spec.seed, "rng seed");
    sub_synth->add_option("--out-dir", synth_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sub_index->parsed()) return cmd_index(index_corpus);
        if (sub_pre->parsed()) {
            return cmd_preselect(paths, pre_component, pre_threshold, pre_k1, pre_b, pre_out);
        }
        if (sub_train->parsed()) {
            return cmd_train(paths, train_arch, train_mode, train_components, train_threshold,
                             train_k1, train_b, tcfg, mcfg, train_out);
        }
        if (sub_rerank->parsed()) {
            return cmd_rerank(paths, rr_checkpoint, rr_mode, rr_component, rr_run, rr_qmax,
                              rr_dmax, rr_rrfk, rr_out);
        }
        if (sub_fuse->parsed()) return cmd_fuse(fuse_method, fuse_k, fuse_runs, fuse_out);
        if (sub_eval->parsed()) return cmd_eval(eval_qrels, eval_k, eval_run);
        if (sub_pipe->parsed()) {
            pipeline::PipelineConfig cfg;
            if (!pipe_config.empty()) cfg = pipeline::load_config(pipe_config);
            for (const auto& [key, value] : overrides) {
                pipeline::apply_setting(cfg, key, value);
            }
            return cmd_pipeline(cfg);
        }
        if (sub_synth->parsed()) return cmd_synth(spec, synth_out);
        throw ContractError("no subcommand");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
