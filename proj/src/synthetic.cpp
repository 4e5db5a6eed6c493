#include "xlir/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xlir/common.hpp"

namespace xlir::synth {

namespace {

std::string eng_word(int w) { return "eng" + std::to_string(w); }
std::string ara_word(int w) { return "ara" + std::to_string(w); }

std::string doc_id(int i, int width) {
    std::string n = std::to_string(i + 1);
    return "d" + std::string(width > static_cast<int>(n.size()) ? width - n.size() : 0, '0') + n;
}

std::string topic_id(int t) {
    std::string n = std::to_string(t + 1);
    return "T" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

std::string num17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("make_synthetic_corpus: cannot write " + path);
    return out;
}

void validate(const SynthSpec& s) {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw ContractError("make_synthetic_corpus: " + what);
    };
    need(s.n_topics >= 1, "n_topics must be at least 1");
    need(s.n_relevant >= 1, "n_relevant must be at least 1");
    need(s.n_examples >= 1, "n_examples must be at least 1");
    need(s.dim >= 2, "dim must be at least 2");
    need(s.cluster_vocab >= 8, "cluster_vocab must be at least 8 (component text sampling)");
    need(s.background_vocab >= 8, "background_vocab must be at least 8");
    need(s.doc_len_min >= 1 && s.doc_len_max >= s.doc_len_min,
         "doc length bounds must satisfy 1 <= min <= max");
    const int planted = s.n_topics * (s.n_relevant + s.n_examples);
    need(s.n_docs >= planted + 51,
         "n_docs must be at least n_topics*(n_relevant+n_examples) + 51 = " +
             std::to_string(planted + 51) + " so every topic keeps a trainable negative pool");
}

}  // namespace

SynthPaths make_synthetic_corpus(const SynthSpec& spec, const std::string& out_dir) {
    validate(spec);
    std::filesystem::create_directories(out_dir);
    Rng rng(spec.seed);

    const int n_words = spec.n_topics * spec.cluster_vocab + spec.background_vocab;
    const int bg_base = spec.n_topics * spec.cluster_vocab;
    const int id_width = static_cast<int>(std::to_string(spec.n_docs).size());

    SynthPaths paths;
    paths.corpus = out_dir + "/corpus.jsonl";
    paths.topics = out_dir + "/topics.json";
    paths.lexicon = out_dir + "/lexicon.tsv";
    paths.embeddings = out_dir + "/embeddings.txt";
    paths.qrels = out_dir + "/qrels.txt";

    // Embeddings: per word, a unit base vector for the English side and a
    // lightly perturbed copy for the Arabic side (cosine well above 0.9).
    std::vector<std::vector<double>> en_vecs(n_words), ar_vecs(n_words);
    for (int w = 0; w < n_words; ++w) {
        std::vector<double> base(spec.dim);
        double norm = 0;
        do {
            norm = 0;
            for (double& x : base) {
                x = rng.uniform(-1.0, 1.0);
                norm += x * x;
            }
        } while (norm < 1e-8);
        norm = std::sqrt(norm);
        for (double& x : base) x /= norm;
        en_vecs[w] = base;
        std::vector<double> shifted(spec.dim);
        do {
            for (int c = 0; c < spec.dim; ++c) shifted[c] = base[c] + rng.uniform(-0.01, 0.01);
        } while (cosine(base, shifted) < 0.9);
        ar_vecs[w] = shifted;
    }
    {
        auto out = open_out(paths.embeddings);
        out << (2 * n_words) << ' ' << spec.dim << '\n';
        for (int w = 0; w < n_words; ++w) {
            out << "en:" << eng_word(w);
            for (double x : en_vecs[w]) out << ' ' << num17(x);
            out << '\n';
        }
        for (int w = 0; w < n_words; ++w) {
            out << "ar:" << ara_word(w);
            for (double x : ar_vecs[w]) out << ' ' << num17(x);
            out << '\n';
        }
    }

    {
        auto out = open_out(paths.lexicon);
        for (int w = 0; w < n_words; ++w) out << eng_word(w) << '\t' << ara_word(w) << '\n';
    }

    // Docs: per topic, n_relevant judged docs then n_examples example docs,
    // all planted with that topic's cluster; the rest is background noise
    // with an occasional leaked cluster token as a hard negative.
    const int planted_per_topic = spec.n_relevant + spec.n_examples;
    const int n_planted = spec.n_topics * planted_per_topic;
    auto cluster_word = [&](int topic, int j) { return topic * spec.cluster_vocab + j; };
    auto draw_background = [&]() {
        return bg_base + static_cast<int>(rng.uniform_int(spec.background_vocab));
    };
    {
        auto out = open_out(paths.corpus);
        for (int i = 0; i < spec.n_docs; ++i) {
            const int len = spec.doc_len_min +
                            static_cast<int>(rng.uniform_int(
                                static_cast<std::uint64_t>(spec.doc_len_max - spec.doc_len_min) +
                                1));
            std::vector<int> words(len);
            if (i < n_planted) {
                const int topic = i / planted_per_topic;
                for (int& w : words) {
                    w = rng.uniform() < 0.6
                            ? cluster_word(topic,
                                           static_cast<int>(rng.uniform_int(spec.cluster_vocab)))
                            : draw_background();
                }
            } else {
                for (int& w : words) w = draw_background();
                if (rng.uniform() < 0.05) {
                    const int topic = static_cast<int>(rng.uniform_int(spec.n_topics));
                    const int leaks = 1 + static_cast<int>(rng.uniform_int(3));
                    for (int l = 0; l < leaks; ++l) {
                        words[rng.uniform_int(words.size())] = cluster_word(
                            topic, static_cast<int>(rng.uniform_int(spec.cluster_vocab)));
                    }
                }
            }
            std::string text;
            for (std::size_t t = 0; t < words.size(); ++t) {
                if (t) text += ' ';
                text += ara_word(words[t]);
            }
            nlohmann::json line;
            line["id"] = doc_id(i, id_width);
            line["text"] = text;
            out << line.dump() << '\n';
        }
    }

    // Topic components sample distinct cluster words (plus background filler)
    // so the four components give fusion different views of the cluster.
    auto sample_words = [&](int topic, int n_cluster, int n_background) {
        std::string text;
        for (std::size_t j : rng.sample_indices(spec.cluster_vocab, n_cluster)) {
            if (!text.empty()) text += ' ';
            text += eng_word(cluster_word(topic, static_cast<int>(j)));
        }
        for (int j = 0; j < n_background; ++j) {
            if (!text.empty()) text += ' ';
            text += eng_word(draw_background());
        }
        return text;
    };
    {
        nlohmann::json topics = nlohmann::json::array();
        for (int t = 0; t < spec.n_topics; ++t) {
            nlohmann::json topic;
            topic["id"] = topic_id(t);
            topic["title"] = sample_words(t, 3, 1);
            topic["background"] = sample_words(t, 8, 4);
            topic["event_knowledge"] = sample_words(t, 6, 3);
            nlohmann::json examples = nlohmann::json::array();
            for (int e = 0; e < spec.n_examples; ++e) {
                examples.push_back(doc_id(t * planted_per_topic + spec.n_relevant + e, id_width));
            }
            topic["example_doc_ids"] = std::move(examples);
            topics.push_back(std::move(topic));
        }
        auto out = open_out(paths.topics);
        out << topics.dump(2) << '\n';
    }

    {
        auto out = open_out(paths.qrels);
        for (int t = 0; t < spec.n_topics; ++t) {
            for (int r = 0; r < spec.n_relevant; ++r) {
                out << topic_id(t) << " 0 " << doc_id(t * planted_per_topic + r, id_width)
                    << " 1\n";
            }
            // A few judged-irrelevant noise docs to exercise grade-0 entries.
            const std::size_t n_noise = static_cast<std::size_t>(spec.n_docs - n_planted);
            for (std::size_t j : rng.sample_indices(n_noise, std::min<std::size_t>(5, n_noise))) {
                out << topic_id(t) << " 0 " << doc_id(n_planted + static_cast<int>(j), id_width)
                    << " 0\n";
            }
        }
    }

    return paths;
}

}  // namespace xlir::synth
