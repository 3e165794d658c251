#include "hgclr/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hgclr/rng.hpp"

namespace hgclr {

namespace {

struct TreeLayout {
    std::vector<std::string> names;                        // per label, "root" first
    std::vector<std::int32_t> fathers;                     // index into names
    std::vector<std::vector<std::int32_t>> leaf_paths;     // per leaf, non-root path
    std::vector<std::pair<std::string, std::string>> edges;
};

TreeLayout build_tree(const SynthSpec& spec) {
    if (spec.depth < 1 || spec.branching < 1 || spec.branching > 9)
        throw InvalidArgument("synth: depth >= 1 and 1 <= branching <= 9 required");
    TreeLayout t;
    t.names.push_back("root");
    t.fathers.push_back(-1);
    std::vector<std::int32_t> frontier{0};
    for (std::int32_t level = 1; level <= spec.depth; ++level) {
        std::vector<std::int32_t> next;
        for (auto f : frontier) {
            for (std::int32_t c = 0; c < spec.branching; ++c) {
                const auto id = static_cast<std::int32_t>(t.names.size());
                std::string code = f == 0 ? "cat" + std::to_string(c)
                                          : t.names[static_cast<std::size_t>(f)] + std::to_string(c);
                t.names.push_back(code);
                t.fathers.push_back(f);
                t.edges.emplace_back(t.names[static_cast<std::size_t>(f)], code);
                next.push_back(id);
            }
        }
        frontier = std::move(next);
    }
    for (auto leaf : frontier) {
        std::vector<std::int32_t> path;
        for (std::int32_t cur = leaf; cur != 0; cur = t.fathers[static_cast<std::size_t>(cur)])
            path.push_back(cur);
        std::reverse(path.begin(), path.end());
        t.leaf_paths.push_back(std::move(path));
    }
    return t;
}

}  // namespace

SynthCorpus generate_synthetic_corpus(const SynthSpec& spec) {
    if (spec.keywords_per_label < 1 || spec.doc_len < 1 || spec.noise_vocab < 1)
        throw InvalidArgument("synth: keywords_per_label, doc_len and noise_vocab must be positive");
    if (spec.noise_ratio < 0.0 || spec.noise_ratio > 1.0)
        throw InvalidArgument("synth: noise_ratio must be in [0,1]");

    const auto tree = build_tree(spec);
    SynthCorpus out;
    out.taxonomy_edges = tree.edges;

    // Keyword 0 of every label is the label name itself.
    std::vector<std::vector<std::string>> keywords(tree.names.size());
    for (std::size_t id = 1; id < tree.names.size(); ++id) {
        keywords[id].push_back(tree.names[id]);
        for (std::int32_t j = 1; j < spec.keywords_per_label; ++j)
            keywords[id].push_back(tree.names[id] + "kw" + std::to_string(j));
        for (const auto& kw : keywords[id]) out.keyword_to_label.emplace(kw, tree.names[id]);
    }

    const auto n_leaves = static_cast<std::int32_t>(tree.leaf_paths.size());
    const std::int32_t n_docs =
        spec.n_docs > 0 ? spec.n_docs : spec.docs_per_leaf * n_leaves;
    const auto n_noise =
        static_cast<std::int32_t>(std::lround(spec.noise_ratio * spec.doc_len));

    RngStream rng = RngStream(spec.seed, RngStream::kData).fork(spec.split);
    out.docs.reserve(static_cast<std::size_t>(n_docs));
    for (std::int32_t d = 0; d < n_docs; ++d) {
        const auto& path = tree.leaf_paths[static_cast<std::size_t>(d % n_leaves)];
        std::vector<std::string> toks;
        toks.reserve(static_cast<std::size_t>(spec.doc_len));
        for (std::int32_t i = 0; i < spec.doc_len - n_noise; ++i) {
            const auto label = path[rng.below(path.size())];
            const auto& kws = keywords[static_cast<std::size_t>(label)];
            toks.push_back(kws[rng.below(kws.size())]);
        }
        for (std::int32_t i = 0; i < n_noise; ++i)
            toks.push_back("noise" + std::to_string(rng.below(static_cast<std::uint64_t>(spec.noise_vocab))));
        for (std::size_t i = toks.size(); i > 1; --i)
            std::swap(toks[i - 1], toks[rng.below(i)]);

        SynthDoc doc;
        for (auto label : path) doc.label_names.push_back(tree.names[static_cast<std::size_t>(label)]);
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i) doc.text.push_back(' ');
            doc.text += toks[i];
        }
        out.docs.push_back(std::move(doc));
    }
    return out;
}

std::string synth_doc_json(const SynthDoc& doc) {
    nlohmann::json j;
    j["text"] = doc.text;
    j["labels"] = doc.label_names;
    return j.dump();
}

void write_synthetic_dataset(const std::string& dir, SynthSpec spec, std::int32_t train_docs,
                             std::int32_t dev_docs, std::int32_t test_docs) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    auto write_split = [&](const char* name, std::int32_t docs, std::uint64_t split) {
        if (docs <= 0) return SynthCorpus{};
        SynthSpec s = spec;
        s.n_docs = docs;
        s.split = split;
        auto corpus = generate_synthetic_corpus(s);
        std::ofstream f(fs::path(dir) / name);
        if (!f) throw IoError("cannot write " + (fs::path(dir) / name).string());
        for (const auto& d : corpus.docs) f << synth_doc_json(d) << '\n';
        return corpus;
    };

    auto train = write_split("train.jsonl", train_docs, 0);
    write_split("dev.jsonl", dev_docs, 1);
    write_split("test.jsonl", test_docs, 2);
    if (train.docs.empty()) throw InvalidArgument("synth: train_docs must be positive");

    {
        std::ofstream f(fs::path(dir) / "taxonomy.tsv");
        if (!f) throw IoError("cannot write taxonomy.tsv");
        f << "# synthetic keyword-bag taxonomy\n";
        for (const auto& [father, child] : train.taxonomy_edges) f << father << '\t' << child << '\n';
    }
    {
        std::ofstream f(fs::path(dir) / "keywords.tsv");
        if (!f) throw IoError("cannot write keywords.tsv");
        std::vector<std::pair<std::string, std::string>> rows(train.keyword_to_label.begin(),
                                                              train.keyword_to_label.end());
        std::sort(rows.begin(), rows.end());
        for (const auto& [kw, label] : rows) f << kw << '\t' << label << '\n';
    }
    {
        nlohmann::json j;
        j["depth"] = spec.depth;
        j["branching"] = spec.branching;
        j["keywords_per_label"] = spec.keywords_per_label;
        j["noise_ratio"] = spec.noise_ratio;
        j["doc_len"] = spec.doc_len;
        j["noise_vocab"] = spec.noise_vocab;
        j["seed"] = spec.seed;
        j["train_docs"] = train_docs;
        j["dev_docs"] = dev_docs;
        j["test_docs"] = test_docs;
        std::ofstream f(std::filesystem::path(dir) / "synth.json");
        f << j.dump(2) << '\n';
    }
}

}  // namespace hgclr
