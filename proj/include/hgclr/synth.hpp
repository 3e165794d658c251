#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hgclr/error.hpp"

namespace hgclr {

// Keyword-bag corpus over a uniform tree. Every label owns a disjoint keyword
// set whose first keyword is the label's own name, so name embeddings resolve
// to real corpus tokens. Documents mix path keywords with noise tokens.
struct SynthSpec {
    std::int32_t depth = 2;
    std::int32_t branching = 3;  // capped at 9 so label codes stay single tokens
    std::int32_t docs_per_leaf = 60;
    std::int32_t n_docs = 0;  // explicit override; 0 = docs_per_leaf * leaves
    std::int32_t keywords_per_label = 5;
    double noise_ratio = 0.5;
    std::int32_t doc_len = 24;
    std::int32_t noise_vocab = 100;
    std::uint64_t seed = 0;
    std::uint64_t split = 0;  // train/dev/test substream selector
};

struct SynthDoc {
    std::string text;
    std::vector<std::string> label_names;  // full root path, father-closed
};

struct SynthCorpus {
    std::vector<std::pair<std::string, std::string>> taxonomy_edges;
    std::vector<SynthDoc> docs;
    std::unordered_map<std::string, std::string> keyword_to_label;
};

SynthCorpus generate_synthetic_corpus(const SynthSpec& spec);

// Writes taxonomy.tsv, train.jsonl, dev.jsonl, test.jsonl, keywords.tsv and
// synth.json under dir (created if missing).
void write_synthetic_dataset(const std::string& dir, SynthSpec spec, std::int32_t train_docs,
                             std::int32_t dev_docs, std::int32_t test_docs);

std::string synth_doc_json(const SynthDoc& doc);

}  // namespace hgclr
