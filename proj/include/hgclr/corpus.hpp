#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "hgclr/taxonomy.hpp"
#include "hgclr/vocab.hpp"

namespace hgclr {

struct Document {
    std::string text;
    std::vector<std::string> label_names;
    LabelSet labels;                      // validated against the taxonomy
    std::vector<std::int32_t> token_ids;  // filled by tokenize_corpus
};

struct Corpus {
    std::vector<Document> docs;
    std::vector<std::string> warnings;  // e.g. auto-completed father closures
};

// Record-per-line JSON: {"text": "...", "labels": ["name", ...]}.
// Label names resolve against the taxonomy; missing ancestors are added with
// a warning, then the closed set is validated.
Corpus load_corpus(const std::string& path, const Taxonomy& tax);
Corpus load_corpus_stream(std::istream& in, const Taxonomy& tax,
                          const std::string& origin = "<corpus>");

void tokenize_corpus(Corpus& corpus, const Vocabulary& vocab, std::int64_t max_len);

// One padded training batch. `target_multihot` covers the taxonomy's
// non-root target axis; `special_mask` marks [CLS]/[SEP] positions.
struct TokenBatch {
    std::int64_t batch = 0;
    std::int64_t seq_len = 0;
    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> pad_mask;      // 1 = real token
    std::vector<std::uint8_t> special_mask;  // 1 = [CLS] or [SEP]
    std::vector<std::uint8_t> target_multihot;
};

TokenBatch make_batch(const std::vector<const Document*>& docs, const Taxonomy& tax);

}  // namespace hgclr
