#include "hgclr/corpus.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hgclr {

Corpus load_corpus(const std::string& path, const Taxonomy& tax) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    return load_corpus_stream(in, tax, path);
}

Corpus load_corpus_stream(std::istream& in, const Taxonomy& tax, const std::string& origin) {
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(origin + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
        }
        if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string() ||
            !rec.contains("labels") || !rec["labels"].is_array())
            throw ParseError(origin + ":" + std::to_string(lineno) +
                             ": record must be {\"text\": string, \"labels\": [names]}");

        Document doc;
        doc.text = rec["text"].get<std::string>();
        std::vector<std::int32_t> ids;
        for (const auto& l : rec["labels"]) {
            if (!l.is_string())
                throw ParseError(origin + ":" + std::to_string(lineno) + ": label names must be strings");
            const auto name = l.get<std::string>();
            auto id = tax.find(name);
            if (!id)
                throw TaxonomyError(origin + ":" + std::to_string(lineno) + ": unknown label name '" +
                                    name + "'");
            ids.push_back(*id);
            doc.label_names.push_back(name);
        }
        auto [closed, changed] = tax.close_upward(ids);
        if (changed)
            corpus.warnings.push_back(origin + ":" + std::to_string(lineno) +
                                      ": label set completed to its root path");
        doc.labels = tax.validate_label_set(closed);
        corpus.docs.push_back(std::move(doc));
    }
    if (corpus.docs.empty()) throw IoError(origin + ": empty corpus");
    return corpus;
}

void tokenize_corpus(Corpus& corpus, const Vocabulary& vocab, std::int64_t max_len) {
    for (auto& doc : corpus.docs) doc.token_ids = vocab.encode(doc.text, max_len);
}

TokenBatch make_batch(const std::vector<const Document*>& docs, const Taxonomy& tax) {
    if (docs.empty()) throw InvalidArgument("make_batch: empty batch");
    TokenBatch b;
    b.batch = static_cast<std::int64_t>(docs.size());
    for (const auto* d : docs) {
        if (d->token_ids.empty()) throw InvalidArgument("make_batch: document not tokenized");
        b.seq_len = std::max(b.seq_len, static_cast<std::int64_t>(d->token_ids.size()));
    }
    const auto n = b.seq_len;
    b.ids.assign(static_cast<std::size_t>(b.batch * n), Vocabulary::kPad);
    b.pad_mask.assign(static_cast<std::size_t>(b.batch * n), 0);
    b.special_mask.assign(static_cast<std::size_t>(b.batch * n), 0);
    b.target_multihot.assign(static_cast<std::size_t>(b.batch * tax.num_targets()), 0);
    for (std::int64_t r = 0; r < b.batch; ++r) {
        const auto& ids = docs[static_cast<std::size_t>(r)]->token_ids;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            b.ids[static_cast<std::size_t>(r * n) + i] = ids[i];
            b.pad_mask[static_cast<std::size_t>(r * n) + i] = 1;
        }
        b.special_mask[static_cast<std::size_t>(r * n)] = 1;  // [CLS]
        b.special_mask[static_cast<std::size_t>(r * n) + ids.size() - 1] = 1;  // [SEP]
        for (auto id : docs[static_cast<std::size_t>(r)]->labels.members)
            b.target_multihot[static_cast<std::size_t>(r * tax.num_targets() + tax.target_index(id))] = 1;
    }
    return b;
}

}  // namespace hgclr
