#include "hgclr/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace hgclr {

namespace {

const char* kReservedNames[Vocabulary::kReserved] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[ZERO]"};

bool is_word_char(unsigned char c) {
    // Bytes >= 0x80 are kept inside tokens so UTF-8 sequences survive intact.
    return std::isalnum(c) || c >= 0x80;
}

}  // namespace

std::vector<std::string> Vocabulary::tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (is_word_char(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            if (!std::isspace(c)) out.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, std::int32_t min_freq) {
    if (texts.empty()) throw InvalidArgument("vocabulary: empty corpus");
    if (min_freq < 1) throw InvalidArgument("vocabulary: min_freq must be >= 1");
    std::map<std::string, std::int64_t> freq;
    for (const auto& t : texts)
        for (auto& tok : tokenize(t)) ++freq[tok];

    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (auto& [tok, n] : freq)
        if (n >= min_freq) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.min_freq_ = min_freq;
    for (auto* name : kReservedNames) {
        v.ids_.emplace(name, static_cast<std::int32_t>(v.tokens_.size()));
        v.tokens_.emplace_back(name);
    }
    for (auto& [tok, n] : kept) {
        v.ids_.emplace(tok, static_cast<std::int32_t>(v.tokens_.size()));
        v.tokens_.push_back(tok);
    }
    return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens_in_id_order,
                                   std::int32_t min_freq) {
    if (tokens_in_id_order.size() < kReserved)
        throw InvalidArgument("vocabulary: token list is missing reserved entries");
    for (std::int32_t i = 0; i < kReserved; ++i)
        if (tokens_in_id_order[static_cast<std::size_t>(i)] != kReservedNames[i])
            throw InvalidArgument("vocabulary: reserved token mismatch at id " + std::to_string(i));
    Vocabulary v;
    v.min_freq_ = min_freq;
    v.tokens_ = tokens_in_id_order;
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        if (!v.ids_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second)
            throw InvalidArgument("vocabulary: duplicate token '" + v.tokens_[i] + "'");
    }
    return v;
}

std::int32_t Vocabulary::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
    if (id < 0 || id >= size()) throw InvalidArgument("vocabulary: bad token id");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocabulary::encode(const std::string& text, std::int64_t max_len) const {
    if (max_len < 3) throw InvalidArgument("vocabulary: max_len must leave room for [CLS]/[SEP]");
    auto toks = tokenize(text);
    const std::size_t body = std::min(toks.size(), static_cast<std::size_t>(max_len - 2));
    std::vector<std::int32_t> ids;
    ids.reserve(body + 2);
    ids.push_back(kCls);
    for (std::size_t i = 0; i < body; ++i) ids.push_back(id(toks[i]));
    ids.push_back(kSep);
    return ids;
}

std::vector<std::int32_t> Vocabulary::name_token_ids(const std::string& name) const {
    std::vector<std::int32_t> out;
    for (auto& tok : tokenize(name)) {
        auto it = ids_.find(tok);
        if (it != ids_.end() && it->second >= kReserved) out.push_back(it->second);
    }
    return out;
}

}  // namespace hgclr
