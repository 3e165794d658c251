#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgclr/error.hpp"

namespace hgclr {

// Whitespace/punctuation tokenizer plus a frequency-cutoff token table.
// Reserved ids are fixed forever; [ZERO] is the all-zeros embedding slot used
// by positive-sample construction and never appears in encoded text.
class Vocabulary {
  public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnk = 1;
    static constexpr std::int32_t kCls = 2;
    static constexpr std::int32_t kSep = 3;
    static constexpr std::int32_t kZero = 4;
    static constexpr std::int32_t kReserved = 5;

    static std::vector<std::string> tokenize(const std::string& text);

    static Vocabulary build(const std::vector<std::string>& texts, std::int32_t min_freq = 1);
    static Vocabulary from_tokens(const std::vector<std::string>& tokens_in_id_order,
                                  std::int32_t min_freq);

    std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }
    std::int32_t min_freq() const { return min_freq_; }

    std::int32_t id(const std::string& token) const;  // kUnk when absent
    bool contains(const std::string& token) const { return ids_.count(token) > 0; }
    const std::string& token(std::int32_t id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    // [CLS] t1 ... tn [SEP], truncated so the result fits max_len.
    std::vector<std::int32_t> encode(const std::string& text, std::int64_t max_len) const;

    // Token ids of a label name; tokens not in the vocabulary are dropped so
    // name-less labels degrade to an empty id list.
    std::vector<std::int32_t> name_token_ids(const std::string& name) const;

  private:
    Vocabulary() = default;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> ids_;
    std::int32_t min_freq_ = 1;
};

}  // namespace hgclr
