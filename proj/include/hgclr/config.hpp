#pragma once

#include <cstdint>
#include <string>

#include "hgclr/error.hpp"

namespace hgclr {

enum class PairStrategy { Hierarchy, RandomMask, Dropout, None };

PairStrategy pair_strategy_from_string(const std::string& s);
std::string to_string(PairStrategy s);

struct TrainConfig {
    // objective
    double gamma = 0.02;  // 0.005 is the multi-path preset
    double lambda = 0.1;  // 0.3 is the NYT-style preset
    double tau = 1.0;
    double gumbel_temperature = 1.0;
    bool mean_reduction = false;

    // optimization
    double lr = 1e-3;  // 3e-5 preset targets pretrained-scale encoders
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::int64_t batch_size = 12;
    std::int64_t max_epochs = 30;
    std::int64_t patience = 6;
    std::uint64_t seed = 0;

    // architecture
    std::int64_t hidden = 64;
    std::int64_t layers = 2;
    std::int64_t heads = 4;
    std::int64_t max_len = 128;
    std::int64_t ffn_mult = 4;
    double dropout = 0.1;
    std::int64_t graph_layers = 1;
    std::int64_t min_freq = 1;

    // pairing / ablations
    PairStrategy pair_strategy = PairStrategy::Hierarchy;
    bool no_graph = false;
    bool no_name_emb = false;
    bool no_spatial = false;
    bool no_edge = false;
    double keep_prob = 0.5;  // random-mask strategy

    // evaluation / bookkeeping
    double threshold = 0.5;
    std::int64_t eval_batch = 64;
    std::string dump_positives;  // path; empty disables

    void validate() const;
    std::string to_json() const;
    // Missing keys keep the defaults of *this.
    static TrainConfig from_json(const std::string& json_text, const TrainConfig& base = {});
};

}  // namespace hgclr
