#include "hgclr/config.hpp"

#include <json.hpp>

namespace hgclr {

PairStrategy pair_strategy_from_string(const std::string& s) {
    if (s == "hierarchy") return PairStrategy::Hierarchy;
    if (s == "random_mask") return PairStrategy::RandomMask;
    if (s == "dropout") return PairStrategy::Dropout;
    if (s == "none") return PairStrategy::None;
    throw InvalidArgument("unknown pair strategy '" + s +
                          "' (expected hierarchy|random_mask|dropout|none)");
}

std::string to_string(PairStrategy s) {
    switch (s) {
        case PairStrategy::Hierarchy: return "hierarchy";
        case PairStrategy::RandomMask: return "random_mask";
        case PairStrategy::Dropout: return "dropout";
        case PairStrategy::None: return "none";
    }
    return "hierarchy";
}

void TrainConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("config: gamma must be in (0,1)");
    if (lambda < 0.0) throw InvalidArgument("config: lambda must be >= 0");
    if (!(tau > 0.0)) throw InvalidArgument("config: tau must be positive");
    if (!(gumbel_temperature > 0.0)) throw InvalidArgument("config: gumbel temperature must be positive");
    if (!(lr > 0.0)) throw InvalidArgument("config: lr must be positive");
    if (batch_size < 1 || max_epochs < 1 || patience < 0)
        throw InvalidArgument("config: batch_size/max_epochs/patience out of range");
    if (hidden < 1 || layers < 1 || heads < 1 || max_len < 3 || ffn_mult < 1 || graph_layers < 1)
        throw InvalidArgument("config: architecture sizes out of range");
    if (hidden % heads != 0) throw InvalidArgument("config: hidden must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("config: dropout must be in [0,1)");
    if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("config: threshold must be in (0,1)");
    if (keep_prob <= 0.0 || keep_prob > 1.0) throw InvalidArgument("config: keep_prob must be in (0,1]");
    if (min_freq < 1) throw InvalidArgument("config: min_freq must be >= 1");
    if (eval_batch < 1) throw InvalidArgument("config: eval_batch must be >= 1");
}

std::string TrainConfig::to_json() const {
    nlohmann::json j;
    j["gamma"] = gamma;
    j["lambda"] = lambda;
    j["tau"] = tau;
    j["gumbel_temperature"] = gumbel_temperature;
    j["mean_reduction"] = mean_reduction;
    j["lr"] = lr;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["adam_eps"] = adam_eps;
    j["batch_size"] = batch_size;
    j["max_epochs"] = max_epochs;
    j["patience"] = patience;
    j["seed"] = seed;
    j["hidden"] = hidden;
    j["layers"] = layers;
    j["heads"] = heads;
    j["max_len"] = max_len;
    j["ffn_mult"] = ffn_mult;
    j["dropout"] = dropout;
    j["graph_layers"] = graph_layers;
    j["min_freq"] = min_freq;
    j["pair_strategy"] = to_string(pair_strategy);
    j["no_graph"] = no_graph;
    j["no_name_emb"] = no_name_emb;
    j["no_spatial"] = no_spatial;
    j["no_edge"] = no_edge;
    j["keep_prob"] = keep_prob;
    j["threshold"] = threshold;
    j["eval_batch"] = eval_batch;
    j["dump_positives"] = dump_positives;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& json_text, const TrainConfig& base) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("config: expected a JSON object");
    TrainConfig c = base;
    try {
        if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
        if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
        if (j.contains("tau")) c.tau = j["tau"].get<double>();
        if (j.contains("gumbel_temperature")) c.gumbel_temperature = j["gumbel_temperature"].get<double>();
        if (j.contains("mean_reduction")) c.mean_reduction = j["mean_reduction"].get<bool>();
        if (j.contains("lr")) c.lr = j["lr"].get<double>();
        if (j.contains("adam_beta1")) c.adam_beta1 = j["adam_beta1"].get<double>();
        if (j.contains("adam_beta2")) c.adam_beta2 = j["adam_beta2"].get<double>();
        if (j.contains("adam_eps")) c.adam_eps = j["adam_eps"].get<double>();
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::int64_t>();
        if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<std::int64_t>();
        if (j.contains("patience")) c.patience = j["patience"].get<std::int64_t>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("hidden")) c.hidden = j["hidden"].get<std::int64_t>();
        if (j.contains("layers")) c.layers = j["layers"].get<std::int64_t>();
        if (j.contains("heads")) c.heads = j["heads"].get<std::int64_t>();
        if (j.contains("max_len")) c.max_len = j["max_len"].get<std::int64_t>();
        if (j.contains("ffn_mult")) c.ffn_mult = j["ffn_mult"].get<std::int64_t>();
        if (j.contains("dropout")) c.dropout = j["dropout"].get<double>();
        if (j.contains("graph_layers")) c.graph_layers = j["graph_layers"].get<std::int64_t>();
        if (j.contains("min_freq")) c.min_freq = j["min_freq"].get<std::int64_t>();
        if (j.contains("pair_strategy"))
            c.pair_strategy = pair_strategy_from_string(j["pair_strategy"].get<std::string>());
        if (j.contains("no_graph")) c.no_graph = j["no_graph"].get<bool>();
        if (j.contains("no_name_emb")) c.no_name_emb = j["no_name_emb"].get<bool>();
        if (j.contains("no_spatial")) c.no_spatial = j["no_spatial"].get<bool>();
        if (j.contains("no_edge")) c.no_edge = j["no_edge"].get<bool>();
        if (j.contains("keep_prob")) c.keep_prob = j["keep_prob"].get<double>();
        if (j.contains("threshold")) c.threshold = j["threshold"].get<double>();
        if (j.contains("eval_batch")) c.eval_batch = j["eval_batch"].get<std::int64_t>();
        if (j.contains("dump_positives")) c.dump_positives = j["dump_positives"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: bad field type: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace hgclr
