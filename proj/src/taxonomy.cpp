#include "hgclr/taxonomy.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

namespace hgclr {

namespace {

std::int32_t intern(std::vector<std::string>& names, std::vector<std::int32_t>& fathers,
                    std::unordered_map<std::string, std::int32_t>& ids, const std::string& name) {
    auto it = ids.find(name);
    if (it != ids.end()) return it->second;
    const auto id = static_cast<std::int32_t>(names.size());
    names.push_back(name);
    fathers.push_back(-1);
    ids.emplace(name, id);
    return id;
}

}  // namespace

Taxonomy Taxonomy::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open taxonomy file: " + path);
    return parse(in, path);
}

Taxonomy Taxonomy::parse(std::istream& in, const std::string& origin) {
    Taxonomy t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw ParseError(origin + ":" + std::to_string(lineno) +
                             ": expected exactly one tab-separated father/child pair");
        const std::string father_name = line.substr(0, tab);
        const std::string child_name = line.substr(tab + 1);
        if (father_name == child_name)
            throw TaxonomyError(origin + ":" + std::to_string(lineno) + ": cycle: label '" +
                                child_name + "' is its own father");
        const auto f = intern(t.names_, t.fathers_, t.ids_, father_name);
        const auto c = intern(t.names_, t.fathers_, t.ids_, child_name);
        if (t.fathers_[static_cast<std::size_t>(c)] != -1) {
            if (t.fathers_[static_cast<std::size_t>(c)] == f)
                throw TaxonomyError(origin + ":" + std::to_string(lineno) + ": duplicate edge to '" +
                                    child_name + "'");
            throw TaxonomyError(origin + ":" + std::to_string(lineno) + ": label '" + child_name +
                                "' has multiple fathers ('" +
                                t.names_[static_cast<std::size_t>(
                                    t.fathers_[static_cast<std::size_t>(c)])] +
                                "' and '" + father_name + "')");
        }
        t.fathers_[static_cast<std::size_t>(c)] = f;
        t.edges_.emplace_back(f, c);
    }
    t.finalize(origin);
    return t;
}

Taxonomy Taxonomy::from_edges(const std::vector<std::pair<std::string, std::string>>& edges) {
    if (edges.empty()) {
        Taxonomy t;
        intern(t.names_, t.fathers_, t.ids_, "root");
        t.finalize("<edges>");
        return t;
    }
    std::ostringstream os;
    for (const auto& [f, c] : edges) os << f << '\t' << c << '\n';
    std::istringstream in(os.str());
    return parse(in, "<edges>");
}

void Taxonomy::finalize(const std::string& origin) {
    if (names_.empty()) throw TaxonomyError(origin + ": empty taxonomy");
    const auto k = static_cast<std::int32_t>(names_.size());

    auto root_it = ids_.find("root");
    if (root_it == ids_.end())
        throw TaxonomyError(origin + ": no label named 'root'");
    root_ = root_it->second;
    if (fathers_[static_cast<std::size_t>(root_)] != -1)
        throw TaxonomyError(origin + ": 'root' has a father and cannot be the root");

    // Father chains must reach the root without revisiting a node.
    for (std::int32_t id = 0; id < k; ++id) {
        if (id == root_) continue;
        if (fathers_[static_cast<std::size_t>(id)] == -1)
            throw TaxonomyError(origin + ": orphan label '" + names_[static_cast<std::size_t>(id)] +
                                "' (no father and not the root)");
        std::vector<std::int32_t> chain;
        std::vector<bool> on_chain(static_cast<std::size_t>(k), false);
        std::int32_t cur = id;
        while (cur != root_) {
            if (on_chain[static_cast<std::size_t>(cur)]) {
                std::string cyc;
                bool in_cycle = false;
                for (auto c : chain) {
                    if (c == cur) in_cycle = true;
                    if (in_cycle) cyc += (cyc.empty() ? "" : " -> ") + names_[static_cast<std::size_t>(c)];
                }
                cyc += " -> " + names_[static_cast<std::size_t>(cur)];
                throw TaxonomyError(origin + ": cycle: " + cyc);
            }
            on_chain[static_cast<std::size_t>(cur)] = true;
            chain.push_back(cur);
            cur = fathers_[static_cast<std::size_t>(cur)];
        }
    }

    depths_.assign(static_cast<std::size_t>(k), 0);
    depth_ = 0;
    for (std::int32_t id = 0; id < k; ++id) {
        std::int32_t d = 0, cur = id;
        while (cur != root_) {
            cur = fathers_[static_cast<std::size_t>(cur)];
            ++d;
        }
        depths_[static_cast<std::size_t>(id)] = d;
        depth_ = std::max(depth_, d);
    }

    // Undirected adjacency with edge ids.
    std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> adj(static_cast<std::size_t>(k));
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        adj[static_cast<std::size_t>(edges_[e].first)].emplace_back(edges_[e].second,
                                                                    static_cast<std::int32_t>(e));
        adj[static_cast<std::size_t>(edges_[e].second)].emplace_back(edges_[e].first,
                                                                     static_cast<std::int32_t>(e));
    }

    // All-pairs shortest paths by BFS from every node; unique tree paths are
    // reconstructed from BFS parent pointers.
    dist_.assign(static_cast<std::size_t>(k) * k, -1);
    path_offsets_.assign(static_cast<std::size_t>(k) * k + 1, 0);
    std::vector<std::vector<std::int32_t>> paths(static_cast<std::size_t>(k) * k);
    std::vector<std::int32_t> par_node(static_cast<std::size_t>(k));
    std::vector<std::int32_t> par_edge(static_cast<std::size_t>(k));
    for (std::int32_t s = 0; s < k; ++s) {
        std::fill(par_node.begin(), par_node.end(), -2);
        par_node[static_cast<std::size_t>(s)] = -1;
        std::deque<std::int32_t> q{s};
        dist_[static_cast<std::size_t>(s) * k + s] = 0;
        while (!q.empty()) {
            const auto u = q.front();
            q.pop_front();
            for (const auto& [v, e] : adj[static_cast<std::size_t>(u)]) {
                if (par_node[static_cast<std::size_t>(v)] != -2) continue;
                par_node[static_cast<std::size_t>(v)] = u;
                par_edge[static_cast<std::size_t>(v)] = e;
                dist_[static_cast<std::size_t>(s) * k + v] =
                    dist_[static_cast<std::size_t>(s) * k + u] + 1;
                q.push_back(v);
            }
        }
        for (std::int32_t v = 0; v < k; ++v) {
            if (dist_[static_cast<std::size_t>(s) * k + v] < 0)
                throw TaxonomyError(origin + ": label '" + names_[static_cast<std::size_t>(v)] +
                                    "' unreachable from '" + names_[static_cast<std::size_t>(s)] + "'");
            auto& p = paths[static_cast<std::size_t>(s) * k + v];
            std::int32_t cur = v;
            while (cur != s) {
                p.push_back(par_edge[static_cast<std::size_t>(cur)]);
                cur = par_node[static_cast<std::size_t>(cur)];
            }
            std::reverse(p.begin(), p.end());
        }
    }
    std::int64_t total = 0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        path_offsets_[i] = total;
        total += static_cast<std::int64_t>(paths[i].size());
    }
    path_offsets_.back() = total;
    path_edges_.reserve(static_cast<std::size_t>(total));
    for (const auto& p : paths) path_edges_.insert(path_edges_.end(), p.begin(), p.end());

    target_of_.assign(static_cast<std::size_t>(k), -1);
    for (std::int32_t id = 0; id < k; ++id) {
        if (id == root_) continue;
        target_of_[static_cast<std::size_t>(id)] = static_cast<std::int32_t>(label_of_target_.size());
        label_of_target_.push_back(id);
    }
}

const std::string& Taxonomy::name(std::int32_t id) const {
    if (id < 0 || id >= num_labels()) throw InvalidArgument("taxonomy: bad label id");
    return names_[static_cast<std::size_t>(id)];
}

std::int32_t Taxonomy::id_of(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) throw TaxonomyError("unknown label name '" + name + "'");
    return it->second;
}

std::optional<std::int32_t> Taxonomy::find(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::int32_t Taxonomy::father(std::int32_t id) const {
    if (id < 0 || id >= num_labels()) throw InvalidArgument("taxonomy: bad label id");
    return fathers_[static_cast<std::size_t>(id)];
}

std::int32_t Taxonomy::node_depth(std::int32_t id) const {
    if (id < 0 || id >= num_labels()) throw InvalidArgument("taxonomy: bad label id");
    return depths_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Taxonomy::children(std::int32_t id) const {
    std::vector<std::int32_t> out;
    for (const auto& [f, c] : edges_)
        if (f == id) out.push_back(c);
    return out;
}

std::int32_t Taxonomy::distance(std::int32_t i, std::int32_t j) const {
    if (i < 0 || i >= num_labels() || j < 0 || j >= num_labels())
        throw InvalidArgument("taxonomy: bad label id in distance query");
    return dist_[static_cast<std::size_t>(i) * num_labels() + j];
}

std::vector<std::int32_t> Taxonomy::edge_path(std::int32_t i, std::int32_t j) const {
    if (i < 0 || i >= num_labels() || j < 0 || j >= num_labels())
        throw InvalidArgument("taxonomy: bad label id in path query");
    const auto idx = static_cast<std::size_t>(i) * num_labels() + j;
    return std::vector<std::int32_t>(path_edges_.begin() + path_offsets_[idx],
                                     path_edges_.begin() + path_offsets_[idx + 1]);
}

std::int32_t Taxonomy::target_index(std::int32_t id) const {
    if (id < 0 || id >= num_labels()) throw InvalidArgument("taxonomy: bad label id");
    return target_of_[static_cast<std::size_t>(id)];
}

std::int32_t Taxonomy::label_of_target(std::int32_t t) const {
    if (t < 0 || t >= num_targets()) throw InvalidArgument("taxonomy: bad target index");
    return label_of_target_[static_cast<std::size_t>(t)];
}

LabelSet Taxonomy::validate_label_set(const std::vector<std::int32_t>& ids) const {
    std::vector<std::int32_t> members;
    for (auto id : ids) {
        if (id < 0 || id >= num_labels())
            throw InvalidArgument("label set: bad label id " + std::to_string(id));
        if (id == root_) continue;  // root membership is implicit
        members.push_back(id);
    }
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    if (members.empty()) throw LabelSetError("label set: empty after removing the implicit root");
    std::vector<bool> present(static_cast<std::size_t>(num_labels()), false);
    for (auto id : members) present[static_cast<std::size_t>(id)] = true;
    for (auto id : members) {
        const auto f = fathers_[static_cast<std::size_t>(id)];
        if (f != root_ && !present[static_cast<std::size_t>(f)])
            throw LabelSetError("label set: label '" + names_[static_cast<std::size_t>(id)] +
                                "' is missing its father '" + names_[static_cast<std::size_t>(f)] + "'");
    }
    return LabelSet{std::move(members)};
}

std::pair<std::vector<std::int32_t>, bool> Taxonomy::close_upward(std::vector<std::int32_t> ids) const {
    std::vector<bool> present(static_cast<std::size_t>(num_labels()), false);
    for (auto id : ids) {
        if (id < 0 || id >= num_labels())
            throw InvalidArgument("label set: bad label id " + std::to_string(id));
        present[static_cast<std::size_t>(id)] = true;
    }
    bool changed = false;
    for (auto id : ids) {
        std::int32_t cur = id;
        while (cur != root_) {
            cur = fathers_[static_cast<std::size_t>(cur)];
            if (cur != root_ && !present[static_cast<std::size_t>(cur)]) {
                present[static_cast<std::size_t>(cur)] = true;
                changed = true;
            }
        }
    }
    std::vector<std::int32_t> out;
    for (std::int32_t id = 0; id < num_labels(); ++id)
        if (present[static_cast<std::size_t>(id)] && id != root_) out.push_back(id);
    return {out, changed};
}

GraphBiasSpec Taxonomy::bias_spec(bool include_spatial, bool include_edge) const {
    GraphBiasSpec spec;
    spec.k = num_labels();
    spec.bucket.resize(dist_.size());
    const std::int32_t cap = max_bucket();
    for (std::size_t i = 0; i < dist_.size(); ++i)
        spec.bucket[i] = std::min(dist_[i], cap);
    spec.path_edges = path_edges_;
    spec.path_offsets = path_offsets_;
    spec.include_spatial = include_spatial;
    spec.include_edge = include_edge;
    return spec;
}

}  // namespace hgclr
