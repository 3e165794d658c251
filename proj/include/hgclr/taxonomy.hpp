#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hgclr/error.hpp"
#include "hgclr/ops.hpp"

namespace hgclr {

// A validated, father-closed set of non-root label ids.
struct LabelSet {
    std::vector<std::int32_t> members;  // sorted, never contains the root
};

// Rooted label tree with precomputed pairwise distances and unique tree paths.
// Immutable after construction.
class Taxonomy {
  public:
    static Taxonomy load_file(const std::string& path);
    static Taxonomy parse(std::istream& in, const std::string& origin = "<taxonomy>");
    static Taxonomy from_edges(const std::vector<std::pair<std::string, std::string>>& edges);

    std::int32_t num_labels() const { return static_cast<std::int32_t>(names_.size()); }
    std::int32_t num_targets() const { return num_labels() - 1; }
    std::int32_t num_edges() const { return static_cast<std::int32_t>(edges_.size()); }
    std::int32_t root() const { return root_; }
    std::int32_t depth() const { return depth_; }
    std::int32_t max_bucket() const { return 2 * depth_; }

    const std::string& name(std::int32_t id) const;
    std::int32_t id_of(const std::string& name) const;
    std::optional<std::int32_t> find(const std::string& name) const;
    std::int32_t father(std::int32_t id) const;  // -1 for the root
    std::int32_t node_depth(std::int32_t id) const;
    const std::vector<std::pair<std::int32_t, std::int32_t>>& edges() const { return edges_; }
    std::vector<std::int32_t> children(std::int32_t id) const;

    std::int32_t distance(std::int32_t i, std::int32_t j) const;
    std::vector<std::int32_t> edge_path(std::int32_t i, std::int32_t j) const;

    // Classifier/sampler axis: non-root labels in id order.
    std::int32_t target_index(std::int32_t id) const;     // -1 for the root
    std::int32_t label_of_target(std::int32_t t) const;

    // Accepts iff every member's father (other than the root) is present.
    // The root is implicit and removed from the result.
    LabelSet validate_label_set(const std::vector<std::int32_t>& ids) const;

    // Adds missing ancestors; returns the closed set and whether anything was added.
    std::pair<std::vector<std::int32_t>, bool> close_upward(std::vector<std::int32_t> ids) const;

    GraphBiasSpec bias_spec(bool include_spatial, bool include_edge) const;

  private:
    Taxonomy() = default;
    void finalize(const std::string& origin);

    std::vector<std::string> names_;
    std::vector<std::int32_t> fathers_;  // -1 for the root
    std::vector<std::int32_t> depths_;
    std::unordered_map<std::string, std::int32_t> ids_;
    std::vector<std::pair<std::int32_t, std::int32_t>> edges_;  // (father, child)
    std::int32_t root_ = -1;
    std::int32_t depth_ = 0;

    std::vector<std::int32_t> dist_;          // k*k
    std::vector<std::int32_t> path_edges_;    // flattened
    std::vector<std::int64_t> path_offsets_;  // k*k + 1
    std::vector<std::int32_t> target_of_;
    std::vector<std::int32_t> label_of_target_;
};

}  // namespace hgclr
