#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "hgclr/rng.hpp"
#include "hgclr/taxonomy.hpp"

using namespace hgclr;

namespace {

Taxonomy toy() {
    return Taxonomy::from_edges({{"root", "A"}, {"root", "B"}, {"A", "A1"}});
}

// Independent oracle: Floyd–Warshall over the undirected edge list.
std::vector<int> floyd_warshall(int k, const std::vector<std::pair<std::int32_t, std::int32_t>>& edges) {
    const int INF = 1 << 20;
    std::vector<int> d(static_cast<std::size_t>(k) * k, INF);
    for (int i = 0; i < k; ++i) d[static_cast<std::size_t>(i) * k + i] = 0;
    for (auto [f, c] : edges) {
        d[static_cast<std::size_t>(f) * k + c] = 1;
        d[static_cast<std::size_t>(c) * k + f] = 1;
    }
    for (int m = 0; m < k; ++m)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                d[static_cast<std::size_t>(i) * k + j] =
                    std::min(d[static_cast<std::size_t>(i) * k + j],
                             d[static_cast<std::size_t>(i) * k + m] + d[static_cast<std::size_t>(m) * k + j]);
    return d;
}

// Random tree over k nodes: each non-root attaches to a random earlier node.
Taxonomy random_tree(int k, RngStream& rng, std::vector<std::pair<std::int32_t, std::int32_t>>* out_edges) {
    std::vector<std::pair<std::string, std::string>> edges;
    auto name = [](int i) { return i == 0 ? std::string("root") : "n" + std::to_string(i); };
    std::vector<std::pair<std::int32_t, std::int32_t>> raw;
    for (int i = 1; i < k; ++i) {
        const int f = static_cast<int>(rng.below(static_cast<std::uint64_t>(i)));
        edges.emplace_back(name(f), name(i));
    }
    auto t = Taxonomy::from_edges(edges);
    if (out_edges) {
        for (const auto& [f, c] : edges) raw.emplace_back(t.id_of(f), t.id_of(c));
        *out_edges = raw;
    }
    return t;
}

}  // namespace

TEST_CASE("toy tree loads with expected shape") {
    auto t = toy();
    CHECK(t.num_labels() == 4);
    CHECK(t.depth() == 2);
    CHECK(t.num_targets() == 3);
    CHECK(t.name(t.root()) == "root");
    CHECK(t.father(t.id_of("A1")) == t.id_of("A"));
    CHECK(t.father(t.root()) == -1);
}

TEST_CASE("wos-shaped taxonomy: 141 labels, depth 2") {
    std::vector<std::pair<std::string, std::string>> edges;
    int child = 0;
    for (int p = 0; p < 7; ++p) {
        edges.emplace_back("root", "domain" + std::to_string(p));
        for (int c = 0; c < 19; ++c)
            edges.emplace_back("domain" + std::to_string(p), "area" + std::to_string(child++));
    }
    CHECK(child == 133);
    auto t = Taxonomy::from_edges(edges);
    CHECK(t.num_labels() == 141);
    CHECK(t.depth() == 2);
}

TEST_CASE("malformed taxonomies are rejected with informative errors") {
    {
        std::istringstream in("A\tA\n");
        CHECK_THROWS_WITH_AS(Taxonomy::parse(in), doctest::Contains("cycle"), TaxonomyError);
    }
    {
        std::istringstream in("root\tA\nroot\tB\nB\tA\n");
        CHECK_THROWS_WITH_AS(Taxonomy::parse(in), doctest::Contains("multiple fathers"), TaxonomyError);
    }
    {
        std::istringstream in("root\tA\nX\tY\nY\tX\n");
        CHECK_THROWS_AS(Taxonomy::parse(in), TaxonomyError);  // cycle disconnected from root
    }
    {
        std::istringstream in("A\tB\n");
        CHECK_THROWS_WITH_AS(Taxonomy::parse(in), doctest::Contains("root"), TaxonomyError);
    }
    {
        std::istringstream in("root\tA\nroot\tA\n");
        CHECK_THROWS_WITH_AS(Taxonomy::parse(in), doctest::Contains("duplicate"), TaxonomyError);
    }
    {
        std::istringstream in("root A no tab\n");
        CHECK_THROWS_AS(Taxonomy::parse(in), ParseError);
    }
}

TEST_CASE("comments, spaces in names, and empty names parse") {
    std::istringstream in("# taxonomy\nroot\tMachine Learning\nMachine Learning\tDeep Nets\nroot\t\n");
    auto t = Taxonomy::parse(in);
    CHECK(t.num_labels() == 4);
    CHECK(t.find("Machine Learning").has_value());
    CHECK(t.find("").has_value());
    CHECK(t.name(t.id_of("")) == "");
}

TEST_CASE("node distances: identity, edge, siblings") {
    auto t = toy();
    for (std::int32_t i = 0; i < t.num_labels(); ++i) CHECK(t.distance(i, i) == 0);
    CHECK(t.distance(t.id_of("A"), t.id_of("A1")) == 1);
    CHECK(t.distance(t.id_of("A"), t.id_of("B")) == 2);
    CHECK(t.distance(t.id_of("A1"), t.id_of("B")) == 3);
    CHECK_THROWS_AS(t.distance(0, 99), InvalidArgument);
}

TEST_CASE("edge paths reverse and match distances") {
    auto t = toy();
    const auto a = t.id_of("A"), b = t.id_of("B"), a1 = t.id_of("A1");
    CHECK(t.edge_path(a, a).empty());
    CHECK(t.edge_path(a, a1).size() == 1);
    auto ab = t.edge_path(a, b);
    CHECK(ab.size() == 2);
    auto ba = t.edge_path(b, a);
    std::reverse(ba.begin(), ba.end());
    CHECK(ab == ba);
    for (std::int32_t i = 0; i < t.num_labels(); ++i)
        for (std::int32_t j = 0; j < t.num_labels(); ++j)
            CHECK(static_cast<std::int32_t>(t.edge_path(i, j).size()) == t.distance(i, j));
}

TEST_CASE("distances agree with Floyd-Warshall on random trees") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        RngStream rng(seed, 21);
        const int k = 2 + static_cast<int>(rng.below(199));
        std::vector<std::pair<std::int32_t, std::int32_t>> edges;
        auto t = random_tree(k, rng, &edges);
        auto oracle = floyd_warshall(k, edges);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                REQUIRE(t.distance(i, j) == oracle[static_cast<std::size_t>(i) * k + j]);
    }
}

TEST_CASE("distance properties: triangle inequality and depth bound") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RngStream rng(seed, 22);
        const int k = 2 + static_cast<int>(rng.below(40));
        auto t = random_tree(k, rng, nullptr);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                CHECK(t.distance(i, j) == t.distance(j, i));
                CHECK(t.distance(i, j) <= 2 * t.depth());
                const int m = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
                CHECK(t.distance(i, j) <= t.distance(i, m) + t.distance(m, j));
            }
    }
}

TEST_CASE("label set validation") {
    auto t = toy();
    const auto a = t.id_of("A"), b = t.id_of("B"), a1 = t.id_of("A1");

    auto s = t.validate_label_set({a, a1});
    CHECK(s.members == std::vector<std::int32_t>{std::min(a, a1), std::max(a, a1)});

    CHECK_THROWS_WITH_AS(t.validate_label_set({a1}), doctest::Contains("missing its father"),
                         LabelSetError);
    CHECK_NOTHROW(t.validate_label_set({a, a1, b}));
    CHECK_THROWS_AS(t.validate_label_set({}), LabelSetError);
    CHECK_THROWS_AS(t.validate_label_set({t.root()}), LabelSetError);

    // Multi-path set over a deeper tree.
    auto t2 = Taxonomy::from_edges({{"root", "A"}, {"root", "B"}, {"A", "A1"}, {"B", "B2"}});
    CHECK_NOTHROW(t2.validate_label_set(
        {t2.id_of("A"), t2.id_of("A1"), t2.id_of("B"), t2.id_of("B2")}));
}

TEST_CASE("validated sets round-trip through root paths") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RngStream rng(seed, 23);
        const int k = 3 + static_cast<int>(rng.below(60));
        auto t = random_tree(k, rng, nullptr);
        // Pick random leaves-ish nodes, close upward, validate, then rebuild
        // from root paths of every member and compare.
        std::vector<std::int32_t> picks;
        for (int i = 0; i < 4; ++i) {
            auto id = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(k)));
            if (id != t.root()) picks.push_back(id);
        }
        if (picks.empty()) continue;
        auto [closed, changed] = t.close_upward(picks);
        auto s = t.validate_label_set(closed);
        std::set<std::int32_t> rebuilt;
        for (auto m : s.members) {
            std::int32_t cur = m;
            while (cur != t.root()) {
                rebuilt.insert(cur);
                cur = t.father(cur);
            }
        }
        CHECK(std::vector<std::int32_t>(rebuilt.begin(), rebuilt.end()) == s.members);
    }
}

TEST_CASE("close_upward completes missing ancestors") {
    auto t = toy();
    auto [closed, changed] = t.close_upward({t.id_of("A1")});
    CHECK(changed);
    CHECK(closed.size() == 2);
    auto [closed2, changed2] = t.close_upward({t.id_of("A"), t.id_of("A1")});
    CHECK_FALSE(changed2);
}

TEST_CASE("target indexing skips the root") {
    auto t = toy();
    CHECK(t.target_index(t.root()) == -1);
    std::set<std::int32_t> seen;
    for (std::int32_t id = 0; id < t.num_labels(); ++id) {
        if (id == t.root()) continue;
        const auto ti = t.target_index(id);
        CHECK(ti >= 0);
        CHECK(ti < t.num_targets());
        CHECK(t.label_of_target(ti) == id);
        seen.insert(ti);
    }
    CHECK(static_cast<std::int32_t>(seen.size()) == t.num_targets());
}

TEST_CASE("bias spec buckets and paths are consistent") {
    auto t = toy();
    auto spec = t.bias_spec(true, true);
    CHECK(spec.k == t.num_labels());
    for (std::int32_t i = 0; i < spec.k; ++i)
        for (std::int32_t j = 0; j < spec.k; ++j) {
            const auto idx = static_cast<std::size_t>(i) * spec.k + j;
            CHECK(spec.bucket[idx] == std::min(t.distance(i, j), t.max_bucket()));
            CHECK(spec.path_offsets[idx + 1] - spec.path_offsets[idx] == t.distance(i, j));
        }
}

TEST_CASE("files without edges are rejected, but a root-only taxonomy is constructible") {
    std::istringstream in("# nothing\n");
    CHECK_THROWS_AS(Taxonomy::parse(in), TaxonomyError);

    auto t = Taxonomy::from_edges({});
    CHECK(t.num_labels() == 1);
    CHECK(t.num_targets() == 0);
    CHECK(t.depth() == 0);
    CHECK(t.distance(t.root(), t.root()) == 0);
}
