#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "kfm/closure.hpp"
#include "kfm/structure.hpp"

using namespace kfm;

namespace {

FiniteStructure digraph(int n, const std::vector<std::pair<int, int>>& edges) {
    FiniteStructure s(Signature{{{"E", 2}}}, n);
    for (auto [a, b] : edges) s.add_fact(0, {a, b});
    return s;
}

FiniteStructure cycle(int n) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
    return digraph(n, edges);
}

}  // namespace

TEST_CASE("structure parsing round trips and normalizes", "[structure]") {
    std::string text =
        "# a comment\n"
        "rel E 2\n"
        "universe 3\n"
        "E 1 2   # trailing comment\n"
        "E 0 1\n";
    FiniteStructure s = parse_structure(text);
    REQUIRE(s.size == 3);
    REQUIRE(s.holds(0, {0, 1}));
    REQUIRE(s.holds(0, {1, 2}));
    REQUIRE_FALSE(s.holds(0, {2, 0}));

    std::string canon = serialize_structure(s);
    REQUIRE(canon == "rel E 2\nuniverse 3\nE 0 1\nE 1 2\n");
    REQUIRE(serialize_structure(parse_structure(canon)) == canon);
}

TEST_CASE("one point structure with empty signature parses", "[structure]") {
    FiniteStructure s = parse_structure("universe 1\n");
    REQUIRE(s.size == 1);
    REQUIRE(s.sig.relations.empty());
}

TEST_CASE("structure parse errors carry line numbers", "[structure]") {
    auto line_of = [](const std::string& text) {
        try {
            parse_structure(text);
        } catch (const ParseError& e) {
            return e.line;
        }
        return -1;
    };
    CHECK(line_of("rel E 2\nuniverse 2\nE 0\n") == 3);           // arity mismatch
    CHECK(line_of("rel E 2\nuniverse 2\nE 0 5\n") == 3);         // element out of range
    CHECK(line_of("rel E 2\nE 0 1\n") == 2);                     // fact before universe
    CHECK(line_of("rel E 2\nuniverse 2\nF 0 1\n") == 3);         // unknown relation
    CHECK(line_of("rel E 2\nrel E 1\nuniverse 2\n") == 2);       // duplicate relation
    CHECK(line_of("rel E 2\nuniverse 0\n") == 2);                // empty universe
    CHECK(line_of("rel E 2\n") == 1);                            // missing universe
    CHECK(line_of("rel E 2\nuniverse 2\nE zero 1\n") == 3);      // non-numeric element
}

TEST_CASE("induced substructure keeps inside facts and relabels in order", "[structure]") {
    FiniteStructure s = cycle(5);
    auto sub = induced_substructure(s, {1, 2, 4});
    REQUIRE(sub.elements == std::vector<int>{1, 2, 4});
    REQUIRE(sub.structure.size == 3);
    REQUIRE(sub.structure.holds(0, {0, 1}));        // 1 -> 2 survives
    REQUIRE_FALSE(sub.structure.holds(0, {1, 2}));  // 2 -> 3 dropped with 3
    REQUIRE_FALSE(sub.structure.holds(0, {2, 0}));
    REQUIRE_THROWS_AS(induced_substructure(s, {}), std::invalid_argument);
    REQUIRE_THROWS_AS(induced_substructure(s, {7}), std::invalid_argument);
}

TEST_CASE("induced substructure of the full universe is the identity", "[structure]") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 2 + static_cast<int>(rng() % 5);
        std::vector<std::pair<int, int>> edges;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                if (rng() % 3 == 0) edges.push_back({a, b});
        FiniteStructure s = digraph(n, edges);
        std::set<int> all;
        for (int i = 0; i < n; ++i) all.insert(i);
        REQUIRE(induced_substructure(s, all).structure == s);
    }
}

TEST_CASE("partial isomorphism checks facts both ways", "[structure]") {
    FiniteStructure path = digraph(3, {{0, 1}, {1, 2}});
    FiniteStructure other = digraph(3, {{2, 0}, {0, 1}});
    // path: 0->1->2, other: 2->0->1 under 0|->2, 1|->0, 2|->1.
    PartialMap good({{0, 2}, {1, 0}, {2, 1}});
    REQUIRE(is_partial_iso(path, other, good));
    PartialMap bad({{0, 0}, {1, 2}});
    REQUIRE_FALSE(is_partial_iso(path, other, bad));
    REQUIRE(is_partial_iso(path, other, PartialMap{}));

    FiniteStructure wrongsig(Signature{{{"F", 2}}}, 3);
    REQUIRE_THROWS_AS(is_partial_iso(path, wrongsig, PartialMap{}), std::invalid_argument);
    REQUIRE_THROWS_AS(is_partial_iso(path, other, PartialMap({{5, 0}})), std::invalid_argument);
}

TEST_CASE("partial maps reject non-functional or non-injective pairs", "[structure]") {
    PartialMap f;
    f.add(0, 1);
    REQUIRE_THROWS_AS(f.add(0, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(f.add(3, 1), std::invalid_argument);
    f.add(0, 1);  // re-adding the same pair is fine
    REQUIRE(f.size() == 1);
    REQUIRE(f.inverse().at(1) == 0);
}

TEST_CASE("partial isomorphism symmetry under inversion", "[structure]") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 2 + static_cast<int>(rng() % 4);
        std::vector<std::pair<int, int>> e1, e2;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                if (rng() % 3 == 0) e1.push_back({a, b});
                if (rng() % 3 == 0) e2.push_back({a, b});
            }
        FiniteStructure m = digraph(n, e1), w = digraph(n, e2);
        PartialMap f;
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng() % (i + 1)]);
        int sz = 1 + static_cast<int>(rng() % n);
        for (int i = 0; i < sz; ++i) f.add(i, perm[i]);
        REQUIRE(is_partial_iso(m, w, f) == is_partial_iso(w, m, f.inverse()));
    }
}

TEST_CASE("trivial closure is the identity", "[closure]") {
    FiniteStructure s = cycle(4);
    std::set<int> b{0, 2};
    REQUIRE(k_closure(s, b, ClosureConfig::trivial()) == b);
    REQUIRE_THROWS_AS(k_closure(s, {9}, ClosureConfig::trivial()), std::invalid_argument);
}

TEST_CASE("counting closure pulls in the isolated vertex of a triangle plus point", "[closure]") {
    FiniteStructure s = digraph(4, {{0, 1}, {1, 2}, {2, 0}});
    auto cl = k_closure(s, {}, ClosureConfig::counting(2, 1));
    REQUIRE(cl == std::set<int>{3});
}

TEST_CASE("counting closure is extensive idempotent and monotone", "[closure]") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 40; ++trial) {
        int n = 2 + static_cast<int>(rng() % 6);
        std::vector<std::pair<int, int>> edges;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                if (rng() % 3 == 0) edges.push_back({a, b});
        FiniteStructure s = digraph(n, edges);
        ClosureConfig cfg = ClosureConfig::counting(2, 1 + static_cast<int>(rng() % 2));
        std::set<int> b, b2;
        for (int i = 0; i < n; ++i) {
            if (rng() % 3 == 0) b.insert(i);
            if (rng() % 3 == 0) b2.insert(i);
        }
        for (int x : b) b2.insert(x);  // b subseteq b2
        auto cb = k_closure(s, b, cfg);
        auto cb2 = k_closure(s, b2, cfg);
        REQUIRE(std::includes(cb.begin(), cb.end(), b.begin(), b.end()));
        REQUIRE(k_closure(s, cb, cfg) == cb);
        REQUIRE(std::includes(cb2.begin(), cb2.end(), cb.begin(), cb.end()));
    }
}
