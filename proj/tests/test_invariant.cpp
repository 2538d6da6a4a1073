#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>
#include <vector>

#include "kfm/invariant.hpp"
#include "kfm/pebble_game.hpp"
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

FiniteStructure two_triangles() {
    return digraph(6, {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}});
}

FiniteStructure random_digraph(std::mt19937_64& rng, int n, int mod = 3) {
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (rng() % mod == 0) edges.push_back({a, b});
    return digraph(n, edges);
}

FiniteStructure relabel(const FiniteStructure& s, std::mt19937_64& rng) {
    std::vector<int> perm(s.size);
    for (int i = 0; i < s.size; ++i) perm[i] = i;
    for (int i = s.size - 1; i > 0; --i) std::swap(perm[i], perm[rng() % (i + 1)]);
    FiniteStructure out(s.sig, s.size);
    for (std::size_t r = 0; r < s.sig.relations.size(); ++r)
        for (const auto& t : s.facts[r]) {
            Tuple img(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) img[i] = perm[t[i]];
            out.add_fact(static_cast<int>(r), img);
        }
    return out;
}

}  // namespace

TEST_CASE("permutation helpers", "[invariant]") {
    auto perms = all_permutations(3);
    REQUIRE(perms.size() == 6);
    CHECK(perms.front() == std::vector<int>{0, 1, 2});
    CHECK(perms.back() == std::vector<int>{2, 1, 0});
    CHECK(permutation_name({1, 2, 0}) == "231");
    CHECK(apply_permutation({10, 20, 30}, {1, 2, 0}) == Tuple{20, 30, 10});
    CHECK(apply_permutation({10, 20}, {0, 1}) == Tuple{10, 20});
}

TEST_CASE("invariant of the single edge structure", "[invariant]") {
    // Universe {0, 1} with one edge 0 -> 1.  Refinement separates the two
    // diagonal tuples in one round: substitution from (0,0) reaches the
    // forward edge only through position two, from (1,1) only through
    // position one.  Final classes in canonical order:
    //   1 = (1,0)  2 = (0,1)  3 = (0,0)  4 = (1,1)
    FiniteStructure p2 = digraph(2, {{0, 1}});
    InvariantStructure inv = build_invariant(p2, 2);
    REQUIRE(inv.class_count == 4);

    std::string expected =
        "k 2\n"
        "N 4\n"
        "class 1 qf 0|0010\n"
        "class 2 qf 0|0100\n"
        "class 3 qf 1|0000\n"
        "class 4 qf 1|0000\n"
        "perm 12 1 1\n"
        "perm 12 2 2\n"
        "perm 12 3 3\n"
        "perm 12 4 4\n"
        "perm 21 1 2\n"
        "perm 21 2 1\n"
        "perm 21 3 3\n"
        "perm 21 4 4\n"
        "acc 1 1\n"
        "acc 1 3\n"
        "acc 2 2\n"
        "acc 2 4\n"
        "acc 3 1\n"
        "acc 3 3\n"
        "acc 4 2\n"
        "acc 4 4\n";
    REQUIRE(serialize_invariant(inv) == expected);
}

TEST_CASE("invariant of the hexagon", "[invariant]") {
    InvariantStructure inv = build_invariant(cycle(6), 2);
    REQUIRE(inv.class_count == 4);
    // Classes: 0 non adjacent, 1 backward, 2 forward, 3 diagonal.
    CHECK(inv.qf == std::vector<std::string>{"0|0000", "0|0010", "0|0100", "1|0000"});
    CHECK(inv.perm.at("21") == std::vector<int>{0, 2, 1, 3});
    // Substituting the first coordinate reaches every class from every class.
    for (const auto& row : inv.acc) CHECK(row == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("invariant dumps round trip through the parser", "[invariant]") {
    InvariantStructure inv = build_invariant(cycle(6), 2);
    std::string dump = serialize_invariant(inv);
    InvariantStructure back = parse_invariant(dump);
    REQUIRE(back == inv);
    REQUIRE(serialize_invariant(back) == dump);

    InvariantStructure commented = parse_invariant("# note\n" + dump + "\n# tail\n");
    REQUIRE(commented == inv);

    CHECK_THROWS_AS(parse_invariant("N 1\nclass 1 qf x\n"), ParseError);          // missing k
    CHECK_THROWS_AS(parse_invariant("k 2\nclass 1 qf x\n"), ParseError);          // class before N
    CHECK_THROWS_AS(parse_invariant("k 2\nN 1\n"), ParseError);                   // missing class line
    CHECK_THROWS_AS(parse_invariant("k 2\nN 1\nclass 2 qf x\n"), ParseError);     // id out of range
    CHECK_THROWS_AS(parse_invariant("k 2\nN 1\nclass 1 qf x\nperm 12 1 1\nperm 21 1 2\n"), ParseError);
    CHECK_THROWS_AS(parse_invariant("k 2\nN 1\nwat 1\n"), ParseError);
}

TEST_CASE("equivalent structures share one invariant", "[invariant]") {
    InvariantStructure c6 = build_invariant(cycle(6), 2);
    CHECK(serialize_invariant(c6) == serialize_invariant(build_invariant(cycle(7), 2)));
    CHECK(invariants_equal(c6, build_invariant(two_triangles(), 2)));
    CHECK_FALSE(invariants_equal(c6, build_invariant(cycle(3), 2)));
    CHECK_FALSE(invariants_equal(build_invariant(cycle(6), 3), build_invariant(two_triangles(), 3)));
    CHECK_THROWS_AS(invariants_equal(c6, build_invariant(cycle(6), 3)), std::invalid_argument);
    CHECK_THROWS_AS(build_invariant(cycle(3), 1), std::invalid_argument);
}

TEST_CASE("invariant equality matches the pebble game", "[invariant]") {
    std::mt19937_64 rng(401);
    int equal_count = 0;
    for (int trial = 0; trial < 40; ++trial) {
        int n = 2 + static_cast<int>(rng() % 3);
        int n2 = 2 + static_cast<int>(rng() % 3);
        FiniteStructure m = random_digraph(rng, n, 2 + static_cast<int>(rng() % 2));
        FiniteStructure w = rng() % 4 == 0 ? relabel(m, rng)
                                           : random_digraph(rng, n2, 2 + static_cast<int>(rng() % 2));
        for (int k = 2; k <= 3; ++k) {
            bool via_invariant = invariants_equal(build_invariant(m, k), build_invariant(w, k));
            bool via_game = pebble_game_equivalent(m, w, k);
            REQUIRE(via_invariant == via_game);
            if (via_game) ++equal_count;
        }
    }
    CHECK(equal_count > 0);
}
