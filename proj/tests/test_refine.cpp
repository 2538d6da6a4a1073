#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kfm/refine.hpp"
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

FiniteStructure points(int n) { return FiniteStructure(Signature{}, n); }

FiniteStructure random_digraph(std::mt19937_64& rng, int n, int mod = 3) {
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (rng() % mod == 0) edges.push_back({a, b});
    return digraph(n, edges);
}

// Direct stability check: within a class, quantifier-free strings agree and
// each position's substitution set of classes agrees; across classes the
// pair (qf, substitution sets) differs.
bool partition_is_stable(const FiniteStructure& m, const KTypePartition& part) {
    const int n = m.size;
    const int k = part.k;
    const long long count = power_ll(n, k);
    std::map<int, std::pair<std::string, std::vector<std::set<int>>>> profile;
    for (long long r = 0; r < count; ++r) {
        Tuple t = tuple_of_rank(r, n, k);
        std::vector<std::set<int>> subst(k);
        for (int i = 0; i < k; ++i) {
            Tuple u = t;
            for (int e = 0; e < n; ++e) {
                u[i] = e;
                subst[i].insert(part.color_of(0, u));
            }
        }
        auto key = std::make_pair(qf_type_string(m, t), subst);
        int c = part.coloring[0][r];
        auto it = profile.find(c);
        if (it == profile.end())
            profile[c] = key;
        else if (it->second != key)
            return false;
    }
    std::set<std::pair<std::string, std::vector<std::set<int>>>> distinct;
    for (auto& [c, key] : profile) distinct.insert(key);
    return distinct.size() == profile.size();
}

}  // namespace

TEST_CASE("quantifier free type strings", "[refine]") {
    FiniteStructure p2 = digraph(2, {{0, 1}});
    CHECK(qf_type_string(p2, {0, 1}) == "0|0100");
    CHECK(qf_type_string(p2, {1, 0}) == "0|0010");
    // Diagonal tuples only see the induced point, so both diagonals agree.
    CHECK(qf_type_string(p2, {0, 0}) == "1|0000");
    CHECK(qf_type_string(p2, {1, 1}) == "1|0000");

    // Equality bits come first, then one block per declared relation.
    FiniteStructure two(Signature{{{"P", 1}, {"E", 2}}}, 2);
    two.add_fact(0, {1});
    two.add_fact(1, {0, 1});
    CHECK(qf_type_string(two, {0, 1}) == "0|01|0100");
    CHECK(qf_type_string(two, {1, 1}) == "1|11|0000");

    FiniteStructure pure = points(2);
    CHECK(qf_type_string(pure, {0, 1}) == "0");
    CHECK(qf_type_string(pure, {1, 1}) == "1");
}

TEST_CASE("pure equality structures have two classes of pairs", "[refine]") {
    for (int n = 2; n <= 5; ++n) {
        KTypePartition part = refine_k_types(points(n), 2);
        REQUIRE(part.class_count == 2);
        REQUIRE(part.rounds == 0);
        CHECK(part.color_of(0, {0, 0}) == 1);  // "0" sorts before "1"
        CHECK(part.color_of(0, {0, 1}) == 0);
    }
    CHECK(k_equivalent(points(2), points(5), 2));
    CHECK_FALSE(k_equivalent(points(1), points(2), 2));
    CHECK(k_equivalent(points(3), points(7), 3));
    CHECK_FALSE(k_equivalent(points(2), points(3), 3));
}

TEST_CASE("small cycles at two variables", "[refine]") {
    // Every distinct pair in the triangle is adjacent, so only three classes.
    KTypePartition c3 = refine_k_types(cycle(3), 2);
    CHECK(c3.class_count == 3);
    // The hexagon adds the non adjacent pair class and refines no further.
    KTypePartition c6 = refine_k_types(cycle(6), 2);
    CHECK(c6.class_count == 4);
    CHECK(c6.rounds == 0);

    CHECK_FALSE(k_equivalent(cycle(3), cycle(6), 2));
    CHECK(k_equivalent(cycle(6), cycle(7), 2));
    CHECK_FALSE(k_equivalent(cycle(6), cycle(7), 3));
    CHECK(k_equivalent(cycle(6), cycle(6), 3));
}

TEST_CASE("joint and singleton runs give stable partitions", "[refine]") {
    std::mt19937_64 rng(207);
    for (int trial = 0; trial < 25; ++trial) {
        int n = 2 + static_cast<int>(rng() % 4);
        FiniteStructure m = random_digraph(rng, n);
        KTypePartition part = refine_k_types(m, 2);
        REQUIRE(partition_is_stable(m, part));
        long long total = 0;
        std::set<int> seen;
        for (int c : part.coloring[0]) seen.insert(c), ++total;
        REQUIRE(total == power_ll(n, 2));
        REQUIRE(static_cast<int>(seen.size()) == part.class_count);
    }
}

TEST_CASE("equivalent structures produce identical singleton partitions", "[refine]") {
    KTypePartition a = refine_k_types(cycle(6), 2);
    KTypePartition b = refine_k_types(cycle(7), 2);
    REQUIRE(a.class_count == b.class_count);
    REQUIRE(a.traces == b.traces);
    REQUIRE(a.qf == b.qf);

    // Same classes, so the class header lines of the dumps agree bytewise.
    std::string da = serialize_partition(a, 0), db = serialize_partition(b, 0);
    auto headers = [](const std::string& s) {
        std::string out;
        std::istringstream in(s);
        for (std::string line; std::getline(in, line);)
            if (line.rfind("class ", 0) == 0) out += line + "\n";
        return out;
    };
    REQUIRE(headers(da) == headers(db));
    REQUIRE(da == serialize_partition(refine_k_types(cycle(6), 2), 0));
}

TEST_CASE("k type refinement validates input", "[refine]") {
    FiniteStructure m = cycle(3);
    CHECK_THROWS_AS(refine_k_types(m, 1), std::invalid_argument);  // below max arity
    CHECK_THROWS_AS(refine_k_types(m, 0), std::invalid_argument);
    CHECK_THROWS_AS(joint_k_types({}, 2), std::invalid_argument);
    FiniteStructure other(Signature{{{"F", 2}}}, 3);
    const FiniteStructure* pair[] = {&m, &other};
    CHECK_THROWS_AS(joint_k_types({pair[0], pair[1]}, 2), std::invalid_argument);
}

TEST_CASE("diagrams compare through joint runs", "[refine]") {
    FiniteStructure c6 = cycle(6);
    // Rotations of the hexagon move edges to edges.
    CHECK(diag_k_equal(c6, {0, 1}, c6, {1, 2}, 2));
    CHECK(diag_k_equal(c6, {0, 1}, c6, {4, 5}, 2));
    // An edge pair and an antipodal pair differ.
    CHECK_FALSE(diag_k_equal(c6, {0, 1}, c6, {0, 3}, 2));
    // Antipodal and distance two pairs both have the non adjacent type.
    CHECK(diag_k_equal(c6, {0, 2}, c6, {0, 3}, 2));
    CHECK_FALSE(diag_k_equal(c6, {0, 2}, c6, {0, 3}, 3));
    // Across equivalent structures.
    CHECK(diag_k_equal(c6, {0, 1}, cycle(7), {3, 4}, 2));
    // Size mismatch is an immediate no.
    CHECK_FALSE(diag_k_equal(c6, {0}, c6, {0, 1}, 2));

    DiagK d = extract_diag_k(c6, {0, 1}, 2);
    CHECK(d.base == std::vector<int>{0, 1});
    CHECK(d.tuple_types.size() == 4);  // 00 01 10 11
    CHECK(d.theory_classes.size() == 4);
    CHECK_THROWS_AS(extract_diag_k(c6, {}, 2), std::invalid_argument);
    CHECK_THROWS_AS(extract_diag_k(c6, {9}, 2), std::invalid_argument);
}

TEST_CASE("color preserving maps on the hexagon", "[refine]") {
    FiniteStructure c6 = cycle(6);
    PartialMap rot({{0, 1}, {1, 2}});
    CHECK(color_preserving_partial_map(c6, c6, rot, 2));
    PartialMap skew({{0, 0}, {1, 3}});  // edge to antipodal pair
    CHECK_FALSE(color_preserving_partial_map(c6, c6, skew, 2));
    CHECK(color_preserving_partial_map(c6, c6, PartialMap{}, 2));
    // Into the heptagon: edges match edges even across structures.
    PartialMap cross({{0, 2}, {1, 3}});
    CHECK(color_preserving_partial_map(c6, cycle(7), cross, 2));
}

TEST_CASE("padding repeats the last entry", "[refine]") {
    CHECK(pad_tuple({3}, 3) == Tuple{3, 3, 3});
    CHECK(pad_tuple({1, 2}, 3) == Tuple{1, 2, 2});
    CHECK(pad_tuple({1, 2, 3}, 3) == Tuple{1, 2, 3});
    CHECK_THROWS_AS(pad_tuple({}, 2), std::invalid_argument);
    CHECK_THROWS_AS(pad_tuple({1, 2, 3}, 2), std::invalid_argument);
}
