#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <string>
#include <vector>

#include "kfm/formula.hpp"
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

// Independent generator for property tests: small random formulas over E/2
// using variables drawn from {x, y, z}.
Formula random_formula(std::mt19937_64& rng, int depth) {
    static const std::vector<std::string> vars{"x", "y", "z"};
    auto var = [&]() { return vars[rng() % vars.size()]; };
    int kind = depth == 0 ? static_cast<int>(rng() % 2) : static_cast<int>(rng() % 7);
    switch (kind) {
        case 0: return Formula::atom("E", {var(), var()});
        case 1: return Formula::equal(var(), var());
        case 2: return Formula::negate(random_formula(rng, depth - 1));
        case 3: return Formula::conj({random_formula(rng, depth - 1), random_formula(rng, depth - 1)});
        case 4: return Formula::disj({random_formula(rng, depth - 1), random_formula(rng, depth - 1)});
        case 5: return Formula::exists(var(), random_formula(rng, depth - 1));
        default: return Formula::forall(var(), random_formula(rng, depth - 1));
    }
}

bool eval_all_assignments(const FiniteStructure& s, const Formula& f,
                          bool (*combine)(bool, bool), bool init) {
    static const std::vector<std::string> vars{"x", "y", "z"};
    bool acc = init;
    for (int a = 0; a < s.size; ++a)
        for (int b = 0; b < s.size; ++b)
            for (int c = 0; c < s.size; ++c) {
                Assignment asg{{"x", a}, {"y", b}, {"z", c}};
                acc = combine(acc, evaluate(s, f, asg));
            }
    return acc;
}

}  // namespace

TEST_CASE("formula parser round trips", "[formula]") {
    std::vector<std::string> cases{
        "(E x y)",
        "(= x y)",
        "(not (E x x))",
        "(and (E x y) (E y x))",
        "(or (= x y) (E x y) (E y x))",
        "(exists z (and (E x z) (E z y)))",
        "(forall x (exists y (E x y)))",
    };
    for (const auto& text : cases) {
        Formula f = parse_formula(text);
        REQUIRE(serialize_formula(f) == text);
        REQUIRE(serialize_formula(parse_formula(serialize_formula(f))) == text);
    }
}

TEST_CASE("formula parse errors", "[formula]") {
    CHECK_THROWS_AS(parse_formula("(E x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_formula("(E x y) extra"), std::invalid_argument);
    CHECK_THROWS_AS(parse_formula("(implies (E x y) (E y x))"), std::invalid_argument);
    CHECK_THROWS_AS(parse_formula("(= x)"), std::invalid_argument);
    CHECK_THROWS_AS(parse_formula("(exists (E x y))"), std::invalid_argument);
    CHECK_THROWS_AS(parse_formula("(exists x)"), std::invalid_argument);
    CHECK_THROWS_AS(parse_formula("(and)"), std::invalid_argument);
    CHECK_THROWS_AS(parse_formula(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_formula("(not (E x y) (E y x))"), std::invalid_argument);
}

TEST_CASE("free variables respect shadowing", "[formula]") {
    auto fv = [](const std::string& text) { return free_variables(parse_formula(text)); };
    CHECK(fv("(E x y)") == std::set<std::string>{"x", "y"});
    CHECK(fv("(exists x (E x y))") == std::set<std::string>{"y"});
    CHECK(fv("(and (E x x) (exists x (E x x)))") == std::set<std::string>{"x"});
    CHECK(fv("(exists x (and (E x y) (exists y (E x y))))") == std::set<std::string>{"y"});
    CHECK(fv("(forall x (exists y (E x y)))").empty());
    CHECK(variable_count(parse_formula("(exists x (and (E x y) (exists y (E x y))))")) == 2);
    CHECK(variable_count(parse_formula("(and (E x y) (E z w))")) == 4);
}

TEST_CASE("evaluation on hand worked cases", "[formula]") {
    FiniteStructure c3 = cycle(3);
    FiniteStructure p3 = digraph(3, {{0, 1}, {1, 2}});
    Formula total = parse_formula("(forall x (exists y (E x y)))");
    CHECK(evaluate(c3, total, {}));
    CHECK_FALSE(evaluate(p3, total, {}));

    Formula loop = parse_formula("(exists x (E x x))");
    CHECK_FALSE(evaluate(c3, loop, {}));
    CHECK(evaluate(digraph(2, {{1, 1}}), loop, {}));

    Formula twopoints = parse_formula("(exists x (exists y (not (= x y))))");
    CHECK(evaluate(c3, twopoints, {}));
    CHECK_FALSE(evaluate(parse_structure("universe 1\n"), twopoints, {}));

    Formula edge = parse_formula("(E x y)");
    CHECK(evaluate(p3, edge, {{"x", 0}, {"y", 1}}));
    CHECK_FALSE(evaluate(p3, edge, {{"x", 1}, {"y", 0}}));

    // Two step reachability in the path but not back.
    Formula twostep = parse_formula("(exists z (and (E x z) (E z y)))");
    CHECK(evaluate(p3, twostep, {{"x", 0}, {"y", 2}}));
    CHECK_FALSE(evaluate(p3, twostep, {{"x", 2}, {"y", 0}}));
}

TEST_CASE("evaluation with auxiliary relations", "[formula]") {
    FiniteStructure p3 = digraph(3, {{0, 1}, {1, 2}});
    std::set<Tuple> xrel{{0, 2}};
    AuxRelations aux;
    aux.add("X", 2, &xrel);
    Formula f = parse_formula("(exists y (X x y))");
    CHECK(evaluate(p3, f, {{"x", 0}}, aux));
    CHECK_FALSE(evaluate(p3, f, {{"x", 1}}, aux));
    // Signature relations still resolve when aux is present.
    CHECK(evaluate(p3, parse_formula("(E x y)"), {{"x", 0}, {"y", 1}}, aux));
}

TEST_CASE("evaluation rejects bad inputs", "[formula]") {
    FiniteStructure p3 = digraph(3, {{0, 1}, {1, 2}});
    CHECK_THROWS_AS(evaluate(p3, parse_formula("(E x y)"), {{"x", 0}}), std::invalid_argument);
    CHECK_THROWS_AS(evaluate(p3, parse_formula("(F x y)"), {{"x", 0}, {"y", 0}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(evaluate(p3, parse_formula("(E x y z)"), {{"x", 0}, {"y", 0}, {"z", 0}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(evaluate(p3, parse_formula("(E x y)"), {{"x", 0}, {"y", 9}}),
                    std::invalid_argument);
}

TEST_CASE("quantifier duality and De Morgan over random formulas", "[formula]") {
    std::mt19937_64 rng(101);
    auto or_ = [](bool a, bool b) { return a || b; };
    for (int trial = 0; trial < 60; ++trial) {
        int n = 1 + static_cast<int>(rng() % 3);
        std::vector<std::pair<int, int>> edges;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                if (rng() % 2 == 0) edges.push_back({a, b});
        FiniteStructure s = digraph(n, edges);

        Formula body = random_formula(rng, 2);
        Formula fa = Formula::forall("x", body);
        Formula dual = Formula::negate(Formula::exists("x", Formula::negate(body)));
        Formula diff = Formula::disj({Formula::conj({fa, Formula::negate(dual)}),
                                      Formula::conj({dual, Formula::negate(fa)})});
        CHECK_FALSE(eval_all_assignments(s, diff, or_, false));

        Formula a = random_formula(rng, 2), b = random_formula(rng, 2);
        Formula lhs = Formula::negate(Formula::conj({a, b}));
        Formula rhs = Formula::disj({Formula::negate(a), Formula::negate(b)});
        Formula diff2 = Formula::disj({Formula::conj({lhs, Formula::negate(rhs)}),
                                       Formula::conj({rhs, Formula::negate(lhs)})});
        CHECK_FALSE(eval_all_assignments(s, diff2, or_, false));
    }
}
