#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kfm/closure.hpp"
#include "kfm/formula.hpp"
#include "kfm/structure.hpp"

namespace kfm {

// Formula over the structure's signature extended by one auxiliary relation
// symbol of arity r, with free variables among x0..x{r-1}.
struct ExpandedFormula {
    Formula body;
    int aux_arity = 0;
    std::string aux_name = "X";
    bool proper_existential = false;  // certified prenex-existential body
};

inline std::string stage_variable(int i) { return "x" + std::to_string(i); }

// Prenex-existential: a (possibly empty) chain of exists over a
// quantifier-free matrix.
inline bool is_proper_existential(const Formula& f) {
    const Formula* g = &f;
    while (g->kind == Formula::Kind::Exists) g = &g->children[0];
    struct {
        bool operator()(const Formula& h) const {
            if (h.kind == Formula::Kind::Exists || h.kind == Formula::Kind::Forall) return false;
            for (const auto& c : h.children)
                if (!(*this)(c)) return false;
            return true;
        }
    } quantifier_free;
    return quantifier_free(*g);
}

inline void check_aux_atoms(const Formula& f, const std::string& aux, int r) {
    if (f.kind == Formula::Kind::Atom && f.rel == aux && static_cast<int>(f.vars.size()) != r)
        throw std::invalid_argument("auxiliary symbol " + aux + " used with wrong arity");
    for (const auto& g : f.children) check_aux_atoms(g, aux, r);
}

inline ExpandedFormula make_expanded(Formula body, int r, std::string aux = "X",
                                     bool require_proper = false) {
    if (r < 1) throw std::invalid_argument("auxiliary arity must be positive");
    std::set<std::string> allowed;
    for (int i = 0; i < r; ++i) allowed.insert(stage_variable(i));
    for (const auto& v : free_variables(body))
        if (!allowed.count(v))
            throw std::invalid_argument("free variable " + v + " is not among x0..x" + std::to_string(r - 1));
    check_aux_atoms(body, aux, r);
    ExpandedFormula ef;
    ef.proper_existential = is_proper_existential(body);
    if (require_proper && !ef.proper_existential)
        throw std::invalid_argument("body is not prenex-existential");
    ef.body = std::move(body);
    ef.aux_arity = r;
    ef.aux_name = std::move(aux);
    return ef;
}

// Inflationary stage chain from the empty relation to the fixed point; the
// final stage is stored twice so the stabilization is visible in the chain.
struct StageSequence {
    int aux_arity = 0;
    std::vector<std::set<Tuple>> stages;
    int stabilization_index = 0;  // first t with stage t equal to stage t+1

    const std::set<Tuple>& limit() const { return stages.back(); }
};

namespace detail {

inline std::set<Tuple> ifp_step(const FiniteStructure& a, const ExpandedFormula& ef,
                                const std::set<Tuple>& current) {
    AuxRelations aux;
    aux.add(ef.aux_name, ef.aux_arity, &current);
    std::set<Tuple> next = current;
    const long long count = power_ll(a.size, ef.aux_arity);
    for (long long r = 0; r < count; ++r) {
        Tuple t = tuple_of_rank(r, a.size, ef.aux_arity);
        if (next.count(t)) continue;
        Assignment asg;
        for (int i = 0; i < ef.aux_arity; ++i) asg[stage_variable(i)] = t[i];
        if (evaluate(a, ef.body, asg, aux)) next.insert(std::move(t));
    }
    return next;
}

}  // namespace detail

inline StageSequence ifp_stages(const FiniteStructure& a, const ExpandedFormula& ef) {
    StageSequence seq;
    seq.aux_arity = ef.aux_arity;
    seq.stages.push_back({});
    const long long bound = power_ll(a.size, ef.aux_arity);
    while (true) {
        std::set<Tuple> next = detail::ifp_step(a, ef, seq.stages.back());
        bool fixed = next == seq.stages.back();
        seq.stages.push_back(std::move(next));
        if (fixed) break;
        // Each strict stage adds a tuple, so the chain length is bounded.
        if (static_cast<long long>(seq.stages.size()) > bound + 2)
            throw std::logic_error("inflationary chain failed to stabilize");
    }
    seq.stabilization_index = static_cast<int>(seq.stages.size()) - 2;
    return seq;
}

// Forcing pairs at stage R: b-bar in R enables the entry of a-bar into the
// next stage, in that deleting every R-tuple inside acl(rng(b-bar)) flips
// the body at a-bar.
inline std::set<std::pair<Tuple, Tuple>> forcing_triples(const FiniteStructure& a,
                                                         const std::set<Tuple>& stage,
                                                         const ExpandedFormula& ef,
                                                         const ClosureConfig& cfg) {
    for (const auto& t : stage) {
        if (static_cast<int>(t.size()) != ef.aux_arity)
            throw std::invalid_argument("stage tuple arity mismatch");
        for (int e : t)
            if (e < 0 || e >= a.size) throw std::invalid_argument("stage tuple outside universe");
    }
    std::set<Tuple> next = detail::ifp_step(a, ef, stage);
    std::vector<Tuple> entering;
    for (const auto& t : next)
        if (!stage.count(t)) entering.push_back(t);

    std::set<std::pair<Tuple, Tuple>> out;
    if (entering.empty()) return out;
    for (const auto& b : stage) {
        std::set<int> basepts(b.begin(), b.end());
        std::set<int> acl = k_closure(a, basepts, cfg);
        std::set<Tuple> reduced;
        for (const auto& t : stage) {
            bool inside = true;
            for (int e : t) inside = inside && acl.count(e) > 0;
            if (!inside) reduced.insert(t);
        }
        AuxRelations aux;
        aux.add(ef.aux_name, ef.aux_arity, &reduced);
        for (const auto& t : entering) {
            Assignment asg;
            for (int i = 0; i < ef.aux_arity; ++i) asg[stage_variable(i)] = t[i];
            if (!evaluate(a, ef.body, asg, aux)) out.insert({b, t});
        }
    }
    return out;
}

// Reachability by at least one edge: E(x0,x1) or a first step into the
// already-accumulated relation.
inline ExpandedFormula transitive_closure_formula(const std::string& edge = "E") {
    Formula body = parse_formula("(exists z (or (" + edge + " x0 x1) (and (" + edge +
                                 " x0 z) (X z x1))))");
    return make_expanded(std::move(body), 2, "X", true);
}

}  // namespace kfm
