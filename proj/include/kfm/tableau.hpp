#pragma once

#include <array>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kfm/invariant.hpp"
#include "kfm/refine.hpp"
#include "kfm/structure.hpp"

namespace kfm {

// A complete-invariant dump read back as a theory: N tuple-type symbols with
// their quantifier-free content, coordinate-permutation action, and
// position-one accessibility.  The home signature is carried alongside so
// quantifier-free bit blocks can be decoded back into relation facts; it is
// not part of the dump itself and must come from a structure or tableau file.
struct TableauTheory {
    int k = 0;
    int type_count = 0;
    Signature sig;
    InvariantStructure inv;
    std::vector<std::string> eq_bits;                // per type: i<j pair bits
    std::vector<std::vector<std::string>> rel_bits;  // per type, per relation
    std::vector<std::vector<Tuple>> posmaps;         // per relation: maps [arity]->[k] in rank order

    const std::set<int>& acc(int t) const { return inv.acc.at(t); }
    int sigma_action(const std::string& name, int t) const { return inv.perm.at(name).at(t); }

    // Equality diagram of u agrees with the type's forced pattern.
    bool matches_equality(int t, const Tuple& u) const {
        const std::string& bits = eq_bits.at(t);
        int idx = 0;
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j) {
                if ((u[i] == u[j]) != (bits[idx] == '1')) return false;
                ++idx;
            }
        return true;
    }
};

inline TableauTheory make_theory(const InvariantStructure& inv, const Signature& sig) {
    if (inv.k < 2) throw std::invalid_argument("theories need k >= 2");
    if (inv.class_count < 1) throw std::invalid_argument("a theory needs at least one tuple type");
    TableauTheory th;
    th.k = inv.k;
    th.type_count = inv.class_count;
    th.sig = sig;
    th.inv = inv;

    const int k = inv.k;
    const std::size_t eq_len = static_cast<std::size_t>(k) * (k - 1) / 2;
    for (const auto& rel : sig.relations) {
        std::vector<Tuple> maps;
        long long count = power_ll(k, rel.arity);
        for (long long p = 0; p < count; ++p) maps.push_back(tuple_of_rank(p, k, rel.arity));
        th.posmaps.push_back(std::move(maps));
    }
    for (int t = 0; t < inv.class_count; ++t) {
        std::vector<std::string> segments;
        std::string cur;
        for (char c : inv.qf[t]) {
            if (c == '|') {
                segments.push_back(cur);
                cur.clear();
            } else if (c == '0' || c == '1') {
                cur.push_back(c);
            } else {
                throw std::invalid_argument("malformed quantifier-free type: " + inv.qf[t]);
            }
        }
        segments.push_back(cur);
        if (segments.size() != 1 + sig.relations.size() || segments[0].size() != eq_len)
            throw std::invalid_argument("quantifier-free type does not fit the signature: " + inv.qf[t]);
        for (std::size_t r = 0; r < sig.relations.size(); ++r)
            if (segments[r + 1].size() != th.posmaps[r].size())
                throw std::invalid_argument("quantifier-free type does not fit relation " + sig.relations[r].name +
                                            ": " + inv.qf[t]);
        th.eq_bits.push_back(segments[0]);
        th.rel_bits.emplace_back(segments.begin() + 1, segments.end());
    }
    return th;
}

inline TableauTheory theory_of(const FiniteStructure& m, int k) {
    return make_theory(build_invariant(m, k), m.sig);
}

// Typed universe: every listed k-tuple carries one theory type (0-based here,
// 1-based in files).  The home signature rides along for realization.
struct Tableau {
    int k = 0;
    int size = 0;
    Signature sig;
    std::map<Tuple, int> typing;

    bool operator==(const Tableau& o) const {
        return k == o.k && size == o.size && sig == o.sig && typing == o.typing;
    }
};

// Text format mirrors structures: `rel <name> <arity>` lines, `k <k>`,
// `universe <n>`, then `type <alpha> <e1> ... <ek>` lines (alpha 1-based).
inline std::string serialize_tableau(const Tableau& t) {
    std::ostringstream out;
    for (const auto& r : t.sig.relations) out << "rel " << r.name << " " << r.arity << "\n";
    out << "k " << t.k << "\n";
    out << "universe " << t.size << "\n";
    for (const auto& [tuple, alpha] : t.typing) {
        out << "type " << alpha + 1;
        for (int e : tuple) out << " " << e;
        out << "\n";
    }
    return out.str();
}

inline Tableau parse_tableau(const std::string& text) {
    Tableau t;
    bool have_k = false, have_universe = false;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        auto toks = detail::tokenize_line(raw);
        if (toks.empty()) continue;
        if (toks[0] == "rel") {
            if (have_k || have_universe) throw ParseError(lineno, "rel lines must precede the k line");
            if (toks.size() != 3) throw ParseError(lineno, "expected 'rel <name> <arity>'");
            int arity = detail::parse_nat(toks[2], lineno, "arity");
            if (arity < 1) throw ParseError(lineno, "relation arity must be >= 1");
            if (t.sig.index_of(toks[1]) >= 0) throw ParseError(lineno, "duplicate relation name: " + toks[1]);
            t.sig.relations.push_back({toks[1], arity});
        } else if (toks[0] == "k") {
            if (have_k) throw ParseError(lineno, "duplicate k line");
            if (toks.size() != 2) throw ParseError(lineno, "expected 'k <k>'");
            t.k = detail::parse_nat(toks[1], lineno, "k");
            if (t.k < 2) throw ParseError(lineno, "k must be >= 2");
            have_k = true;
        } else if (toks[0] == "universe") {
            if (!have_k) throw ParseError(lineno, "universe line before k line");
            if (have_universe) throw ParseError(lineno, "duplicate universe line");
            if (toks.size() != 2) throw ParseError(lineno, "expected 'universe <n>'");
            t.size = detail::parse_nat(toks[1], lineno, "universe size");
            if (t.size < 1) throw ParseError(lineno, "universe must have at least one element");
            have_universe = true;
        } else if (toks[0] == "type") {
            if (!have_universe) throw ParseError(lineno, "type line before universe line");
            if (static_cast<int>(toks.size()) != 2 + t.k)
                throw ParseError(lineno, "expected 'type <alpha> <e1> ... <ek>'");
            int alpha = detail::parse_nat(toks[1], lineno, "type id");
            if (alpha < 1) throw ParseError(lineno, "type ids are 1-based");
            Tuple tuple(t.k);
            for (int i = 0; i < t.k; ++i) {
                tuple[i] = detail::parse_nat(toks[2 + i], lineno, "element");
                if (tuple[i] >= t.size) throw ParseError(lineno, "element out of range: " + toks[2 + i]);
            }
            auto [it, fresh] = t.typing.emplace(std::move(tuple), alpha - 1);
            if (!fresh && it->second != alpha - 1) throw ParseError(lineno, "conflicting types for one tuple");
        } else {
            throw ParseError(lineno, "unknown line in tableau: " + toks[0]);
        }
    }
    if (!have_k || !have_universe) throw ParseError(lineno, "tableau missing k or universe line");
    return t;
}

// Reads a structure off as typed tuples.  Fails unless the structure realizes
// exactly the theory's type system (same invariant, byte for byte); a proper
// subset would already falsify the theory, which asserts every type realized.
inline Tableau to_tableau(const FiniteStructure& m, const TableauTheory& th) {
    if (!(m.sig == th.sig)) throw std::invalid_argument("structure signature differs from the theory's");
    KTypePartition part = refine_k_types(m, th.k);
    InvariantStructure mine = build_invariant(part, 0);
    if (!(mine == th.inv))
        throw std::invalid_argument("structure is not a model of the theory: its tuple-type invariant differs");
    Tableau t;
    t.k = th.k;
    t.size = m.size;
    t.sig = m.sig;
    const long long count = power_ll(m.size, th.k);
    for (long long r = 0; r < count; ++r)
        t.typing.emplace(tuple_of_rank(r, m.size, th.k), part.coloring[0][r]);
    return t;
}

namespace detail {

inline std::string tuple_text(const Tuple& u) {
    std::string s;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (i) s += " ";
        s += std::to_string(u[i]);
    }
    return s;
}

inline void require_total(const Tableau& t, const char* who) {
    long long count = power_ll(t.size, t.k);
    if (static_cast<long long>(t.typing.size()) == count) return;
    for (long long r = 0; r < count; ++r) {
        Tuple u = tuple_of_rank(r, t.size, t.k);
        if (!t.typing.count(u))
            throw std::invalid_argument(std::string(who) + " leaves tuple " + tuple_text(u) + " untyped");
    }
}

// Rejects typings that cannot be checked at all: wrong k or signature, type
// ids outside the theory, tuples outside the universe.
inline void validate_against_theory(const Tableau& t, const TableauTheory& th) {
    if (t.k != th.k) throw std::invalid_argument("tableau k differs from theory k");
    if (!(t.sig == th.sig)) throw std::invalid_argument("tableau signature differs from the theory's");
    for (const auto& [u, alpha] : t.typing) {
        if (static_cast<int>(u.size()) != t.k) throw std::invalid_argument("typed tuple has wrong length");
        for (int e : u)
            if (e < 0 || e >= t.size) throw std::invalid_argument("typed tuple leaves the universe: " + tuple_text(u));
        if (alpha < 0 || alpha >= th.type_count)
            throw std::invalid_argument("type id outside the theory: " + std::to_string(alpha + 1));
    }
}

}  // namespace detail

// Decodes a total tableau back into a structure: each typed tuple contributes
// the facts its type's quantifier-free bits assert.
inline FiniteStructure realize(const Tableau& t, const TableauTheory& th) {
    detail::validate_against_theory(t, th);
    detail::require_total(t, "the tableau");
    FiniteStructure m(th.sig, t.size);
    for (const auto& [u, alpha] : t.typing)
        for (std::size_t r = 0; r < th.sig.relations.size(); ++r) {
            const std::string& bits = th.rel_bits[alpha][r];
            for (std::size_t p = 0; p < bits.size(); ++p) {
                if (bits[p] != '1') continue;
                const Tuple& pm = th.posmaps[r][p];
                Tuple fact(pm.size());
                for (std::size_t i = 0; i < pm.size(); ++i) fact[i] = u[pm[i]];
                m.add_fact(static_cast<int>(r), fact);
            }
        }
    return m;
}

struct AxiomCheck {
    bool pass = true;
    std::string witness;
};

// One slot per axiom, in order:
//   G1 every tuple typed         G2 types fix the equality diagram
//   G3 permutation coherence     G4 position-one substitution stays accessible
//   G5 every type realized       G6 every accessible type witnessed
struct AxiomReport {
    std::array<AxiomCheck, 6> axiom;

    bool universal_pass() const {
        return axiom[0].pass && axiom[1].pass && axiom[2].pass && axiom[3].pass;
    }
    bool all_pass() const { return universal_pass() && axiom[4].pass && axiom[5].pass; }
};

inline const char* axiom_name(int i) {
    static const char* names[6] = {"G1", "G2", "G3", "G4", "G5", "G6"};
    return names[i];
}

inline AxiomReport check_axioms(const Tableau& t, const TableauTheory& th) {
    detail::validate_against_theory(t, th);
    AxiomReport rep;
    auto fail = [&rep](int i, std::string w) {
        if (!rep.axiom[i].pass) return;
        rep.axiom[i].pass = false;
        rep.axiom[i].witness = std::move(w);
    };

    const long long count = power_ll(t.size, t.k);
    if (static_cast<long long>(t.typing.size()) != count)
        for (long long r = 0; r < count && rep.axiom[0].pass; ++r) {
            Tuple u = tuple_of_rank(r, t.size, t.k);
            if (!t.typing.count(u)) fail(0, "tuple " + detail::tuple_text(u) + " is untyped");
        }

    for (const auto& [u, alpha] : t.typing)
        if (!th.matches_equality(alpha, u)) {
            fail(1, "tuple " + detail::tuple_text(u) + " violates the equality diagram of type " +
                        std::to_string(alpha + 1));
            break;
        }

    const auto perms = all_permutations(t.k);
    for (const auto& sigma : perms) {
        const std::string name = permutation_name(sigma);
        for (const auto& [u, alpha] : t.typing) {
            auto it = t.typing.find(apply_permutation(u, sigma));
            if (it == t.typing.end()) continue;  // a G1 failure, not a G3 one
            if (it->second != th.sigma_action(name, alpha)) {
                fail(2, "tuple " + detail::tuple_text(u) + " of type " + std::to_string(alpha + 1) +
                            " disagrees with its image under " + name);
                break;
            }
        }
        if (!rep.axiom[2].pass) break;
    }

    // Group typed tuples by tail so substitution checks touch each pair once.
    std::map<Tuple, std::vector<std::pair<int, int>>> by_tail;  // tail -> (head, type)
    for (const auto& [u, alpha] : t.typing)
        by_tail[Tuple(u.begin() + 1, u.end())].push_back({u[0], alpha});
    for (const auto& [tail, entries] : by_tail) {
        std::set<int> present;
        for (const auto& [head, alpha] : entries) present.insert(alpha);
        for (const auto& [head, alpha] : entries) {
            const std::set<int>& ok = th.acc(alpha);
            for (const auto& [other_head, beta] : entries)
                if (!ok.count(beta)) {
                    fail(3, "tuple " + std::to_string(head) + " " + detail::tuple_text(tail) + " of type " +
                                std::to_string(alpha + 1) + " sits beside head " + std::to_string(other_head) +
                                " of inaccessible type " + std::to_string(beta + 1));
                    break;
                }
            for (int beta : ok)
                if (!present.count(beta)) {
                    fail(5, "type " + std::to_string(alpha + 1) + " expects an accessible type " +
                                std::to_string(beta + 1) + " at tail " + detail::tuple_text(tail) +
                                " but no head realizes it");
                    break;
                }
            if (!rep.axiom[3].pass && !rep.axiom[5].pass) break;
        }
    }

    std::vector<char> realized(th.type_count, 0);
    for (const auto& [u, alpha] : t.typing) realized[alpha] = 1;
    for (int a = 0; a < th.type_count; ++a)
        if (!realized[a]) {
            fail(4, "type " + std::to_string(a + 1) + " is never realized");
            break;
        }

    return rep;
}

}  // namespace kfm
