#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kfm/structure.hpp"

namespace kfm {

// First-order formula over a relational signature, prefix syntax:
//   (<rel> v1 ... vr) | (= v w) | (not F) | (and F ...) | (or F ...)
//   | (exists v F) | (forall v F)
struct Formula {
    enum class Kind { Atom, Equal, Not, And, Or, Exists, Forall };
    Kind kind = Kind::Equal;
    std::string rel;                 // Atom only
    std::vector<std::string> vars;   // Atom args; Equal: both sides; quantifiers: vars[0] bound
    std::vector<Formula> children;

    static Formula atom(std::string r, std::vector<std::string> args) {
        Formula f;
        f.kind = Kind::Atom;
        f.rel = std::move(r);
        f.vars = std::move(args);
        return f;
    }
    static Formula equal(std::string a, std::string b) {
        Formula f;
        f.kind = Kind::Equal;
        f.vars = {std::move(a), std::move(b)};
        return f;
    }
    static Formula negate(Formula g) {
        Formula f;
        f.kind = Kind::Not;
        f.children.push_back(std::move(g));
        return f;
    }
    static Formula conj(std::vector<Formula> gs) {
        Formula f;
        f.kind = Kind::And;
        f.children = std::move(gs);
        return f;
    }
    static Formula disj(std::vector<Formula> gs) {
        Formula f;
        f.kind = Kind::Or;
        f.children = std::move(gs);
        return f;
    }
    static Formula exists(std::string v, Formula g) {
        Formula f;
        f.kind = Kind::Exists;
        f.vars = {std::move(v)};
        f.children.push_back(std::move(g));
        return f;
    }
    static Formula forall(std::string v, Formula g) {
        Formula f;
        f.kind = Kind::Forall;
        f.vars = {std::move(v)};
        f.children.push_back(std::move(g));
        return f;
    }
};

namespace detail {

struct Sexp {
    bool leaf = false;
    std::string token;
    std::vector<Sexp> items;
};

inline void skip_ws(const std::string& s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) ++i;
}

inline Sexp parse_sexp(const std::string& s, std::size_t& i) {
    skip_ws(s, i);
    if (i >= s.size()) throw std::invalid_argument("formula syntax: unexpected end of input");
    if (s[i] == '(') {
        ++i;
        Sexp node;
        while (true) {
            skip_ws(s, i);
            if (i >= s.size()) throw std::invalid_argument("formula syntax: missing ')'");
            if (s[i] == ')') {
                ++i;
                return node;
            }
            node.items.push_back(parse_sexp(s, i));
        }
    }
    if (s[i] == ')') throw std::invalid_argument("formula syntax: unexpected ')'");
    Sexp leaf;
    leaf.leaf = true;
    std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\n' && s[i] != '\r' && s[i] != '(' && s[i] != ')') ++i;
    leaf.token = s.substr(start, i - start);
    return leaf;
}

inline bool valid_identifier(const std::string& t) {
    if (t.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(t[0])) || t[0] == '_')) return false;
    for (char c : t)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

inline Formula formula_of_sexp(const Sexp& e) {
    if (e.leaf) throw std::invalid_argument("formula syntax: bare token '" + e.token + "'");
    if (e.items.empty()) throw std::invalid_argument("formula syntax: empty form");
    if (!e.items[0].leaf) throw std::invalid_argument("formula syntax: head must be a symbol");
    const std::string& head = e.items[0].token;
    auto arg_var = [&](std::size_t i) {
        if (!e.items[i].leaf || !valid_identifier(e.items[i].token))
            throw std::invalid_argument("formula syntax: expected a variable in (" + head + " ...)");
        return e.items[i].token;
    };
    if (head == "=") {
        if (e.items.size() != 3) throw std::invalid_argument("formula syntax: (= v w) takes two variables");
        return Formula::equal(arg_var(1), arg_var(2));
    }
    if (head == "not") {
        if (e.items.size() != 2) throw std::invalid_argument("formula syntax: (not F) takes one formula");
        return Formula::negate(formula_of_sexp(e.items[1]));
    }
    if (head == "and" || head == "or") {
        if (e.items.size() < 2) throw std::invalid_argument("formula syntax: (" + head + " ...) needs at least one formula");
        std::vector<Formula> gs;
        for (std::size_t i = 1; i < e.items.size(); ++i) gs.push_back(formula_of_sexp(e.items[i]));
        return head == "and" ? Formula::conj(std::move(gs)) : Formula::disj(std::move(gs));
    }
    if (head == "exists" || head == "forall") {
        if (e.items.size() != 3) throw std::invalid_argument("formula syntax: (" + head + " v F)");
        std::string v = arg_var(1);
        Formula body = formula_of_sexp(e.items[2]);
        return head == "exists" ? Formula::exists(std::move(v), std::move(body))
                                : Formula::forall(std::move(v), std::move(body));
    }
    if (!valid_identifier(head)) throw std::invalid_argument("formula syntax: bad relation name '" + head + "'");
    std::vector<std::string> args;
    for (std::size_t i = 1; i < e.items.size(); ++i) args.push_back(arg_var(i));
    return Formula::atom(head, std::move(args));
}

}  // namespace detail

inline Formula parse_formula(const std::string& text) {
    std::size_t i = 0;
    detail::Sexp e = detail::parse_sexp(text, i);
    detail::skip_ws(text, i);
    if (i != text.size()) throw std::invalid_argument("formula syntax: trailing input after formula");
    return detail::formula_of_sexp(e);
}

inline std::string serialize_formula(const Formula& f) {
    std::ostringstream out;
    switch (f.kind) {
        case Formula::Kind::Atom:
            out << "(" << f.rel;
            for (const auto& v : f.vars) out << " " << v;
            out << ")";
            break;
        case Formula::Kind::Equal:
            out << "(= " << f.vars[0] << " " << f.vars[1] << ")";
            break;
        case Formula::Kind::Not:
            out << "(not " << serialize_formula(f.children[0]) << ")";
            break;
        case Formula::Kind::And:
        case Formula::Kind::Or:
            out << (f.kind == Formula::Kind::And ? "(and" : "(or");
            for (const auto& g : f.children) out << " " << serialize_formula(g);
            out << ")";
            break;
        case Formula::Kind::Exists:
            out << "(exists " << f.vars[0] << " " << serialize_formula(f.children[0]) << ")";
            break;
        case Formula::Kind::Forall:
            out << "(forall " << f.vars[0] << " " << serialize_formula(f.children[0]) << ")";
            break;
    }
    return out.str();
}

inline void collect_variables(const Formula& f, std::set<std::string>& out) {
    for (const auto& v : f.vars) out.insert(v);
    for (const auto& g : f.children) collect_variables(g, out);
}

// Number of distinct variable names, free or bound; rebinding does not add.
inline int variable_count(const Formula& f) {
    std::set<std::string> vars;
    collect_variables(f, vars);
    return static_cast<int>(vars.size());
}

inline void collect_free_variables(const Formula& f, std::set<std::string>& bound, std::set<std::string>& out) {
    switch (f.kind) {
        case Formula::Kind::Atom:
        case Formula::Kind::Equal:
            for (const auto& v : f.vars)
                if (!bound.count(v)) out.insert(v);
            break;
        case Formula::Kind::Exists:
        case Formula::Kind::Forall: {
            bool was_bound = bound.count(f.vars[0]) > 0;
            bound.insert(f.vars[0]);
            collect_free_variables(f.children[0], bound, out);
            if (!was_bound) bound.erase(f.vars[0]);
            break;
        }
        default:
            for (const auto& g : f.children) collect_free_variables(g, bound, out);
    }
}

inline std::set<std::string> free_variables(const Formula& f) {
    std::set<std::string> bound, out;
    collect_free_variables(f, bound, out);
    return out;
}

// Named auxiliary relations visible to evaluation alongside the signature.
struct AuxRelations {
    std::map<std::string, std::pair<int, const std::set<Tuple>*>> rels;  // name -> (arity, tuples)

    void add(const std::string& name, int arity, const std::set<Tuple>* tuples) {
        rels[name] = {arity, tuples};
    }
    const std::pair<int, const std::set<Tuple>*>* find(const std::string& name) const {
        auto it = rels.find(name);
        return it == rels.end() ? nullptr : &it->second;
    }
};

using Assignment = std::map<std::string, int>;

namespace detail {

inline bool evaluate_rec(const FiniteStructure& m, const Formula& f, Assignment& asg, const AuxRelations& aux) {
    switch (f.kind) {
        case Formula::Kind::Atom: {
            Tuple t(f.vars.size());
            for (std::size_t i = 0; i < f.vars.size(); ++i) {
                auto it = asg.find(f.vars[i]);
                if (it == asg.end()) throw std::invalid_argument("unbound free variable: " + f.vars[i]);
                t[i] = it->second;
            }
            int rel = m.sig.index_of(f.rel);
            if (rel >= 0) {
                if (static_cast<int>(t.size()) != m.sig.relations[rel].arity)
                    throw std::invalid_argument("arity mismatch in atom " + f.rel);
                return m.holds(rel, t);
            }
            if (const auto* a = aux.find(f.rel)) {
                if (static_cast<int>(t.size()) != a->first)
                    throw std::invalid_argument("arity mismatch in atom " + f.rel);
                return a->second->count(t) > 0;
            }
            throw std::invalid_argument("unknown relation symbol: " + f.rel);
        }
        case Formula::Kind::Equal: {
            auto a = asg.find(f.vars[0]), b = asg.find(f.vars[1]);
            if (a == asg.end()) throw std::invalid_argument("unbound free variable: " + f.vars[0]);
            if (b == asg.end()) throw std::invalid_argument("unbound free variable: " + f.vars[1]);
            return a->second == b->second;
        }
        case Formula::Kind::Not:
            return !evaluate_rec(m, f.children[0], asg, aux);
        case Formula::Kind::And:
            for (const auto& g : f.children)
                if (!evaluate_rec(m, g, asg, aux)) return false;
            return true;
        case Formula::Kind::Or:
            for (const auto& g : f.children)
                if (evaluate_rec(m, g, asg, aux)) return true;
            return false;
        case Formula::Kind::Exists:
        case Formula::Kind::Forall: {
            const std::string& v = f.vars[0];
            auto old = asg.find(v);
            std::optional<int> saved;
            if (old != asg.end()) saved = old->second;
            bool want = f.kind == Formula::Kind::Exists;
            bool result = !want;
            for (int e = 0; e < m.size; ++e) {
                asg[v] = e;
                if (evaluate_rec(m, f.children[0], asg, aux) == want) {
                    result = want;
                    break;
                }
            }
            if (saved) asg[v] = *saved;
            else asg.erase(v);
            return result;
        }
    }
    return false;
}

}  // namespace detail

// Tarskian satisfaction; quantifiers range over m's universe.
inline bool evaluate(const FiniteStructure& m, const Formula& f, const Assignment& asg, const AuxRelations& aux = {}) {
    for (const auto& v : free_variables(f))
        if (!asg.count(v)) throw std::invalid_argument("unbound free variable: " + v);
    for (const auto& [v, e] : asg)
        if (e < 0 || e >= m.size)
            throw std::invalid_argument("assignment sends " + v + " outside the universe");
    Assignment work = asg;
    return detail::evaluate_rec(m, f, work, aux);
}

}  // namespace kfm
