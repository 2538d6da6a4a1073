#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kfm {

struct ParseError : std::runtime_error {
    int line;
    ParseError(int line_, const std::string& what_)
        : std::runtime_error("line " + std::to_string(line_) + ": " + what_), line(line_) {}
};

struct Relation {
    std::string name;
    int arity = 0;
};

// Ordered relation list; names distinct, arities >= 1.
struct Signature {
    std::vector<Relation> relations;

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < relations.size(); ++i)
            if (relations[i].name == name) return static_cast<int>(i);
        return -1;
    }
    int max_arity() const {
        int m = 0;
        for (const auto& r : relations) m = std::max(m, r.arity);
        return m;
    }
    bool operator==(const Signature& o) const {
        if (relations.size() != o.relations.size()) return false;
        for (std::size_t i = 0; i < relations.size(); ++i)
            if (relations[i].name != o.relations[i].name || relations[i].arity != o.relations[i].arity)
                return false;
        return true;
    }
};

using Tuple = std::vector<int>;

// Finite relational structure over universe {0..size-1}.
// Facts are stored per relation as sorted tuple sets; tuples match arities.
struct FiniteStructure {
    Signature sig;
    int size = 0;
    std::vector<std::set<Tuple>> facts;  // aligned with sig.relations

    FiniteStructure() = default;
    FiniteStructure(Signature s, int n) : sig(std::move(s)), size(n), facts(sig.relations.size()) {
        validate_header();
    }

    void validate_header() const {
        if (size < 1) throw std::invalid_argument("universe must have at least one element");
        std::set<std::string> seen;
        for (const auto& r : sig.relations) {
            if (r.arity < 1) throw std::invalid_argument("relation arity must be >= 1: " + r.name);
            if (!seen.insert(r.name).second) throw std::invalid_argument("duplicate relation name: " + r.name);
        }
    }

    void add_fact(int rel, const Tuple& t) {
        if (rel < 0 || rel >= static_cast<int>(facts.size())) throw std::invalid_argument("relation index out of range");
        if (static_cast<int>(t.size()) != sig.relations[rel].arity)
            throw std::invalid_argument("arity mismatch for relation " + sig.relations[rel].name);
        for (int e : t)
            if (e < 0 || e >= size) throw std::invalid_argument("element out of range in fact for " + sig.relations[rel].name);
        facts[rel].insert(t);
    }

    bool holds(int rel, const Tuple& t) const { return facts[rel].count(t) > 0; }

    bool operator==(const FiniteStructure& o) const {
        return sig == o.sig && size == o.size && facts == o.facts;
    }
};

namespace detail {

inline std::vector<std::string> tokenize_line(const std::string& raw) {
    std::string line = raw;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    std::vector<std::string> toks;
    std::istringstream in(line);
    std::string t;
    while (in >> t) toks.push_back(t);
    return toks;
}

inline int parse_nat(const std::string& tok, int lineno, const char* what) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw ParseError(lineno, std::string("expected a non-negative integer for ") + what + ", got '" + tok + "'");
    long v = std::stol(tok);
    if (v > 1'000'000'000L) throw ParseError(lineno, std::string("value too large for ") + what);
    return static_cast<int>(v);
}

}  // namespace detail

// Text format: `rel <name> <arity>` header lines, one `universe <n>` line,
// then `<name> <e1> ... <er>` fact lines.  '#' starts a comment anywhere.
inline FiniteStructure parse_structure(const std::string& text) {
    Signature sig;
    std::optional<FiniteStructure> out;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        auto toks = detail::tokenize_line(raw);
        if (toks.empty()) continue;
        if (toks[0] == "rel") {
            if (out) throw ParseError(lineno, "rel lines must precede the universe line");
            if (toks.size() != 3) throw ParseError(lineno, "expected 'rel <name> <arity>'");
            int arity = detail::parse_nat(toks[2], lineno, "arity");
            if (arity < 1) throw ParseError(lineno, "relation arity must be >= 1");
            if (sig.index_of(toks[1]) >= 0) throw ParseError(lineno, "duplicate relation name: " + toks[1]);
            sig.relations.push_back({toks[1], arity});
        } else if (toks[0] == "universe") {
            if (out) throw ParseError(lineno, "duplicate universe line");
            if (toks.size() != 2) throw ParseError(lineno, "expected 'universe <n>'");
            int n = detail::parse_nat(toks[1], lineno, "universe size");
            if (n < 1) throw ParseError(lineno, "universe must have at least one element");
            out.emplace(sig, n);
        } else {
            if (!out) throw ParseError(lineno, "fact line before universe line");
            int rel = out->sig.index_of(toks[0]);
            if (rel < 0) throw ParseError(lineno, "unknown relation: " + toks[0]);
            int arity = out->sig.relations[rel].arity;
            if (static_cast<int>(toks.size()) != 1 + arity)
                throw ParseError(lineno, "arity mismatch: " + toks[0] + " takes " + std::to_string(arity) + " arguments");
            Tuple t(arity);
            for (int i = 0; i < arity; ++i) {
                t[i] = detail::parse_nat(toks[1 + i], lineno, "element");
                if (t[i] >= out->size) throw ParseError(lineno, "element out of range: " + toks[1 + i]);
            }
            out->facts[rel].insert(t);
        }
    }
    if (!out) throw ParseError(lineno, "missing universe line");
    return *out;
}

// Canonical form: declaration order for relations, lexicographic facts.
// Serialization is the identity on parse(serialize(.)), byte for byte.
inline std::string serialize_structure(const FiniteStructure& s) {
    std::ostringstream out;
    for (const auto& r : s.sig.relations) out << "rel " << r.name << " " << r.arity << "\n";
    out << "universe " << s.size << "\n";
    for (std::size_t i = 0; i < s.facts.size(); ++i)
        for (const auto& t : s.facts[i]) {
            out << s.sig.relations[i].name;
            for (int e : t) out << " " << e;
            out << "\n";
        }
    return out.str();
}

struct InducedSubstructure {
    FiniteStructure structure;
    std::vector<int> elements;  // elements[new_id] = old_id, increasing
};

// Substructure induced on a nonempty subset, relabeled 0..|A|-1 preserving order.
inline InducedSubstructure induced_substructure(const FiniteStructure& m, const std::set<int>& a) {
    if (a.empty()) throw std::invalid_argument("induced substructure of an empty set");
    std::vector<int> elems(a.begin(), a.end());
    if (elems.front() < 0 || elems.back() >= m.size) throw std::invalid_argument("subset element out of range");
    std::map<int, int> to_new;
    for (std::size_t i = 0; i < elems.size(); ++i) to_new[elems[i]] = static_cast<int>(i);
    FiniteStructure sub(m.sig, static_cast<int>(elems.size()));
    for (std::size_t r = 0; r < m.facts.size(); ++r)
        for (const auto& t : m.facts[r]) {
            Tuple img(t.size());
            bool inside = true;
            for (std::size_t i = 0; i < t.size() && inside; ++i) {
                auto it = to_new.find(t[i]);
                if (it == to_new.end()) inside = false;
                else img[i] = it->second;
            }
            if (inside) sub.facts[r].insert(img);
        }
    return {std::move(sub), std::move(elems)};
}

// Finite partial map between universes; functional and injective by construction.
class PartialMap {
  public:
    PartialMap() = default;
    explicit PartialMap(const std::vector<std::pair<int, int>>& pairs) {
        for (auto [s, t] : pairs) add(s, t);
    }

    void add(int s, int t) {
        auto f = fwd_.find(s);
        if (f != fwd_.end()) {
            if (f->second != t) throw std::invalid_argument("partial map not functional");
            return;
        }
        auto b = bwd_.find(t);
        if (b != bwd_.end()) throw std::invalid_argument("partial map not injective");
        fwd_[s] = t;
        bwd_[t] = s;
    }

    bool defined(int s) const { return fwd_.count(s) > 0; }
    int at(int s) const {
        auto it = fwd_.find(s);
        if (it == fwd_.end()) throw std::invalid_argument("partial map undefined at " + std::to_string(s));
        return it->second;
    }
    std::size_t size() const { return fwd_.size(); }
    const std::map<int, int>& pairs() const { return fwd_; }

    PartialMap inverse() const {
        PartialMap inv;
        for (auto [s, t] : fwd_) inv.add(t, s);
        return inv;
    }

  private:
    std::map<int, int> fwd_, bwd_;
};

// f is a partial isomorphism iff for every relation R and every tuple over
// dom(f), R holds in m exactly when the image tuple holds in n.
inline bool is_partial_iso(const FiniteStructure& m, const FiniteStructure& n, const PartialMap& f) {
    if (!(m.sig == n.sig)) throw std::invalid_argument("partial isomorphism requires equal signatures");
    std::vector<int> dom;
    for (auto [s, t] : f.pairs()) {
        if (s < 0 || s >= m.size) throw std::invalid_argument("map domain outside universe");
        if (t < 0 || t >= n.size) throw std::invalid_argument("map range outside universe");
        dom.push_back(s);
    }
    if (dom.empty()) return true;
    for (std::size_t r = 0; r < m.sig.relations.size(); ++r) {
        int arity = m.sig.relations[r].arity;
        Tuple t(arity), img(arity);
        std::vector<std::size_t> idx(arity, 0);
        while (true) {
            for (int i = 0; i < arity; ++i) {
                t[i] = dom[idx[i]];
                img[i] = f.at(t[i]);
            }
            if (m.holds(static_cast<int>(r), t) != n.holds(static_cast<int>(r), img)) return false;
            int pos = arity - 1;
            while (pos >= 0 && idx[pos] + 1 == dom.size()) idx[pos--] = 0;
            if (pos < 0) break;
            ++idx[pos];
        }
    }
    return true;
}

// Lexicographic rank of a k-tuple over {0..n-1}; inverse of tuple_of_rank.
inline long long rank_of_tuple(const Tuple& t, int n) {
    long long r = 0;
    for (int e : t) r = r * n + e;
    return r;
}

inline Tuple tuple_of_rank(long long r, int n, int k) {
    Tuple t(k);
    for (int i = k - 1; i >= 0; --i) {
        t[i] = static_cast<int>(r % n);
        r /= n;
    }
    return t;
}

inline long long power_ll(int base, int exp) {
    long long p = 1;
    for (int i = 0; i < exp; ++i) p *= base;
    return p;
}

}  // namespace kfm
