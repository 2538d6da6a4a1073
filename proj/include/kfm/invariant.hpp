#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kfm/refine.hpp"
#include "kfm/structure.hpp"

namespace kfm {

inline std::vector<std::vector<int>> all_permutations(int k) {
    std::vector<int> p(k);
    for (int i = 0; i < k; ++i) p[i] = i;
    std::vector<std::vector<int>> out;
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}

inline std::string permutation_name(const std::vector<int>& sigma) {
    std::string s;
    for (int v : sigma) s += static_cast<char>('1' + v);
    return s;
}

inline Tuple apply_permutation(const Tuple& t, const std::vector<int>& sigma) {
    Tuple out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[sigma[i]];
    return out;
}

// Ordered summary of a structure's k-type space: classes in canonical trace
// order carrying their quantifier-free types, the coordinate-permutation
// action, and position-one substitution accessibility.  Two structures
// satisfy the same k-variable sentences iff these compare equal.
struct InvariantStructure {
    int k = 0;
    int class_count = 0;
    std::vector<std::string> qf;                   // per class (0-based)
    std::map<std::string, std::vector<int>> perm;  // sigma name -> class action
    std::vector<std::set<int>> acc;                // per class: reachable classes

    bool operator==(const InvariantStructure& o) const {
        return k == o.k && class_count == o.class_count && qf == o.qf && perm == o.perm && acc == o.acc;
    }
};

// Builds from an existing partition (intended for singleton runs) so callers
// keeping the partition around do not refine twice.
inline InvariantStructure build_invariant(const KTypePartition& part, int structure) {
    const int k = part.k;
    if (k < 2) throw std::invalid_argument("invariants need k >= 2");
    InvariantStructure inv;
    inv.k = k;
    inv.class_count = part.class_count;
    inv.qf = part.qf;
    inv.acc.assign(part.class_count, {});

    const int n = part.sizes.at(structure);
    const long long count = power_ll(n, k);
    const long long stride = power_ll(n, k - 1);
    std::vector<char> seen(part.class_count, 0);
    for (long long r = 0; r < count; ++r) {
        int c = part.coloring[structure][r];
        std::set<int> reach;
        long long base = r % stride;
        for (int e = 0; e < n; ++e) reach.insert(part.coloring[structure][base + e * stride]);
        if (!seen[c]) {
            seen[c] = 1;
            inv.acc[c] = std::move(reach);
        } else if (inv.acc[c] != reach) {
            throw std::logic_error("accessibility not class-uniform; refinement unstable");
        }
    }

    for (const auto& sigma : all_permutations(k)) {
        std::vector<int> action(part.class_count, -1);
        for (long long r = 0; r < count; ++r) {
            int c = part.coloring[structure][r];
            int img = part.color_of(structure, apply_permutation(tuple_of_rank(r, n, k), sigma));
            if (action[c] < 0) action[c] = img;
            else if (action[c] != img)
                throw std::logic_error("permutation action not class-uniform; refinement unstable");
        }
        inv.perm[permutation_name(sigma)] = std::move(action);
    }

    // Group law: acting by sigma then tau equals acting by their composite.
    const auto perms = all_permutations(k);
    for (const auto& sigma : perms)
        for (const auto& tau : perms) {
            std::vector<int> composite(k);
            for (int i = 0; i < k; ++i) composite[i] = sigma[tau[i]];
            const auto& s = inv.perm[permutation_name(sigma)];
            const auto& t = inv.perm[permutation_name(tau)];
            const auto& c = inv.perm[permutation_name(composite)];
            for (int cls = 0; cls < inv.class_count; ++cls)
                if (t[s[cls]] != c[cls]) throw std::logic_error("permutation action violates the group law");
        }
    return inv;
}

inline InvariantStructure build_invariant(const FiniteStructure& m, int k) {
    if (k < 2) throw std::invalid_argument("invariants need k >= 2");
    return build_invariant(refine_k_types(m, k), 0);
}

// Dump doubles as the tableau theory file.  All class ids are 1-based.
inline std::string serialize_invariant(const InvariantStructure& inv) {
    std::ostringstream out;
    out << "k " << inv.k << "\n";
    out << "N " << inv.class_count << "\n";
    for (int c = 0; c < inv.class_count; ++c) out << "class " << c + 1 << " qf " << inv.qf[c] << "\n";
    for (const auto& [name, action] : inv.perm)
        for (int c = 0; c < inv.class_count; ++c)
            out << "perm " << name << " " << c + 1 << " " << action[c] + 1 << "\n";
    for (int c = 0; c < inv.class_count; ++c)
        for (int d : inv.acc[c]) out << "acc " << c + 1 << " " << d + 1 << "\n";
    return out.str();
}

inline InvariantStructure parse_invariant(const std::string& text) {
    InvariantStructure inv;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    bool have_k = false, have_n = false;
    while (std::getline(in, raw)) {
        ++lineno;
        auto toks = detail::tokenize_line(raw);
        if (toks.empty()) continue;
        if (toks[0] == "k") {
            if (toks.size() != 2) throw ParseError(lineno, "expected 'k <k>'");
            inv.k = detail::parse_nat(toks[1], lineno, "k");
            have_k = true;
        } else if (toks[0] == "N") {
            if (toks.size() != 2) throw ParseError(lineno, "expected 'N <count>'");
            inv.class_count = detail::parse_nat(toks[1], lineno, "class count");
            inv.qf.assign(inv.class_count, "");
            inv.acc.assign(inv.class_count, {});
            have_n = true;
        } else if (toks[0] == "class") {
            if (!have_n) throw ParseError(lineno, "class line before N line");
            if (toks.size() != 4 || toks[2] != "qf") throw ParseError(lineno, "expected 'class <i> qf <typeid>'");
            int c = detail::parse_nat(toks[1], lineno, "class id");
            if (c < 1 || c > inv.class_count) throw ParseError(lineno, "class id out of range");
            inv.qf[c - 1] = toks[3];
        } else if (toks[0] == "perm") {
            if (!have_n) throw ParseError(lineno, "perm line before N line");
            if (toks.size() != 4) throw ParseError(lineno, "expected 'perm <sigma> <i> <j>'");
            int c = detail::parse_nat(toks[2], lineno, "class id");
            int d = detail::parse_nat(toks[3], lineno, "class id");
            if (c < 1 || c > inv.class_count || d < 1 || d > inv.class_count)
                throw ParseError(lineno, "class id out of range");
            auto& action = inv.perm[toks[1]];
            if (action.empty()) action.assign(inv.class_count, -1);
            action[c - 1] = d - 1;
        } else if (toks[0] == "acc") {
            if (!have_n) throw ParseError(lineno, "acc line before N line");
            if (toks.size() != 3) throw ParseError(lineno, "expected 'acc <i> <j>'");
            int c = detail::parse_nat(toks[1], lineno, "class id");
            int d = detail::parse_nat(toks[2], lineno, "class id");
            if (c < 1 || c > inv.class_count || d < 1 || d > inv.class_count)
                throw ParseError(lineno, "class id out of range");
            inv.acc[c - 1].insert(d - 1);
        } else {
            throw ParseError(lineno, "unknown line in invariant dump: " + toks[0]);
        }
    }
    if (!have_k || !have_n) throw ParseError(lineno, "invariant dump missing k or N header");
    for (int c = 0; c < inv.class_count; ++c)
        if (inv.qf[c].empty()) throw ParseError(lineno, "missing class line for class " + std::to_string(c + 1));
    for (const auto& [name, action] : inv.perm)
        for (int c = 0; c < inv.class_count; ++c)
            if (action[c] < 0) throw ParseError(lineno, "incomplete perm action for " + name);
    return inv;
}

inline bool invariants_equal(const InvariantStructure& a, const InvariantStructure& b) {
    if (a.k != b.k) throw std::invalid_argument("invariants built for different k");
    return a == b;
}

}  // namespace kfm
