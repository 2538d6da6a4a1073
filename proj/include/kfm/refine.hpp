#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kfm/structure.hpp"

namespace kfm {

// Quantifier-free k-type of a tuple, serialized canonically:
//   <equality bits for pairs i<j, lex> '|' <per relation, declaration order:
//   one bit per position map p in [k]^arity, lex, set iff R(a[p1]..a[pr])>.
// The string is a complete description of the induced labeled k-tuple, so
// equal strings across structures of one signature mean equal atomic types.
inline std::string qf_type_string(const FiniteStructure& m, const Tuple& t) {
    const int k = static_cast<int>(t.size());
    std::string out;
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) out.push_back(t[i] == t[j] ? '1' : '0');
    Tuple arg;
    for (std::size_t r = 0; r < m.sig.relations.size(); ++r) {
        out.push_back('|');
        int arity = m.sig.relations[r].arity;
        arg.assign(arity, 0);
        std::vector<int> pos(arity, 0);
        while (true) {
            for (int i = 0; i < arity; ++i) arg[i] = t[pos[i]];
            out.push_back(m.holds(static_cast<int>(r), arg) ? '1' : '0');
            int i = arity - 1;
            while (i >= 0 && pos[i] + 1 == k) pos[i--] = 0;
            if (i < 0) break;
            ++pos[i];
        }
    }
    return out;
}

// Stable partition of the k-tuple spaces of one or more structures under
// set-based substitution refinement.  Class ids are canonical ranks: round
// zero ranks sort the quantifier-free type strings, and each later round
// ranks signatures (previous rank, then per-position sets of previous
// ranks), so the final order refines every earlier one and is invariant
// across structures that realize the same types.
struct KTypePartition {
    int k = 0;
    int class_count = 0;
    int rounds = 0;  // refinement rounds performed until stability
    std::vector<int> sizes;                  // universe sizes, one per structure
    std::vector<std::vector<int>> coloring;  // [structure][tuple rank] -> class id
    std::vector<std::string> traces;         // [class] -> refinement trace string
    std::vector<std::string> qf;             // [class] -> quantifier-free type string
    std::vector<std::vector<char>> realized; // [structure][class]

    int color_of(int structure, const Tuple& t) const {
        return coloring[structure][rank_of_tuple(t, sizes[structure])];
    }
};

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Joint refinement over the disjoint union of tuple spaces; substitution
// ranges within each tuple's own structure.  All structures must share the
// signature.  Requires k >= every relation arity so atomic facts embed.
inline KTypePartition joint_k_types(const std::vector<const FiniteStructure*>& ms, int k) {
    if (ms.empty()) throw std::invalid_argument("joint refinement needs at least one structure");
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    for (const auto* m : ms) {
        if (!(m->sig == ms[0]->sig)) throw std::invalid_argument("joint refinement requires equal signatures");
        if (k < m->sig.max_arity()) throw std::invalid_argument("k must be at least the maximum relation arity");
    }

    KTypePartition part;
    part.k = k;
    const int ns = static_cast<int>(ms.size());
    std::vector<long long> counts(ns);
    for (int s = 0; s < ns; ++s) {
        part.sizes.push_back(ms[s]->size);
        counts[s] = power_ll(ms[s]->size, k);
    }

    // Round 0: rank quantifier-free type strings across all structures.
    std::vector<std::vector<std::string>> qf_of(ns);
    std::set<std::string> qf_pool;
    for (int s = 0; s < ns; ++s) {
        qf_of[s].reserve(counts[s]);
        for (long long r = 0; r < counts[s]; ++r) {
            qf_of[s].push_back(qf_type_string(*ms[s], tuple_of_rank(r, ms[s]->size, k)));
            qf_pool.insert(qf_of[s].back());
        }
    }
    std::map<std::string, int> qf_rank;
    {
        int i = 0;
        for (const auto& q : qf_pool) qf_rank[q] = i++;
    }
    part.coloring.resize(ns);
    for (int s = 0; s < ns; ++s) {
        part.coloring[s].resize(counts[s]);
        for (long long r = 0; r < counts[s]; ++r) part.coloring[s][r] = qf_rank[qf_of[s][r]];
    }
    int classes = static_cast<int>(qf_pool.size());

    // Trace components: per-round rank of each class, zero-padded so the
    // lexicographic order of trace strings equals the final rank order.
    std::vector<std::vector<std::vector<int>>> history;  // [round][structure][tuple rank]
    history.push_back(part.coloring);

    // Classes split strictly until the final pass, so the loop runs at most
    // one round per tuple overall.
    using Sig = std::pair<int, std::vector<std::vector<int>>>;  // previous rank, per-position subst rank sets
    for (part.rounds = 0;; ++part.rounds) {
        std::map<Sig, int> sig_rank;
        std::vector<std::vector<Sig>> sig_of(ns);
        for (int s = 0; s < ns; ++s) {
            const int n = ms[s]->size;
            sig_of[s].resize(counts[s]);
            for (long long r = 0; r < counts[s]; ++r) {
                Sig sig;
                sig.first = part.coloring[s][r];
                sig.second.resize(k);
                // Substituting position i changes the rank by (m - t[i]) * n^(k-1-i).
                long long stride = power_ll(n, k - 1);
                Tuple t = tuple_of_rank(r, n, k);
                for (int i = 0; i < k; ++i) {
                    std::set<int> seen;
                    long long base = r - static_cast<long long>(t[i]) * stride;
                    for (int e = 0; e < n; ++e) seen.insert(part.coloring[s][base + e * stride]);
                    sig.second[i].assign(seen.begin(), seen.end());
                    stride /= n;
                }
                sig_rank[sig] = 0;
                sig_of[s][r] = std::move(sig);
            }
        }
        int next = 0;
        for (auto& [sig, id] : sig_rank) id = next++;
        for (int s = 0; s < ns; ++s)
            for (long long r = 0; r < counts[s]; ++r) part.coloring[s][r] = sig_rank[sig_of[s][r]];
        if (next == classes) break;  // no class split: stable, ids unchanged by re-ranking
        classes = next;
        history.push_back(part.coloring);
    }

    part.class_count = classes;
    part.realized.assign(ns, std::vector<char>(classes, 0));
    part.qf.assign(classes, "");
    for (int s = 0; s < ns; ++s)
        for (long long r = 0; r < counts[s]; ++r) {
            int c = part.coloring[s][r];
            part.realized[s][c] = 1;
            if (part.qf[c].empty()) part.qf[c] = qf_of[s][r];
        }

    int width = 1;
    for (int c = classes; c >= 10; c /= 10) ++width;
    part.traces.assign(classes, "");
    for (int s = 0; s < ns; ++s)
        for (long long r = 0; r < counts[s]; ++r) {
            int c = part.coloring[s][r];
            if (!part.traces[c].empty()) continue;
            std::ostringstream tr;
            for (std::size_t round = 0; round < history.size(); ++round) {
                std::string d = std::to_string(history[round][s][r]);
                tr << (round ? "." : "") << std::string(width - std::min<std::size_t>(width, d.size()), '0') << d;
            }
            std::string fin = std::to_string(c);
            tr << "." << std::string(width - std::min<std::size_t>(width, fin.size()), '0') << fin;
            part.traces[c] = tr.str();
        }
    return part;
}

inline KTypePartition refine_k_types(const FiniteStructure& m, int k) {
    return joint_k_types({&m}, k);
}

// M and N satisfy the same k-variable sentences iff the joint stable
// partition realizes the same classes in both tuple spaces.
inline bool k_equivalent(const FiniteStructure& m, const FiniteStructure& n, int k) {
    KTypePartition part = joint_k_types({&m, &n}, k);
    return part.realized[0] == part.realized[1];
}

// L^k diagram of a subset: the class of every tuple over the base of length
// 1..k (short tuples padded by repeating the last entry), plus the classes
// the ambient structure realizes.  Class ids come from the ambient run that
// produced it, so diagrams are only comparable through a joint run.
struct DiagK {
    int k = 0;
    std::vector<int> base;                 // increasing elements of the subset
    std::map<Tuple, int> tuple_types;      // padded tuple (length k, ambient ids) -> class
    std::set<int> theory_classes;          // classes realized in the ambient structure
};

inline Tuple pad_tuple(const Tuple& t, int k) {
    if (t.empty() || static_cast<int>(t.size()) > k) throw std::invalid_argument("pad_tuple needs 1..k entries");
    Tuple out = t;
    while (static_cast<int>(out.size()) < k) out.push_back(out.back());
    return out;
}

namespace detail {

template <typename Fn>
inline void for_each_tuple_over(const std::vector<int>& base, int len, Fn&& fn) {
    Tuple t(len);
    std::vector<std::size_t> idx(len, 0);
    if (base.empty()) return;
    while (true) {
        for (int i = 0; i < len; ++i) t[i] = base[idx[i]];
        fn(t);
        int i = len - 1;
        while (i >= 0 && idx[i] + 1 == base.size()) idx[i--] = 0;
        if (i < 0) return;
        ++idx[i];
    }
}

}  // namespace detail

inline DiagK extract_diag_k_from(const KTypePartition& part, int structure, const std::set<int>& a) {
    DiagK d;
    d.k = part.k;
    d.base.assign(a.begin(), a.end());
    if (a.empty()) throw std::invalid_argument("diagram of an empty set");
    if (d.base.front() < 0 || d.base.back() >= part.sizes[structure])
        throw std::invalid_argument("subset element out of range");
    for (int len = 1; len <= part.k; ++len)
        detail::for_each_tuple_over(d.base, len, [&](const Tuple& t) {
            Tuple p = pad_tuple(t, part.k);
            d.tuple_types[p] = part.color_of(structure, p);
        });
    for (int c = 0; c < part.class_count; ++c)
        if (part.realized[structure][c]) d.theory_classes.insert(c);
    return d;
}

inline DiagK extract_diag_k(const FiniteStructure& m, const std::set<int>& a, int k) {
    KTypePartition part = refine_k_types(m, k);
    return extract_diag_k_from(part, 0, a);
}

// Diagram equality under a joint run of the two ambient structures: equal
// base sizes, equal realized theory classes, and the order-preserving
// correspondence of bases matches every padded tuple's class.
inline bool diag_k_equal(const FiniteStructure& m, const std::set<int>& a,
                         const FiniteStructure& n, const std::set<int>& b, int k) {
    if (a.size() != b.size()) return false;
    KTypePartition part = joint_k_types({&m, &n}, k);
    DiagK da = extract_diag_k_from(part, 0, a);
    DiagK db = extract_diag_k_from(part, 1, b);
    if (da.theory_classes != db.theory_classes) return false;
    std::map<int, int> to_b;
    for (std::size_t i = 0; i < da.base.size(); ++i) to_b[da.base[i]] = db.base[i];
    for (const auto& [t, c] : da.tuple_types) {
        Tuple img(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) img[i] = to_b[t[i]];
        auto it = db.tuple_types.find(img);
        if (it == db.tuple_types.end() || it->second != c) return false;
    }
    return true;
}

// A partial map preserves k-types when every tuple of length <= k over its
// domain (padded to length k) has the same joint class as its image.
inline bool color_preserving_partial_map(const FiniteStructure& m, const FiniteStructure& n,
                                         const PartialMap& f, int k) {
    if (f.size() == 0) return true;
    KTypePartition part = joint_k_types({&m, &n}, k);
    std::vector<int> dom;
    for (auto [s, t] : f.pairs()) {
        (void)t;
        dom.push_back(s);
    }
    bool ok = true;
    for (int len = 1; len <= k && ok; ++len)
        detail::for_each_tuple_over(dom, len, [&](const Tuple& t) {
            if (!ok) return;
            Tuple img(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) img[i] = f.at(t[i]);
            if (part.color_of(0, pad_tuple(t, k)) != part.color_of(1, pad_tuple(img, k))) ok = false;
        });
    return ok;
}

// Partition dump: `class <id> <trace-hash>` then `tuple <e...> <id>`, sorted.
inline std::string serialize_partition(const KTypePartition& part, int structure) {
    std::ostringstream out;
    char hex[32];
    for (int c = 0; c < part.class_count; ++c) {
        if (!part.realized[structure][c]) continue;
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a(part.traces[c])));
        out << "class " << c << " " << hex << "\n";
    }
    const int n = part.sizes[structure];
    const long long count = power_ll(n, part.k);
    for (long long r = 0; r < count; ++r) {
        out << "tuple";
        for (int e : tuple_of_rank(r, n, part.k)) out << " " << e;
        out << " " << part.coloring[structure][r] << "\n";
    }
    return out.str();
}

}  // namespace kfm
