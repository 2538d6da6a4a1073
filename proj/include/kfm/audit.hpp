#pragma once

#include <algorithm>
#include <bit>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kfm/closure.hpp"
#include "kfm/invariant.hpp"
#include "kfm/program.hpp"
#include "kfm/refine.hpp"
#include "kfm/structure.hpp"

namespace kfm {

namespace detail {

// Joint k-type preservation over every k-tuple of the map's domain, both
// sides read in the same world.
inline bool colors_preserved(const KTypePartition& part, const PartialMap& f, int k) {
    std::vector<int> dom;
    for (auto [s, t] : f.pairs()) dom.push_back(s);
    if (dom.empty()) return true;
    Tuple t(k), img(k);
    std::vector<std::size_t> idx(k, 0);
    while (true) {
        for (int i = 0; i < k; ++i) {
            t[i] = dom[idx[i]];
            img[i] = f.at(t[i]);
        }
        if (part.color_of(0, t) != part.color_of(0, img)) return false;
        int pos = k - 1;
        while (pos >= 0 && idx[pos] + 1 == dom.size()) idx[pos--] = 0;
        if (pos < 0) break;
        ++idx[pos];
    }
    return true;
}

inline bool maps_to(const PartialMap& g, int y) {
    for (auto [s, t] : g.pairs())
        if (t == y) return true;
    return false;
}

inline bool extend_search(const KTypePartition& part, int k, PartialMap& g,
                          const std::vector<int>& from, const std::vector<int>& to,
                          std::size_t next) {
    while (next < from.size() && g.defined(from[next])) ++next;
    if (next == from.size()) return true;
    for (int y : to) {
        if (maps_to(g, y)) continue;
        PartialMap trial = g;
        trial.add(from[next], y);
        if (!colors_preserved(part, trial, k)) continue;
        if (extend_search(part, k, trial, from, to, next + 1)) {
            g = trial;
            return true;
        }
    }
    return false;
}

}  // namespace detail

// Bijection between the two sorted sets extending f and preserving joint
// k-types of the world; first witness in increasing element order.
inline std::optional<PartialMap> extend_elementary(const FiniteStructure& w, int k,
                                                   const PartialMap& f, const std::vector<int>& from,
                                                   const std::vector<int>& to) {
    if (from.size() != to.size()) return std::nullopt;
    for (auto [s, t] : f.pairs()) {
        if (!std::binary_search(from.begin(), from.end(), s))
            throw std::invalid_argument("map domain outside the source set");
        if (!std::binary_search(to.begin(), to.end(), t))
            throw std::invalid_argument("map range outside the target set");
    }
    KTypePartition part = refine_k_types(w, k);
    PartialMap g = f;
    if (!detail::colors_preserved(part, g, k)) return std::nullopt;
    if (detail::extend_search(part, k, g, from, to, 0)) return g;
    return std::nullopt;
}

struct GenuinenessRecord {
    std::vector<int> subset;
    bool complete = false;  // nothing requests attention
    bool models = false;    // invariant matches the reference
};

struct GenuinenessReport {
    int checked = 0;
    std::vector<GenuinenessRecord> mismatches;

    bool genuine() const { return mismatches.empty(); }
};

// Sweeps every nonempty closed subset up to the size bound: a genuine program
// is complete exactly on the substructures whose invariant matches the
// reference.
inline GenuinenessReport audit_genuineness(const FiniteStructure& w, const ProgramSpec& spec,
                                           const ClosureConfig& cfg, int k,
                                           const InvariantStructure& reference, int max_size) {
    if (w.size > 20) throw std::invalid_argument("world too large for the subset sweep");
    GenuinenessReport rep;
    for (std::uint32_t mask = 1; mask < (1u << w.size); ++mask) {
        if (std::popcount(mask) > max_size) continue;
        std::set<int> s;
        for (int e = 0; e < w.size; ++e)
            if (mask & (1u << e)) s.insert(e);
        if (k_closure(w, s, cfg) != s) continue;
        InducedSubstructure sub = induced_substructure(w, s);
        GenuinenessRecord rec;
        rec.subset.assign(s.begin(), s.end());
        rec.complete = requests_attention(sub.structure, spec).empty();
        rec.models = invariants_equal(build_invariant(sub.structure, k), reference);
        ++rep.checked;
        if (rec.complete != rec.models) rep.mismatches.push_back(std::move(rec));
    }
    return rep;
}

struct InvarianceAudit {
    std::vector<int> result_a, result_b;  // final chain sets of the two runs
    bool extended = false;
    PartialMap witness;  // meaningful only when extended
};

// Weak invariance probe: evaluates both starts and searches a joint-type
// preserving bijection of the results extending f. The probe is evidence,
// not proof: f itself should already preserve joint k-types.
inline InvarianceAudit audit_weak_invariance(const FiniteStructure& w, const ProgramSpec& spec,
                                             const CommandTable& commands, const ClosureConfig& cfg,
                                             int k, const std::set<int>& a, const std::set<int>& b,
                                             const PartialMap& f) {
    RunTrace ra = eval_star(a, spec, commands, w, cfg);
    RunTrace rb = eval_star(b, spec, commands, w, cfg);
    InvarianceAudit audit;
    audit.result_a = ra.chain.back();
    audit.result_b = rb.chain.back();
    auto g = extend_elementary(w, k, f, audit.result_a, audit.result_b);
    if (g) {
        audit.extended = true;
        audit.witness = *g;
    }
    return audit;
}

namespace detail {

inline bool automorphism_search(const FiniteStructure& w, const KTypePartition& part, int k,
                                PartialMap& g, const std::vector<char>& constrained,
                                const std::set<int>& target, int next) {
    while (next < w.size && g.defined(next)) ++next;
    if (next == w.size) return is_partial_iso(w, w, g);
    for (int y = 0; y < w.size; ++y) {
        if (maps_to(g, y)) continue;
        if (constrained[next] && !target.count(y)) continue;
        PartialMap trial = g;
        trial.add(next, y);
        if (!colors_preserved(part, trial, k)) continue;
        if (automorphism_search(w, part, k, trial, constrained, target, next + 1)) {
            g = trial;
            return true;
        }
    }
    return false;
}

}  // namespace detail

// World automorphism fixing a pointwise that carries eval(a) into eval(b);
// a must be contained in b. First witness in increasing element order.
inline std::optional<PartialMap> audit_result_embedding(const FiniteStructure& w,
                                                        const ProgramSpec& spec,
                                                        const CommandTable& commands,
                                                        const ClosureConfig& cfg, int k,
                                                        const std::set<int>& a,
                                                        const std::set<int>& b) {
    for (int e : a)
        if (!b.count(e)) throw std::invalid_argument("a must be contained in b");
    RunTrace ra = eval_star(a, spec, commands, w, cfg);
    RunTrace rb = eval_star(b, spec, commands, w, cfg);
    std::vector<char> constrained(w.size, 0);
    for (int e : ra.chain.back()) constrained[e] = 1;
    std::set<int> target(rb.chain.back().begin(), rb.chain.back().end());
    KTypePartition part = refine_k_types(w, k);
    PartialMap g;
    for (int e : a) g.add(e, e);
    if (!detail::colors_preserved(part, g, k)) return std::nullopt;
    if (detail::automorphism_search(w, part, k, g, constrained, target, 0)) return g;
    return std::nullopt;
}

}  // namespace kfm
