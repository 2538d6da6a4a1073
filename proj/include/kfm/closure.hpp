#pragma once

#include <set>
#include <stdexcept>
#include <vector>

#include "kfm/refine.hpp"
#include "kfm/structure.hpp"

namespace kfm {

// Closure operator on subsets of a structure's universe.  The trivial mode
// is the identity.  The counting mode adds an element a whenever at most
// `threshold` elements a' of the whole structure have the same k-type as a
// over every tuple of length <= k-1 drawn from the current set, iterating
// to a fixed point.  Extensive, idempotent and monotone in the base set.
struct ClosureConfig {
    enum class Mode { Trivial, KTypeCount };
    Mode mode = Mode::Trivial;
    int k = 2;
    int threshold = 1;

    static ClosureConfig trivial() { return {}; }
    static ClosureConfig counting(int k, int threshold = 1) {
        ClosureConfig cfg;
        cfg.mode = Mode::KTypeCount;
        cfg.k = k;
        cfg.threshold = threshold;
        return cfg;
    }
};

namespace detail {

// a ~ a' over B iff every tuple (a, b1..bj), j <= k-1, over B has the same
// class as (a', b1..bj) after padding.  Group elements by that profile.
inline std::vector<int> profile_group_counts(const KTypePartition& part, const std::set<int>& b) {
    const int n = part.sizes[0];
    const int k = part.k;
    std::vector<int> base(b.begin(), b.end());
    std::map<std::vector<int>, std::vector<int>> groups;
    for (int a = 0; a < n; ++a) {
        std::vector<int> profile;
        Tuple head{a};
        profile.push_back(part.color_of(0, pad_tuple(head, k)));
        for (int len = 1; len <= k - 1; ++len)
            for_each_tuple_over(base, len, [&](const Tuple& t) {
                Tuple full{a};
                full.insert(full.end(), t.begin(), t.end());
                profile.push_back(part.color_of(0, pad_tuple(full, k)));
            });
        groups[profile].push_back(a);
    }
    std::vector<int> count(n, 0);
    for (const auto& [profile, members] : groups)
        for (int a : members) count[a] = static_cast<int>(members.size());
    return count;
}

}  // namespace detail

inline std::set<int> k_closure(const FiniteStructure& m, const std::set<int>& b, const ClosureConfig& cfg) {
    for (int e : b)
        if (e < 0 || e >= m.size) throw std::invalid_argument("closure base element out of range");
    if (cfg.mode == ClosureConfig::Mode::Trivial) return b;
    if (cfg.threshold < 1) throw std::invalid_argument("closure threshold must be >= 1");
    KTypePartition part = refine_k_types(m, cfg.k);
    std::set<int> cur = b;
    while (true) {
        std::vector<int> count = detail::profile_group_counts(part, cur);
        std::set<int> next = cur;
        for (int a = 0; a < m.size; ++a)
            if (count[a] <= cfg.threshold) next.insert(a);
        if (next == cur) return cur;
        cur = std::move(next);
    }
}

}  // namespace kfm
