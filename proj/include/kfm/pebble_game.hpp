#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "kfm/structure.hpp"

namespace kfm {

// Oracle for k-variable equivalence via the k-pebble game: compute the
// greatest family W of partial isomorphisms with at most k pairs that is
// closed under removing a pair and, below size k, under forth and back
// extension by one pair inside W.  The structures are equivalent iff the
// empty map survives.

namespace detail {

// Atom profile of an element pair; partial isomorphism of a pair set means
// every (domain, domain) pair agrees with its image profile, which covers
// all tuples over the domain for arities up to 2.  Higher arities fall back
// to the direct check.
struct PairProfiles {
    bool usable = false;
    std::vector<std::uint64_t> m, n;  // [a*size+b] -> profile bits
};

inline PairProfiles build_pair_profiles(const FiniteStructure& m, const FiniteStructure& n) {
    PairProfiles p;
    if (m.sig.max_arity() > 2) return p;
    int bits_needed = 1;
    for (const auto& rel : m.sig.relations) bits_needed += rel.arity == 1 ? 2 : 4;
    if (bits_needed > 64) return p;
    p.usable = true;
    auto fill = [](const FiniteStructure& s, std::vector<std::uint64_t>& out) {
        out.assign(static_cast<std::size_t>(s.size) * s.size, 0);
        for (int a = 0; a < s.size; ++a)
            for (int b = 0; b < s.size; ++b) {
                std::uint64_t bits = a == b ? 1u : 0u;
                int shift = 1;
                for (std::size_t r = 0; r < s.sig.relations.size(); ++r) {
                    if (s.sig.relations[r].arity == 1) {
                        if (s.holds(static_cast<int>(r), {a})) bits |= 1ull << shift;
                        if (s.holds(static_cast<int>(r), {b})) bits |= 1ull << (shift + 1);
                        shift += 2;
                    } else {
                        if (s.holds(static_cast<int>(r), {a, a})) bits |= 1ull << shift;
                        if (s.holds(static_cast<int>(r), {a, b})) bits |= 1ull << (shift + 1);
                        if (s.holds(static_cast<int>(r), {b, a})) bits |= 1ull << (shift + 2);
                        if (s.holds(static_cast<int>(r), {b, b})) bits |= 1ull << (shift + 3);
                        shift += 4;
                    }
                }
                out[static_cast<std::size_t>(a) * s.size + b] = bits;
            }
    };
    fill(m, p.m);
    fill(n, p.n);
    return p;
}

// Dense engine: positions are bit masks over pair codes a*|N|+b, so it
// requires |M|*|N| <= 64.  Deletions propagate through a worklist with
// support counters, giving near-linear time in the number of links.
inline bool pebble_game_dense(const FiniteStructure& m, const FiniteStructure& n, int k) {
    const int nm = m.size, nn = n.size;
    const PairProfiles prof = build_pair_profiles(m, n);

    std::vector<std::uint64_t> mask{0};
    std::vector<std::uint64_t> dom{0}, rng{0};
    std::vector<std::vector<int>> pair_list{{}};
    std::unordered_map<std::uint64_t, int> index;
    index.reserve(1024);
    index[0] = 0;

    auto compatible = [&](const std::vector<int>& pairs, int a, int b) {
        if (prof.usable) {
            for (int code : pairs) {
                int a2 = code / nn, b2 = code % nn;
                if (prof.m[static_cast<std::size_t>(a) * nm + a2] != prof.n[static_cast<std::size_t>(b) * nn + b2])
                    return false;
                if (prof.m[static_cast<std::size_t>(a2) * nm + a] != prof.n[static_cast<std::size_t>(b2) * nn + b])
                    return false;
            }
            return prof.m[static_cast<std::size_t>(a) * nm + a] == prof.n[static_cast<std::size_t>(b) * nn + b];
        }
        PartialMap f;
        for (int code : pairs) f.add(code / nn, code % nn);
        f.add(a, b);
        return is_partial_iso(m, n, f);
    };

    std::size_t level_begin = 0;
    for (int depth = 0; depth < k; ++depth) {
        std::size_t level_end = mask.size();
        for (std::size_t p = level_begin; p < level_end; ++p) {
            std::uint64_t pm = mask[p];
            std::uint64_t pd = dom[p], pr = rng[p];
            for (int a = 0; a < nm; ++a) {
                if (pd & (1ull << a)) continue;
                for (int b = 0; b < nn; ++b) {
                    if (pr & (1ull << b)) continue;
                    int code = a * nn + b;
                    std::uint64_t child = pm | (1ull << code);
                    if (index.count(child)) continue;
                    if (!compatible(pair_list[p], a, b)) continue;
                    index[child] = static_cast<int>(mask.size());
                    mask.push_back(child);
                    dom.push_back(pd | (1ull << a));
                    rng.push_back(pr | (1ull << b));
                    auto pl = pair_list[p];
                    pl.push_back(code);
                    pair_list.push_back(std::move(pl));
                }
            }
        }
        level_begin = level_end;
    }

    const int count = static_cast<int>(mask.size());
    std::vector<char> alive(count, 1);
    std::vector<int> parent(static_cast<std::size_t>(count) * k, -1);
    std::vector<std::vector<int>> children(count);
    std::vector<int> forth(static_cast<std::size_t>(count) * nm, 0);
    std::vector<int> back(static_cast<std::size_t>(count) * nn, 0);

    for (int q = 1; q < count; ++q) {
        const auto& pl = pair_list[q];
        for (std::size_t i = 0; i < pl.size(); ++i) {
            std::uint64_t rest = mask[q] & ~(1ull << pl[i]);
            int p = index.at(rest);
            parent[static_cast<std::size_t>(q) * k + i] = p;
            children[p].push_back(q);
            ++forth[static_cast<std::size_t>(p) * nm + pl[i] / nn];
            ++back[static_cast<std::size_t>(p) * nn + pl[i] % nn];
        }
    }

    std::vector<int> stack;
    auto kill = [&](int p) {
        if (!alive[p]) return;
        alive[p] = 0;
        stack.push_back(p);
    };
    for (int p = 0; p < count; ++p) {
        if (static_cast<int>(pair_list[p].size()) == k) continue;
        for (int a = 0; a < nm; ++a)
            if (!(dom[p] & (1ull << a)) && forth[static_cast<std::size_t>(p) * nm + a] == 0) kill(p);
        for (int b = 0; b < nn; ++b)
            if (!(rng[p] & (1ull << b)) && back[static_cast<std::size_t>(p) * nn + b] == 0) kill(p);
    }
    while (!stack.empty()) {
        int q = stack.back();
        stack.pop_back();
        if (!alive[0]) return false;
        for (int c : children[q]) kill(c);
        const auto& pl = pair_list[q];
        for (std::size_t i = 0; i < pl.size(); ++i) {
            int p = parent[static_cast<std::size_t>(q) * k + i];
            int a = pl[i] / nn, b = pl[i] % nn;
            if (--forth[static_cast<std::size_t>(p) * nm + a] == 0 && alive[p] && !(dom[p] & (1ull << a))) kill(p);
            if (--back[static_cast<std::size_t>(p) * nn + b] == 0 && alive[p] && !(rng[p] & (1ull << b))) kill(p);
        }
    }
    return alive[0] != 0;
}

// Generic engine for universes too large for the dense pair encoding.
inline bool pebble_game_generic(const FiniteStructure& m, const FiniteStructure& n, int k) {
    struct Pos {
        std::vector<std::pair<int, int>> pairs;
        bool alive = true;
    };
    std::map<std::vector<std::pair<int, int>>, int> index;
    std::vector<Pos> positions;
    positions.push_back(Pos{});
    index[{}] = 0;

    std::size_t level_begin = 0;
    for (int depth = 0; depth < k; ++depth) {
        std::size_t level_end = positions.size();
        for (std::size_t p = level_begin; p < level_end; ++p)
            for (int a = 0; a < m.size; ++a) {
                if (std::any_of(positions[p].pairs.begin(), positions[p].pairs.end(),
                                [&](auto pr) { return pr.first == a; }))
                    continue;
                for (int b = 0; b < n.size; ++b) {
                    if (std::any_of(positions[p].pairs.begin(), positions[p].pairs.end(),
                                    [&](auto pr) { return pr.second == b; }))
                        continue;
                    auto pairs = positions[p].pairs;
                    pairs.insert(std::lower_bound(pairs.begin(), pairs.end(), std::make_pair(a, b)),
                                 {a, b});
                    if (index.count(pairs)) continue;
                    PartialMap f;
                    for (auto [x, y] : pairs) f.add(x, y);
                    if (!is_partial_iso(m, n, f)) continue;
                    index[pairs] = static_cast<int>(positions.size());
                    positions.push_back(Pos{std::move(pairs), true});
                }
            }
        level_begin = level_end;
    }

    auto alive_at = [&](const std::vector<std::pair<int, int>>& pairs) {
        auto it = index.find(pairs);
        return it != index.end() && positions[it->second].alive;
    };

    bool changed = true;
    while (changed) {
        changed = false;
        for (auto& pos : positions) {
            if (!pos.alive) continue;
            bool ok = true;
            for (std::size_t drop = 0; drop < pos.pairs.size() && ok; ++drop) {
                auto rest = pos.pairs;
                rest.erase(rest.begin() + static_cast<long>(drop));
                if (!alive_at(rest)) ok = false;
            }
            if (ok && static_cast<int>(pos.pairs.size()) < k) {
                auto extended_alive = [&](int a, int b) {
                    auto pairs = pos.pairs;
                    auto at = std::lower_bound(pairs.begin(), pairs.end(), std::make_pair(a, b));
                    pairs.insert(at, {a, b});
                    return alive_at(pairs);
                };
                for (int a = 0; a < m.size && ok; ++a) {
                    if (std::any_of(pos.pairs.begin(), pos.pairs.end(), [&](auto pr) { return pr.first == a; }))
                        continue;
                    bool found = false;
                    for (int b = 0; b < n.size && !found; ++b) found = extended_alive(a, b);
                    if (!found) ok = false;
                }
                for (int b = 0; b < n.size && ok; ++b) {
                    if (std::any_of(pos.pairs.begin(), pos.pairs.end(), [&](auto pr) { return pr.second == b; }))
                        continue;
                    bool found = false;
                    for (int a = 0; a < m.size && !found; ++a) found = extended_alive(a, b);
                    if (!found) ok = false;
                }
            }
            if (!ok) {
                pos.alive = false;
                changed = true;
            }
        }
        if (!positions[0].alive) return false;
    }
    return true;
}

}  // namespace detail

inline bool pebble_game_equivalent(const FiniteStructure& m, const FiniteStructure& n, int k,
                                   long long position_cap = 5'000'000) {
    if (!(m.sig == n.sig)) throw std::invalid_argument("pebble game requires equal signatures");
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (power_ll(std::max(1, m.size) * std::max(1, n.size), k) > position_cap)
        throw std::invalid_argument("pebble game position cap exceeded");
    if (static_cast<long long>(m.size) * n.size <= 64) return detail::pebble_game_dense(m, n, k);
    return detail::pebble_game_generic(m, n, k);
}

}  // namespace kfm
