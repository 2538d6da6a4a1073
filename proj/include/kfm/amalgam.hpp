#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kfm/refine.hpp"
#include "kfm/structure.hpp"
#include "kfm/tableau.hpp"

namespace kfm {

// One mixed-tuple round: the acted tuple (labels over the disjoint sum), the
// padded types of its two halves, the type committed to the whole product
// block, and the element identifications that commitment forced.
struct AmalgamStep {
    int split = 0;                           // front length t
    Tuple acted;                             // block-form tuple that triggered the round
    int front_type = -1;                     // eta0
    int back_type = -1;                      // eta1
    int chosen = -1;                         // alpha
    int candidates_tried = 0;                // includes the admissible one
    long long newly_typed = 0;               // tuples typed this round
    std::vector<std::pair<int, int>> merges; // identified label pairs, deduped
};

struct AmalgamResult {
    Tableau amalgam;
    PartialMap g0;                   // m0 element -> amalgam element, total on m0
    PartialMap g1;                   // m1 element -> amalgam element, total on m1
    std::vector<int> quotient_class; // disjoint-sum label -> amalgam element
    int sum_size = 0;                // labels before the quotient
    std::vector<AmalgamStep> log;
};

namespace detail {

struct UnionFind {
    std::vector<int> parent;

    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

// True iff no two distinct elements of the given side collapsed.
inline bool side_injective(UnionFind& uf, const std::vector<int>& side) {
    std::map<int, int> rep;
    for (int z : side) {
        auto [it, fresh] = rep.emplace(uf.find(z), z);
        if (!fresh && it->second != z) return false;
    }
    return true;
}

}  // namespace detail

// Glues two typed models over a common typed part.  emb0/emb1 send each
// element of `a` into m0/m1; both must preserve typing.  Works block by
// block: each untyped mixed tuple names a product of a front type over m0
// and a back type over m1, the first type whose two restrictions match and
// whose forced equalities keep both sides embedded is committed to the whole
// product and its permutation images, and the forced equalities accumulate
// into the congruence that the final quotient divides out.
inline AmalgamResult amalgamate(const Tableau& a, const Tableau& m0, const Tableau& m1, const TableauTheory& th,
                                const std::vector<int>& emb0, const std::vector<int>& emb1) {
    detail::validate_against_theory(a, th);
    detail::validate_against_theory(m0, th);
    detail::validate_against_theory(m1, th);
    detail::require_total(a, "the shared part");
    detail::require_total(m0, "the left model");
    detail::require_total(m1, "the right model");

    const int k = th.k;
    const int n0 = m0.size, n1 = m1.size, na = a.size;
    for (const auto* emb : {&emb0, &emb1}) {
        const Tableau& m = (emb == &emb0) ? m0 : m1;
        if (static_cast<int>(emb->size()) != na) throw std::invalid_argument("embedding domain size differs from the shared part");
        std::set<int> image;
        for (int x : *emb) {
            if (x < 0 || x >= m.size) throw std::invalid_argument("embedding image out of range");
            if (!image.insert(x).second) throw std::invalid_argument("embedding is not injective");
        }
    }
    for (const auto& [u, alpha] : a.typing) {
        Tuple v0(k), v1(k);
        for (int i = 0; i < k; ++i) {
            v0[i] = emb0[u[i]];
            v1[i] = emb1[u[i]];
        }
        if (m0.typing.at(v0) != alpha || m1.typing.at(v1) != alpha)
            throw std::invalid_argument("embedding does not preserve types on tuple " + detail::tuple_text(u));
    }

    // Disjoint sum over the shared part: m0 keeps its labels, m1's strict
    // elements follow, its shared elements reuse m0's copy.
    std::vector<int> zid1(n1, -1);
    for (int j = 0; j < na; ++j) zid1[emb1[j]] = emb0[j];
    int sum_size = n0;
    for (int y = 0; y < n1; ++y)
        if (zid1[y] < 0) zid1[y] = sum_size++;

    std::vector<int> side0(n0), side1;
    std::iota(side0.begin(), side0.end(), 0);
    for (int y = 0; y < n1; ++y) side1.push_back(zid1[y]);
    std::sort(side1.begin(), side1.end());

    std::map<Tuple, int> typing = m0.typing;
    for (const auto& [u, alpha] : m1.typing) {
        Tuple v(k);
        for (int i = 0; i < k; ++i) v[i] = zid1[u[i]];
        auto [it, fresh] = typing.emplace(std::move(v), alpha);
        if (!fresh && it->second != alpha)
            throw std::logic_error("the two sides type a shared tuple differently");
    }

    // Restriction table from exemplars: for each realized type, the padded
    // type of its length-t prefix and length-s suffix.  Both sides must tell
    // the same story wherever they overlap.
    const int N = th.type_count;
    std::vector<std::vector<int>> restrict_front(N, std::vector<int>(k, -1));
    std::vector<std::vector<int>> restrict_back(N, std::vector<int>(k, -1));
    auto record_restrictions = [&](const Tuple& u, int alpha) {
        for (int t = 1; t < k; ++t) {
            Tuple front(u.begin(), u.begin() + t);
            Tuple back(u.end() - (k - t), u.end());
            int ft = typing.at(pad_tuple(front, k));
            int bt = typing.at(pad_tuple(back, k));
            int& f = restrict_front[alpha][t];
            int& b = restrict_back[alpha][k - t];
            if (f < 0) f = ft;
            else if (f != ft)
                throw std::invalid_argument("inputs disagree about the prefix type of type " + std::to_string(alpha + 1));
            if (b < 0) b = bt;
            else if (b != bt)
                throw std::invalid_argument("inputs disagree about the suffix type of type " + std::to_string(alpha + 1));
        }
    };
    for (const auto& [u, alpha] : typing) record_restrictions(u, alpha);

    detail::UnionFind uf(sum_size);
    const auto perms = all_permutations(k);
    std::vector<std::string> perm_names;
    for (const auto& s : perms) perm_names.push_back(permutation_name(s));

    // Pools of side tuples by padded type, built on first use per length.
    std::map<int, std::vector<std::vector<Tuple>>> front_pool, back_pool;
    auto pool_for = [&](std::map<int, std::vector<std::vector<Tuple>>>& pool, const std::vector<int>& side, int len) ->
        const std::vector<std::vector<Tuple>>& {
        auto it = pool.find(len);
        if (it == pool.end()) {
            std::vector<std::vector<Tuple>> buckets(N);
            detail::for_each_tuple_over(side, len,
                                        [&](const Tuple& u) { buckets[typing.at(pad_tuple(u, k))].push_back(u); });
            it = pool.emplace(len, std::move(buckets)).first;
        }
        return it->second;
    };

    AmalgamResult result;
    std::vector<int> strict1;
    for (int z = n0; z < sum_size; ++z) strict1.push_back(z);

    auto process = [&](const Tuple& acted, int t) {
        AmalgamStep step;
        step.split = t;
        step.acted = acted;
        Tuple front(acted.begin(), acted.begin() + t);
        Tuple back(acted.begin() + t, acted.end());
        step.front_type = typing.at(pad_tuple(front, k));
        step.back_type = typing.at(pad_tuple(back, k));

        const auto& fronts = pool_for(front_pool, side0, t)[step.front_type];
        const auto& backs = pool_for(back_pool, side1, k - t)[step.back_type];

        std::vector<std::set<int>> fcol(t), bcol(k - t);
        for (const auto& u : fronts)
            for (int i = 0; i < t; ++i) fcol[i].insert(u[i]);
        for (const auto& u : backs)
            for (int j = 0; j < k - t; ++j) bcol[j].insert(u[j]);

        int chosen = -1;
        std::set<std::pair<int, int>> merges;
        for (int alpha = 0; alpha < N && chosen < 0; ++alpha) {
            if (restrict_front[alpha][t] != step.front_type || restrict_back[alpha][k - t] != step.back_type) continue;
            ++step.candidates_tried;
            std::set<std::pair<int, int>> trial_merges;
            const std::string& eq = th.eq_bits[alpha];
            int idx = 0;
            for (int i = 0; i < k; ++i)
                for (int j = i + 1; j < k; ++j) {
                    if (eq[idx] == '1' && i < t && j >= t)
                        for (int d : fcol[i])
                            for (int e : bcol[j - t]) trial_merges.insert({d, e});
                    ++idx;
                }
            detail::UnionFind trial = uf;
            for (const auto& [d, e] : trial_merges) trial.unite(d, e);
            if (detail::side_injective(trial, side0) && detail::side_injective(trial, side1)) {
                chosen = alpha;
                uf = std::move(trial);
                merges = std::move(trial_merges);
            }
        }
        if (chosen < 0)
            throw std::runtime_error("no admissible type for mixed tuple " + detail::tuple_text(acted) +
                                     " split at " + std::to_string(t));
        step.chosen = chosen;
        step.merges.assign(merges.begin(), merges.end());

        Tuple whole(k);
        for (const auto& f : fronts)
            for (const auto& b : backs) {
                std::copy(f.begin(), f.end(), whole.begin());
                std::copy(b.begin(), b.end(), whole.begin() + t);
                if (typing.emplace(whole, chosen).second) ++step.newly_typed;
                for (std::size_t p = 0; p < perms.size(); ++p) {
                    Tuple img = apply_permutation(whole, perms[p]);
                    if (typing.emplace(std::move(img), th.sigma_action(perm_names[p], chosen)).second)
                        ++step.newly_typed;
                }
            }
        result.log.push_back(std::move(step));
    };

    // Every untyped mixed tuple is a permutation image of a block-form one
    // (front in m0, back strictly in m1), and each round types whole
    // permutation orbits, so one sweep in block order covers everything.
    for (int t = 1; t < k; ++t) {
        if (strict1.empty()) break;
        detail::for_each_tuple_over(side0, t, [&](const Tuple& front) {
            detail::for_each_tuple_over(strict1, k - t, [&](const Tuple& back) {
                Tuple acted(front);
                acted.insert(acted.end(), back.begin(), back.end());
                if (!typing.count(acted)) process(acted, t);
            });
        });
    }
    {
        std::vector<int> all(sum_size);
        std::iota(all.begin(), all.end(), 0);
        detail::for_each_tuple_over(all, k, [&](const Tuple& u) {
            if (!typing.count(u)) throw std::logic_error("sweep left tuple " + detail::tuple_text(u) + " untyped");
        });
    }

    // Quotient by the accumulated congruence.
    result.sum_size = sum_size;
    result.quotient_class.assign(sum_size, -1);
    int csize = 0;
    for (int z = 0; z < sum_size; ++z)
        if (uf.find(z) == z) result.quotient_class[z] = csize++;
    for (int z = 0; z < sum_size; ++z) result.quotient_class[z] = result.quotient_class[uf.find(z)];

    result.amalgam.k = k;
    result.amalgam.size = csize;
    result.amalgam.sig = th.sig;
    for (const auto& [u, alpha] : typing) {
        Tuple v(k);
        for (int i = 0; i < k; ++i) v[i] = result.quotient_class[u[i]];
        auto [it, fresh] = result.amalgam.typing.emplace(std::move(v), alpha);
        if (!fresh && it->second != alpha)
            throw std::runtime_error("the forced identifications conflict with the typing on tuple " +
                                     detail::tuple_text(u) + "; the inputs do not amalgamate");
    }
    for (int x = 0; x < n0; ++x) result.g0.add(x, result.quotient_class[x]);
    for (int y = 0; y < n1; ++y) result.g1.add(y, result.quotient_class[zid1[y]]);
    return result;
}

}  // namespace kfm
