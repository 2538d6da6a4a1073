#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kfm/refine.hpp"
#include "kfm/structure.hpp"
#include "kfm/tableau.hpp"

namespace kfm {

namespace detail {

// Lex-least permutation image, with the permutations that fix the tuple.
struct Orbit {
    Tuple rep;
    std::vector<std::pair<Tuple, std::string>> images;  // distinct images with one witness permutation
};

}  // namespace detail

// Searches for a model of the full theory extending `a`, trying universe
// sizes |a|..max_size in order.  `a` must satisfy the universal axioms.
// Extension tuples are grouped into permutation orbits; each orbit picks one
// type for its least member, which forces the images' types.  Candidates are
// pruned by the equality diagram, stabilizer coherence, and pairwise
// substitution accessibility; surviving leaves face the full axiom check.
inline std::optional<Tableau> cap_search(const Tableau& a, const TableauTheory& th, int max_size) {
    detail::validate_against_theory(a, th);
    detail::require_total(a, "the base");
    if (max_size < a.size) throw std::invalid_argument("max size is smaller than the base");
    {
        AxiomReport base = check_axioms(a, th);
        if (!base.universal_pass())
            throw std::invalid_argument("the base breaks a universal axiom: " +
                                        std::string(axiom_name(!base.axiom[0].pass ? 0 : !base.axiom[1].pass ? 1
                                                               : !base.axiom[2].pass                         ? 2
                                                                                                             : 3)));
    }

    const int k = th.k;
    const int N = th.type_count;
    const auto perms = all_permutations(k);
    std::vector<std::string> names;
    for (const auto& s : perms) names.push_back(permutation_name(s));

    for (int n = a.size; n <= max_size; ++n) {
        // Orbits of tuples touching the new elements, least member first.
        std::vector<detail::Orbit> orbits;
        std::vector<std::vector<int>> candidates;
        const long long count = power_ll(n, k);
        bool feasible = true;
        for (long long r = 0; r < count && feasible; ++r) {
            Tuple u = tuple_of_rank(r, n, k);
            bool fresh = false;
            for (int e : u) fresh = fresh || e >= a.size;
            if (!fresh) continue;

            detail::Orbit orb;
            orb.rep = u;
            std::vector<std::string> stabilizer;
            std::map<Tuple, std::string> seen;
            bool least = true;
            for (std::size_t p = 0; p < perms.size() && least; ++p) {
                Tuple img = apply_permutation(u, perms[p]);
                if (img < u) least = false;
                if (img == u) stabilizer.push_back(names[p]);
                seen.emplace(std::move(img), names[p]);
            }
            if (!least) continue;
            for (auto& [img, name] : seen) orb.images.push_back({img, name});

            std::vector<int> cands;
            for (int alpha = 0; alpha < N; ++alpha) {
                if (!th.matches_equality(alpha, u)) continue;
                bool coherent = true;
                for (const auto& name : stabilizer) coherent = coherent && th.sigma_action(name, alpha) == alpha;
                if (coherent) cands.push_back(alpha);
            }
            if (cands.empty()) feasible = false;
            orbits.push_back(std::move(orb));
            candidates.push_back(std::move(cands));
        }
        if (!feasible) continue;

        Tableau work = a;
        work.size = n;
        std::map<Tuple, std::vector<std::pair<int, int>>> by_tail;  // tail -> (head, type)
        for (const auto& [u, alpha] : work.typing)
            by_tail[Tuple(u.begin() + 1, u.end())].push_back({u[0], alpha});

        // Depth-first over orbits; try() assigns one orbit or reports a clash.
        std::vector<std::pair<Tuple, Tuple>> undo_tail;  // (tail, full tuple) per assignment
        auto try_orbit = [&](const detail::Orbit& orb, int alpha, std::size_t& placed) -> bool {
            for (const auto& [img, name] : orb.images) {
                int beta = th.sigma_action(name, alpha);
                if (auto it = work.typing.find(img); it != work.typing.end()) {
                    if (it->second != beta) return false;
                    continue;
                }
                Tuple tail(img.begin() + 1, img.end());
                auto& entries = by_tail[tail];
                for (const auto& [head, gamma] : entries)
                    if (!th.acc(beta).count(gamma) || !th.acc(gamma).count(beta)) return false;
                work.typing.emplace(img, beta);
                entries.push_back({img[0], beta});
                undo_tail.push_back({std::move(tail), img});
                ++placed;
            }
            return true;
        };
        auto unwind = [&](std::size_t placed) {
            while (placed--) {
                auto& [tail, full] = undo_tail.back();
                by_tail[tail].pop_back();
                work.typing.erase(full);
                undo_tail.pop_back();
            }
        };

        std::optional<Tableau> found;
        auto dfs = [&](auto&& self, std::size_t at) -> bool {
            if (found) return true;
            if (at == orbits.size()) {
                AxiomReport rep = check_axioms(work, th);
                if (rep.all_pass()) {
                    found = work;
                    return true;
                }
                return false;
            }
            for (int alpha : candidates[at]) {
                std::size_t placed = 0;
                if (try_orbit(orbits[at], alpha, placed)) {
                    if (self(self, at + 1)) return true;
                    unwind(placed);
                } else {
                    unwind(placed);
                }
            }
            return false;
        };
        dfs(dfs, 0);
        if (found) return found;
    }
    return std::nullopt;
}

}  // namespace kfm
