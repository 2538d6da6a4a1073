#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kfm/closure.hpp"
#include "kfm/dag.hpp"
#include "kfm/program.hpp"
#include "kfm/refine.hpp"
#include "kfm/structure.hpp"

namespace kfm {

// Layered activation graph of one evaluation step. Vertex (t, a-bar) has id
// t * tuple_count + rank of a-bar over the set's elements; layers up to
// theta_layers carry the simultaneous test fixed points, the rest the active
// relation. Every vertex copies forward; forcing edges witness activations.
struct InductionGraph {
    Dag g;
    int r = 0;
    int layers = 0;
    int theta_layers = 0;       // shared test stabilization index
    std::vector<int> universe;  // world ids, increasing
    long long tuple_count = 0;

    int local_index(int world_elem) const {
        auto it = std::lower_bound(universe.begin(), universe.end(), world_elem);
        if (it == universe.end() || *it != world_elem)
            throw std::invalid_argument("element is not in the graph universe");
        return static_cast<int>(it - universe.begin());
    }

    int vertex(int layer, const Tuple& world_tuple) const {
        if (layer < 0 || layer >= layers) throw std::out_of_range("layer out of range");
        if (static_cast<int>(world_tuple.size()) != r) throw std::invalid_argument("tuple arity mismatch");
        Tuple local(world_tuple.size());
        for (std::size_t i = 0; i < world_tuple.size(); ++i) local[i] = local_index(world_tuple[i]);
        return static_cast<int>(layer * tuple_count +
                                rank_of_tuple(local, static_cast<int>(universe.size())));
    }

    int layer_at(int v) const { return static_cast<int>(v / tuple_count); }

    Tuple tuple_at(int v) const {
        Tuple local = tuple_of_rank(v % tuple_count, static_cast<int>(universe.size()), r);
        for (int& e : local) e = universe[e];
        return local;
    }
};

inline InductionGraph build_induction_graph(const FiniteStructure& w, const std::vector<int>& a_set,
                                            const ProgramSpec& spec, const ClosureConfig& cfg) {
    std::set<int> elems(a_set.begin(), a_set.end());
    InducedSubstructure local = induced_substructure(w, elems);
    const int n = local.structure.size;

    std::vector<StageSequence> theta_stages;
    int e_tests = 0;
    for (const auto& th : spec.theta) {
        theta_stages.push_back(ifp_stages(local.structure, th));
        e_tests = std::max(e_tests, theta_stages.back().stabilization_index);
    }
    const std::string sigma = sigma_of(local.structure, spec);
    auto it = spec.sigma_rules.find(sigma);
    if (it == spec.sigma_rules.end())
        throw std::runtime_error("no sigma rule for test vector " + sigma);
    StageSequence psi = ifp_stages(local.structure, it->second.psi);
    const int e_active = psi.stabilization_index;

    InductionGraph ig;
    ig.r = spec.r;
    ig.theta_layers = e_tests;
    ig.layers = e_tests + e_active + 1;
    ig.universe.assign(elems.begin(), elems.end());
    ig.tuple_count = power_ll(n, spec.r);

    const long long tc = ig.tuple_count;
    std::vector<std::pair<int, int>> edges;
    for (int t = 0; t + 1 < ig.layers; ++t)
        for (long long i = 0; i < tc; ++i)
            edges.push_back({static_cast<int>(t * tc + i), static_cast<int>((t + 1) * tc + i)});
    auto add_forcing = [&](int t, const std::set<std::pair<Tuple, Tuple>>& triples) {
        for (const auto& [b, a] : triples)
            edges.push_back({static_cast<int>(t * tc + rank_of_tuple(b, n)),
                             static_cast<int>((t + 1) * tc + rank_of_tuple(a, n))});
    };
    for (int t = 0; t < e_tests; ++t)
        for (std::size_t i = 0; i < spec.theta.size(); ++i) {
            const auto& stages = theta_stages[i].stages;
            const std::set<Tuple>& stage = stages[std::min<std::size_t>(t, stages.size() - 1)];
            add_forcing(t, forcing_triples(local.structure, stage, spec.theta[i], cfg));
        }
    for (int t = 0; t < e_active; ++t)
        add_forcing(e_tests + t, forcing_triples(local.structure, psi.stages[t], it->second.psi, cfg));

    ig.g = Dag(static_cast<int>(ig.layers * tc), std::move(edges));
    return ig;
}

// Pruned construction graph of a run: one layer of r-tuple vertices per chain
// set, edges by range equality or by a forcing path through the step's
// induction graph into a response closure. Labels record predecessor trees.
struct ConstructionGraph {
    Dag g;
    int r = 0;
    FiniteStructure world;
    std::vector<std::vector<int>> layer_sets;  // layer -> elements, world ids
    std::vector<int> first_vertex;             // layer -> first vertex id
    std::vector<int> ig_layers;                // per step: induction graph depth
    std::vector<std::string> labels;

    int layers() const { return static_cast<int>(layer_sets.size()); }

    int layer_of(int v) const {
        if (v < 0 || v >= g.size) throw std::out_of_range("vertex out of range");
        auto it = std::upper_bound(first_vertex.begin(), first_vertex.end(), v);
        return static_cast<int>(it - first_vertex.begin()) - 1;
    }

    int vertex(int layer, const Tuple& world_tuple) const {
        if (layer < 0 || layer >= layers()) throw std::out_of_range("layer out of range");
        if (static_cast<int>(world_tuple.size()) != r) throw std::invalid_argument("tuple arity mismatch");
        const std::vector<int>& set = layer_sets[layer];
        Tuple local(world_tuple.size());
        for (std::size_t i = 0; i < world_tuple.size(); ++i) {
            auto it = std::lower_bound(set.begin(), set.end(), world_tuple[i]);
            if (it == set.end() || *it != world_tuple[i])
                throw std::invalid_argument("element is not in the layer set");
            local[i] = static_cast<int>(it - set.begin());
        }
        return first_vertex[layer] +
               static_cast<int>(rank_of_tuple(local, static_cast<int>(set.size())));
    }

    Tuple tuple_at(int v) const {
        const int layer = layer_of(v);
        const std::vector<int>& set = layer_sets[layer];
        Tuple local = tuple_of_rank(v - first_vertex[layer], static_cast<int>(set.size()), r);
        for (int& e : local) e = set[e];
        return local;
    }

    const std::vector<int>& base() const { return layer_sets.front(); }
};

namespace detail {

inline std::vector<int> sorted_range(const Tuple& t) {
    std::vector<int> s(t.begin(), t.end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

}  // namespace detail

inline ConstructionGraph build_construction_graph(const RunTrace& trace, const ProgramSpec& spec,
                                                  const CommandTable& commands,
                                                  const ClosureConfig& cfg) {
    ConstructionGraph cg;
    cg.r = spec.r;
    cg.world = trace.world;
    cg.layer_sets = trace.chain;
    cg.first_vertex.resize(cg.layer_sets.size());
    int total = 0;
    for (std::size_t i = 0; i < cg.layer_sets.size(); ++i) {
        cg.first_vertex[i] = total;
        total += static_cast<int>(power_ll(static_cast<int>(cg.layer_sets[i].size()), spec.r));
    }

    std::vector<std::pair<int, int>> cg_edges;
    for (std::size_t step = 0; step < trace.steps.size(); ++step) {
        const RunStep& rec = trace.steps[step];
        commands.rule_for(rec.sigma, rec.pi_index);  // trace and table must agree
        InductionGraph ig = build_induction_graph(trace.world, trace.chain[step], spec, cfg);
        cg.ig_layers.push_back(ig.layers);

        const std::vector<int>& lower = cg.layer_sets[step];
        const std::vector<int>& upper = cg.layer_sets[step + 1];
        const int nl = static_cast<int>(lower.size());
        const int nu = static_cast<int>(upper.size());
        const long long cl = power_ll(nl, spec.r);
        const long long cu = power_ll(nu, spec.r);

        // response closures: request vertex in the last layer -> admitted
        // upper tuples, everything in world ids
        std::map<int, std::set<int>> star_targets;  // ig last-layer rank -> upper local ranks
        std::map<std::vector<int>, std::set<int>> closure_memo;
        for (const auto& resp : rec.responses) {
            std::set<int> seed;
            for (int e : resp.chosen) seed.insert(e);
            for (int e : resp.request) seed.insert(e);
            std::set<int> admitted = k_closure(trace.world, seed, cfg);
            Tuple local_req(resp.request.size());
            for (std::size_t i = 0; i < resp.request.size(); ++i)
                local_req[i] = ig.local_index(resp.request[i]);
            std::set<int>& targets = star_targets[static_cast<int>(rank_of_tuple(local_req, nl))];
            for (long long b = 0; b < cu; ++b) {
                Tuple t = tuple_of_rank(b, nu, spec.r);
                bool inside = true;
                for (int& e : t) {
                    e = upper[e];
                    if (!admitted.count(e)) inside = false;
                }
                if (inside) targets.insert(static_cast<int>(b));
            }
        }

        // forward reach from every base vertex of the induction graph to its
        // last layer, then through the response edges
        const long long last_base = (ig.layers - 1) * ig.tuple_count;
        std::vector<std::set<int>> star_of(cl);
        for (long long a = 0; a < cl; ++a) {
            std::vector<char> seen(ig.g.size, 0);
            std::vector<int> queue = {static_cast<int>(a)};
            seen[a] = 1;
            while (!queue.empty()) {
                int v = queue.back();
                queue.pop_back();
                if (v >= last_base) {
                    auto it = star_targets.find(static_cast<int>(v - last_base));
                    if (it != star_targets.end()) star_of[a].insert(it->second.begin(), it->second.end());
                }
                for (int nxt : ig.g.out[v])
                    if (!seen[nxt]) {
                        seen[nxt] = 1;
                        queue.push_back(nxt);
                    }
            }
        }

        std::map<std::vector<int>, std::vector<int>> upper_by_range;
        for (long long b = 0; b < cu; ++b) {
            Tuple t = tuple_of_rank(b, nu, spec.r);
            for (int& e : t) e = upper[e];
            upper_by_range[detail::sorted_range(t)].push_back(static_cast<int>(b));
        }

        for (long long a = 0; a < cl; ++a) {
            Tuple ta = tuple_of_rank(a, nl, spec.r);
            for (int& e : ta) e = lower[e];
            const int from = cg.first_vertex[step] + static_cast<int>(a);
            std::set<int> heads;
            auto same = upper_by_range.find(detail::sorted_range(ta));
            if (same != upper_by_range.end()) heads.insert(same->second.begin(), same->second.end());
            const std::vector<int> ra = detail::sorted_range(ta);
            for (int b : star_of[a]) {
                if (heads.count(b)) continue;
                Tuple tb = tuple_of_rank(b, nu, spec.r);
                for (int& e : tb) e = upper[e];
                auto mem = closure_memo.find(detail::sorted_range(tb));
                if (mem == closure_memo.end()) {
                    std::set<int> seed(tb.begin(), tb.end());
                    mem = closure_memo.emplace(detail::sorted_range(tb), k_closure(trace.world, seed, cfg)).first;
                }
                bool within = true;
                for (int e : ra)
                    if (!mem->second.count(e)) within = false;
                if (within) heads.insert(b);
            }
            for (int b : heads) cg_edges.push_back({from, cg.first_vertex[step + 1] + b});
        }
    }

    cg.g = Dag(total, std::move(cg_edges));

    cg.labels.resize(total);
    const long long base_count = power_ll(static_cast<int>(cg.layer_sets[0].size()), spec.r);
    for (long long v = 0; v < base_count; ++v) {
        Tuple t = cg.tuple_at(static_cast<int>(v));
        std::ostringstream out;
        out << "(";
        for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << "(0 " << t[i] << ")";
        out << ")";
        cg.labels[v] = out.str();
    }
    for (int v = static_cast<int>(base_count); v < total; ++v) {
        const int layer = cg.layer_of(v);
        std::ostringstream out;
        out << "(";
        bool leading = true;
        for (int p : cg.g.in[v]) {
            out << (leading ? "" : " ") << "(" << layer << " " << cg.labels[p] << ")";
            leading = false;
        }
        out << ")";
        cg.labels[v] = out.str();
    }
    return cg;
}

// Dag file lines plus one label line per vertex; vertex names are
// s<layer>:<t0>,<t1>,..
inline std::string serialize_cg(const ConstructionGraph& cg) {
    NamedDag nd;
    nd.g = cg.g;
    for (int v = 0; v < cg.g.size; ++v) {
        std::ostringstream name;
        name << "s" << cg.layer_of(v) << ":";
        Tuple t = cg.tuple_at(v);
        for (std::size_t i = 0; i < t.size(); ++i) name << (i ? "," : "") << t[i];
        nd.names.push_back(name.str());
        nd.index[nd.names.back()] = v;
    }
    std::string out = serialize_dag(nd);
    std::ostringstream rest;
    for (int v = 0; v < cg.g.size; ++v) rest << "label " << nd.names[v] << " " << cg.labels[v] << "\n";
    return out + rest.str();
}

// Hereditary descendants: forward reachability from the base-layer vertices
// whose coordinates all lie in x.
inline std::vector<int> hdesc(const ConstructionGraph& cg, const std::set<int>& x) {
    const std::vector<int>& base = cg.base();
    for (int e : x)
        if (!std::binary_search(base.begin(), base.end(), e))
            throw std::invalid_argument("hdesc element is not in the base set");
    std::vector<int> seeds;
    const long long count = power_ll(static_cast<int>(base.size()), cg.r);
    for (long long v = 0; v < count; ++v) {
        Tuple t = tuple_of_rank(v, static_cast<int>(base.size()), cg.r);
        bool inside = true;
        for (int e : t)
            if (!x.count(base[e])) inside = false;
        if (inside) seeds.push_back(static_cast<int>(v));
    }
    return descendants(cg.g, seeds);
}

namespace detail {

inline std::vector<int> base_block(const ConstructionGraph& cg, const std::set<int>& elems) {
    const std::vector<int>& base = cg.base();
    for (int e : elems)
        if (!std::binary_search(base.begin(), base.end(), e))
            throw std::invalid_argument("element is not in the base set");
    std::vector<int> block;
    const long long count = power_ll(static_cast<int>(base.size()), cg.r);
    for (long long v = 0; v < count; ++v) {
        Tuple t = tuple_of_rank(v, static_cast<int>(base.size()), cg.r);
        bool inside = true;
        for (int e : t)
            if (!elems.count(base[e])) inside = false;
        if (inside) block.push_back(static_cast<int>(v));
    }
    return block;
}

}  // namespace detail

// Local separation of a from b over c inside the run's base set: for every
// closed interpolant between c and closure(b JOIN c), the base tuples over a
// are d-separated from those over b by the hereditary descendants of the
// interpolant's closure. The sweep is exponential in the closure gap; limit
// guards it.
inline bool locally_separated(const ConstructionGraph& cg, const std::set<int>& a,
                              const std::set<int>& b, const std::set<int>& c,
                              const ClosureConfig& cfg, int limit = 12) {
    const std::vector<int> xs = detail::base_block(cg, a);
    const std::vector<int> ys = detail::base_block(cg, b);
    std::set<int> bc = b;
    bc.insert(c.begin(), c.end());
    for (int e : c)
        if (!std::binary_search(cg.base().begin(), cg.base().end(), e))
            throw std::invalid_argument("element is not in the base set");
    const std::set<int> closed_bc = k_closure(cg.world, bc, cfg);
    std::vector<int> extra;
    for (int e : closed_bc)
        if (!c.count(e)) extra.push_back(e);
    if (static_cast<int>(extra.size()) > limit)
        throw std::invalid_argument("interpolant sweep over " + std::to_string(extra.size()) +
                                    " elements exceeds the limit");
    std::set<std::set<int>> seen;
    for (std::uint64_t mask = 0; mask < (1ull << extra.size()); ++mask) {
        std::set<int> cprime = c;
        for (std::size_t i = 0; i < extra.size(); ++i)
            if (mask & (1ull << i)) cprime.insert(extra[i]);
        std::set<int> closed = k_closure(cg.world, cprime, cfg);
        if (!seen.insert(closed).second) continue;
        if (!d_separated(cg.g, xs, ys, hdesc(cg, closed))) return false;
    }
    return true;
}

// A tuple type over parameters: realizations in the ambient base set are the
// tuples whose joint color with the parameters lies in the given classes.
struct TupleTypeSpec {
    int length = 0;
    std::vector<int> params;  // world ids, the enumeration the colors refer to
    std::set<int> colors;
};

// Deviation membership: the ambient run realizes the type, and no realization
// separated from d over the parameter set stays separated from d over c.
inline bool deviation_member(const ConstructionGraph& cg, const TupleTypeSpec& pi,
                             const std::set<int>& c, const std::set<int>& d,
                             const ClosureConfig& cfg, int limit = 12) {
    if (pi.length < 1) throw std::invalid_argument("type length must be positive");
    const std::vector<int>& base = cg.base();
    std::set<int> ambient(base.begin(), base.end());
    for (int e : d)
        if (!ambient.count(e)) throw std::invalid_argument("element is not in the base set");
    InducedSubstructure amb = induced_substructure(cg.world, ambient);
    const int joint = pi.length + static_cast<int>(pi.params.size());
    KTypePartition part = refine_k_types(amb.structure, joint);
    for (int color : pi.colors)
        if (color < 0 || color >= part.class_count)
            throw std::invalid_argument("type color out of range");
    Tuple par_local(pi.params.size());
    for (std::size_t i = 0; i < pi.params.size(); ++i) {
        auto it = std::lower_bound(base.begin(), base.end(), pi.params[i]);
        if (it == base.end() || *it != pi.params[i])
            throw std::invalid_argument("parameter is not in the base set");
        par_local[i] = static_cast<int>(it - base.begin());
    }
    std::set<int> param_set(pi.params.begin(), pi.params.end());

    bool realized = false;
    const long long count = power_ll(static_cast<int>(base.size()), pi.length);
    for (long long rank = 0; rank < count; ++rank) {
        Tuple local = tuple_of_rank(rank, static_cast<int>(base.size()), pi.length);
        Tuple joint_tuple = local;
        joint_tuple.insert(joint_tuple.end(), par_local.begin(), par_local.end());
        if (!pi.colors.count(part.color_of(0, joint_tuple))) continue;
        realized = true;
        std::set<int> a_set;
        for (int e : local) a_set.insert(base[e]);
        if (locally_separated(cg, a_set, d, param_set, cfg, limit) &&
            locally_separated(cg, a_set, d, c, cfg, limit))
            return false;
    }
    return realized;
}

}  // namespace kfm
