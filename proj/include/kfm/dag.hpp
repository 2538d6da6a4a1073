#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kfm/structure.hpp"

namespace kfm {

// Finite dag on vertices 0..size-1.  Construction rejects self-loops and
// cycles, so every value of this type is genuinely acyclic.  Edges are kept
// sorted and deduplicated; out/in are the forward and backward adjacency.
struct Dag {
    int size = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<std::vector<int>> out, in;

    Dag() = default;
    Dag(int n, std::vector<std::pair<int, int>> es) : size(n) {
        if (n < 0) throw std::invalid_argument("vertex count must be >= 0");
        std::sort(es.begin(), es.end());
        es.erase(std::unique(es.begin(), es.end()), es.end());
        out.assign(n, {});
        in.assign(n, {});
        for (auto [u, v] : es) {
            if (u < 0 || u >= n || v < 0 || v >= n) throw std::invalid_argument("edge endpoint out of range");
            if (u == v) throw std::invalid_argument("self-loops are not allowed");
            out[u].push_back(v);
            in[v].push_back(u);
        }
        edges = std::move(es);
        std::vector<int> deg(n, 0);
        for (int v = 0; v < n; ++v) deg[v] = static_cast<int>(in[v].size());
        std::vector<int> ready;
        for (int v = 0; v < n; ++v)
            if (deg[v] == 0) ready.push_back(v);
        int seen = 0;
        while (!ready.empty()) {
            int v = ready.back();
            ready.pop_back();
            ++seen;
            for (int w : out[v])
                if (--deg[w] == 0) ready.push_back(w);
        }
        if (seen != n) throw std::invalid_argument("the edges contain a cycle");
    }

    bool has_edge(int u, int v) const {
        return std::binary_search(edges.begin(), edges.end(), std::make_pair(u, v));
    }
    bool adjacent(int u, int v) const { return has_edge(u, v) || has_edge(v, u); }
};

namespace detail {

inline std::vector<char> vertex_mask(const Dag& g, const std::vector<int>& xs, const char* who) {
    std::vector<char> mask(g.size, 0);
    for (int v : xs) {
        if (v < 0 || v >= g.size) throw std::invalid_argument(std::string(who) + " contains an unknown vertex");
        mask[v] = 1;
    }
    return mask;
}

// Vertices with a descendant in the masked set: reverse reachability.
inline std::vector<char> reaches_into(const Dag& g, const std::vector<char>& target) {
    std::vector<char> seen(g.size, 0);
    std::vector<int> stack;
    for (int v = 0; v < g.size; ++v)
        if (target[v]) {
            seen[v] = 1;
            stack.push_back(v);
        }
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : g.in[v])
            if (!seen[w]) {
                seen[w] = 1;
                stack.push_back(w);
            }
    }
    return seen;
}

}  // namespace detail

// X together with everything reachable from X along directed edges.
inline std::vector<int> descendants(const Dag& g, const std::vector<int>& xs) {
    std::vector<char> seen = detail::vertex_mask(g, xs, "the descendant query");
    std::vector<int> stack;
    for (int v = 0; v < g.size; ++v)
        if (seen[v]) stack.push_back(v);
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : g.out[v])
            if (!seen[w]) {
                seen[w] = 1;
                stack.push_back(w);
            }
    }
    std::vector<int> res;
    for (int v = 0; v < g.size; ++v)
        if (seen[v]) res.push_back(v);
    return res;
}

// A trail is a walk in the underlying undirected graph; vertices may repeat.
using Trail = std::vector<int>;

inline bool is_trail(const Dag& g, const Trail& t) {
    if (t.empty()) return false;
    for (int v : t)
        if (v < 0 || v >= g.size) return false;
    for (std::size_t i = 0; i + 1 < t.size(); ++i)
        if (!g.adjacent(t[i], t[i + 1])) return false;
    return true;
}

enum class Junction { HeadToTail, TailToTail, HeadToHead };

inline const char* junction_name(Junction j) {
    switch (j) {
        case Junction::HeadToTail: return "head-to-tail";
        case Junction::TailToTail: return "tail-to-tail";
        default: return "head-to-head";
    }
}

// Junction type of the interior position i of a trail (0-based, so
// 1 <= i <= |t|-2).  Exactly one clause holds, because each trail step uses
// exactly one of the two edge directions.
inline Junction classify(const Dag& g, const Trail& t, int i) {
    if (i < 1 || i + 1 >= static_cast<int>(t.size())) throw std::out_of_range("junction index must be interior");
    const bool left_fwd = g.has_edge(t[i - 1], t[i]);
    const bool left_back = g.has_edge(t[i], t[i - 1]);
    const bool right_fwd = g.has_edge(t[i], t[i + 1]);
    const bool right_back = g.has_edge(t[i + 1], t[i]);
    if ((!left_fwd && !left_back) || (!right_fwd && !right_back))
        throw std::invalid_argument("the sequence is not a trail at that position");
    if (left_fwd && right_back) return Junction::HeadToHead;
    if (left_back && right_fwd) return Junction::TailToTail;
    return Junction::HeadToTail;
}

// A trail is blocked by Z when some interior position is a chain or fork
// vertex lying in Z, or a collider vertex none of whose descendants lies
// in Z.
inline bool is_blocked(const Dag& g, const Trail& t, const std::vector<int>& z) {
    if (!is_trail(g, t)) throw std::invalid_argument("the sequence is not a trail");
    std::vector<char> inz = detail::vertex_mask(g, z, "the conditioning set");
    std::vector<char> anc = detail::reaches_into(g, inz);
    for (int i = 1; i + 1 < static_cast<int>(t.size()); ++i) {
        bool blocked_here = classify(g, t, i) == Junction::HeadToHead ? !anc[t[i]] : inz[t[i]] != 0;
        if (blocked_here) return true;
    }
    return false;
}

// X and Y are d-separated by Z when X and Y only meet inside Z and every
// trail from X\Z to Y\Z is Z-blocked.  Decided by a linear sweep over
// (vertex, arrival direction) states: arriving along an edge into v can
// continue forward (or turn back when some descendant of v lies in Z),
// arriving along an edge out of v can continue either way; chain and fork
// vertices inside Z stop the walk.  A start vertex never lies in Z, so
// seeding both arrival states makes its departures unconstrained.
inline bool d_separated(const Dag& g, const std::vector<int>& x, const std::vector<int>& y,
                        const std::vector<int>& z) {
    std::vector<char> inx = detail::vertex_mask(g, x, "X");
    std::vector<char> iny = detail::vertex_mask(g, y, "Y");
    std::vector<char> inz = detail::vertex_mask(g, z, "Z");
    for (int v = 0; v < g.size; ++v)
        if (inx[v] && iny[v] && !inz[v]) return false;
    std::vector<char> anc = detail::reaches_into(g, inz);
    std::vector<char> vis_head(g.size, 0), vis_tail(g.size, 0);
    std::vector<std::pair<int, int>> stack;
    auto push = [&](int v, int dir) {
        std::vector<char>& vis = dir == 0 ? vis_head : vis_tail;
        if (!vis[v]) {
            vis[v] = 1;
            stack.emplace_back(v, dir);
        }
    };
    for (int s = 0; s < g.size; ++s)
        if (inx[s] && !inz[s]) {
            push(s, 0);
            push(s, 1);
        }
    while (!stack.empty()) {
        auto [v, dir] = stack.back();
        stack.pop_back();
        if (iny[v] && !inz[v]) return false;
        if (!inz[v])
            for (int w : g.out[v]) push(w, 0);
        bool may_turn = dir == 0 ? anc[v] != 0 : !inz[v];
        if (may_turn)
            for (int w : g.in[v]) push(w, 1);
    }
    return true;
}

// Exhaustive cross-check: depth-first enumeration of trails whose interior
// junctions are all passable, pruning a walk once it would repeat a
// (vertex, arrival direction) state and capping length at 2|V|.  A shortest
// unblocked trail enters its endpoints once and every other vertex at most
// twice, so neither cut can hide one.
inline bool d_separated_oracle(const Dag& g, const std::vector<int>& x, const std::vector<int>& y,
                               const std::vector<int>& z) {
    std::vector<char> inx = detail::vertex_mask(g, x, "X");
    std::vector<char> iny = detail::vertex_mask(g, y, "Y");
    std::vector<char> inz = detail::vertex_mask(g, z, "Z");
    for (int v = 0; v < g.size; ++v)
        if (inx[v] && iny[v] && !inz[v]) return false;
    std::vector<char> anc = detail::reaches_into(g, inz);
    const int cap = 2 * g.size;
    std::vector<std::pair<int, int>> path;
    bool found = false;
    auto on_path = [&](int v, int dir) {
        return std::find(path.begin(), path.end(), std::make_pair(v, dir)) != path.end();
    };
    auto dfs = [&](auto&& self, int v, int dir) -> void {
        if (iny[v] && !inz[v]) {
            found = true;
            return;
        }
        if (static_cast<int>(path.size()) >= cap) return;
        bool pass_ahead = true, pass_back = true;
        if (path.size() > 1) {
            pass_ahead = !inz[v];
            pass_back = dir == 0 ? anc[v] != 0 : !inz[v];
        }
        if (pass_ahead)
            for (int w : g.out[v]) {
                if (on_path(w, 0)) continue;
                path.emplace_back(w, 0);
                self(self, w, 0);
                path.pop_back();
                if (found) return;
            }
        if (pass_back)
            for (int w : g.in[v]) {
                if (on_path(w, 1)) continue;
                path.emplace_back(w, 1);
                self(self, w, 1);
                path.pop_back();
                if (found) return;
            }
    };
    for (int s = 0; s < g.size && !found; ++s)
        if (inx[s] && !inz[s]) {
            path.assign(1, {s, -1});
            dfs(dfs, s, -1);
        }
    return !found;
}

// Dag plus stable vertex names, as stored in dag files: `node <id>` lines
// first, then `edge <from> <to>` lines.  Names are arbitrary tokens.
struct NamedDag {
    Dag g;
    std::vector<std::string> names;
    std::map<std::string, int> index;

    int vertex(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw std::invalid_argument("unknown vertex: " + name);
        return it->second;
    }
};

inline NamedDag parse_dag(const std::string& text) {
    NamedDag nd;
    std::vector<std::pair<int, int>> edges;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool saw_edge = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::vector<std::string> tok = detail::tokenize_line(line);
        if (tok.empty()) continue;
        if (tok[0] == "node") {
            if (saw_edge) throw ParseError(lineno, "node lines must precede edge lines");
            if (tok.size() != 2) throw ParseError(lineno, "expected: node <id>");
            if (nd.index.count(tok[1])) throw ParseError(lineno, "duplicate node: " + tok[1]);
            nd.index.emplace(tok[1], static_cast<int>(nd.names.size()));
            nd.names.push_back(tok[1]);
        } else if (tok[0] == "edge") {
            saw_edge = true;
            if (tok.size() != 3) throw ParseError(lineno, "expected: edge <from> <to>");
            auto from = nd.index.find(tok[1]);
            if (from == nd.index.end()) throw ParseError(lineno, "unknown vertex: " + tok[1]);
            auto to = nd.index.find(tok[2]);
            if (to == nd.index.end()) throw ParseError(lineno, "unknown vertex: " + tok[2]);
            edges.emplace_back(from->second, to->second);
        } else if (tok[0] == "label") {
            // construction graph exports carry annotations; the dag keeps none
            if (tok.size() < 2) throw ParseError(lineno, "expected: label <vertex> <tree>");
            if (!nd.index.count(tok[1])) throw ParseError(lineno, "unknown vertex: " + tok[1]);
        } else {
            throw ParseError(lineno, "unknown directive: " + tok[0]);
        }
    }
    try {
        nd.g = Dag(static_cast<int>(nd.names.size()), std::move(edges));
    } catch (const std::invalid_argument& e) {
        throw ParseError(lineno, e.what());
    }
    return nd;
}

inline std::string serialize_dag(const NamedDag& nd) {
    std::string out;
    for (const std::string& name : nd.names) out += "node " + name + "\n";
    for (auto [u, v] : nd.g.edges) out += "edge " + nd.names[u] + " " + nd.names[v] + "\n";
    return out;
}

}  // namespace kfm
